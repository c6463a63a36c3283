//! The Lieb-type kernel `K(l|eta) = sin(2 eta) / (pi (cosh 2l - cos 2eta))`,
//! its bound-state combinations, the bare phases obtained by integrating it
//! along a fixed two-segment path, and the integer bookkeeping of strings.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Result, XxzError};

/// Beyond this real part every kernel value underflows to zero; evaluating
/// `cosh` there would overflow instead.
const FAR_FIELD: f64 = 300.0;

/// Distance below which a kernel evaluation is refused.
pub const POLE_GUARD: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Anisotropy and kernel parameter, with a flag for near-rational `zeta/pi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub zeta: f64,
    pub eta: f64,
    pub near_rational: bool,
}

impl KernelParams {
    pub fn new(zeta: f64, eta: f64) -> Result<Self> {
        validate_zeta(zeta)?;
        if !eta.is_finite() {
            return Err(XxzError::InvalidArgument(format!("eta must be finite, got {eta}")));
        }
        Ok(Self {
            zeta,
            eta,
            near_rational: is_near_rational(zeta / PI),
        })
    }
}

pub(crate) fn validate_zeta(zeta: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta < PI) {
        return Err(XxzError::InvalidArgument(format!(
            "anisotropy angle must lie in (0, pi), got {zeta}"
        )));
    }
    Ok(())
}

/// True when `x` is within 1e-9 of a fraction with denominator at most 24.
pub fn is_near_rational(x: f64) -> bool {
    (1..=24u32).any(|den| {
        let num = (x * den as f64).round();
        (x - num / den as f64).abs() < 1e-9
    })
}

/// Distance from `z` to the lattice `c + i pi Z`.
pub fn distance_to_lattice(z: Complex64, c: Complex64) -> f64 {
    let re = z.re - c.re;
    let im = (z.im - c.im).rem_euclid(PI);
    let im = im.min(PI - im);
    re.hypot(im)
}

/// Distance from `z` to the nearest pole `+-i eta + i pi k` of `K(.|eta)`.
pub fn pole_distance(z: Complex64, eta: f64) -> f64 {
    distance_to_lattice(z, I * eta).min(distance_to_lattice(z, -I * eta))
}

fn kernel_is_null(eta: f64) -> bool {
    (2.0 * eta).sin().abs() < 1e-15
}

/// `K(x|eta)` for real `x`; the Nystrom hot path.
#[inline]
pub fn kernel_real(x: f64, eta: f64) -> f64 {
    if x.abs() > FAR_FIELD {
        return 0.0;
    }
    let s = (2.0 * eta).sin();
    if s.abs() < 1e-15 {
        return 0.0;
    }
    s / (PI * ((2.0 * x).cosh() - (2.0 * eta).cos()))
}

/// `dK/dx` for real `x`.
#[inline]
pub fn kernel_real_d1(x: f64, eta: f64) -> f64 {
    if x.abs() > FAR_FIELD {
        return 0.0;
    }
    let s = (2.0 * eta).sin();
    if s.abs() < 1e-15 {
        return 0.0;
    }
    let d = (2.0 * x).cosh() - (2.0 * eta).cos();
    -2.0 * s * (2.0 * x).sinh() / (PI * d * d)
}

/// `K(l|eta)` without the pole check; callers guarantee the distance.
#[inline]
pub fn kernel_unchecked(lambda: Complex64, eta: f64) -> Complex64 {
    if lambda.re.abs() > FAR_FIELD {
        return Complex64::new(0.0, 0.0);
    }
    let s = (2.0 * eta).sin();
    if s.abs() < 1e-15 {
        return Complex64::new(0.0, 0.0);
    }
    let d = (2.0 * lambda).cosh() - (2.0 * eta).cos();
    Complex64::new(s / PI, 0.0) / d
}

/// First `l`-derivative of `K(l|eta)`, unchecked.
#[inline]
pub fn kernel_d1_unchecked(lambda: Complex64, eta: f64) -> Complex64 {
    if lambda.re.abs() > FAR_FIELD {
        return Complex64::new(0.0, 0.0);
    }
    let s = (2.0 * eta).sin();
    if s.abs() < 1e-15 {
        return Complex64::new(0.0, 0.0);
    }
    let d = (2.0 * lambda).cosh() - (2.0 * eta).cos();
    -(2.0 * lambda).sinh() * (2.0 * s / PI) / (d * d)
}

/// Second `l`-derivative of `K(l|eta)`, unchecked.
#[inline]
pub fn kernel_d2_unchecked(lambda: Complex64, eta: f64) -> Complex64 {
    if lambda.re.abs() > FAR_FIELD {
        return Complex64::new(0.0, 0.0);
    }
    let s = (2.0 * eta).sin();
    if s.abs() < 1e-15 {
        return Complex64::new(0.0, 0.0);
    }
    let ch = (2.0 * lambda).cosh();
    let sh = (2.0 * lambda).sinh();
    let d = ch - (2.0 * eta).cos();
    -(ch * d * 4.0 - sh * sh * 8.0) * (s / PI) / (d * d * d)
}

/// `K(l|eta)`; refuses points within [`POLE_GUARD`] of a pole.
pub fn kernel_k(lambda: Complex64, eta: f64) -> Result<Complex64> {
    if kernel_is_null(eta) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let distance = pole_distance(lambda, eta);
    if distance < POLE_GUARD {
        return Err(XxzError::PoleProximity {
            point: lambda,
            distance,
        });
    }
    Ok(kernel_unchecked(lambda, eta))
}

/// The two kernel parameters `(r+1) zeta/2` and `(r-1) zeta/2` of `K_r`.
#[inline]
pub fn bound_state_etas(r: u32, zeta: f64) -> (f64, f64) {
    (0.5 * (r as f64 + 1.0) * zeta, 0.5 * (r as f64 - 1.0) * zeta)
}

/// `K_r(l) = K(l|(r+1)zeta/2) + K(l|(r-1)zeta/2)`.
pub fn kernel_kr(lambda: Complex64, r: u32, zeta: f64) -> Result<Complex64> {
    check_r(r)?;
    let (a, b) = bound_state_etas(r, zeta);
    Ok(kernel_k(lambda, a)? + kernel_k(lambda, b)?)
}

fn check_r(r: u32) -> Result<()> {
    if r == 0 {
        return Err(XxzError::InvalidArgument("string length must be at least 1".into()));
    }
    Ok(())
}

/// `ln sinh z` on some branch, without overflow for large `|Re z|`.
fn ln_sinh(z: Complex64) -> Complex64 {
    if z.re >= 0.0 {
        z - std::f64::consts::LN_2 + (Complex64::new(1.0, 0.0) - (-2.0 * z).exp()).ln()
    } else {
        ln_sinh(-z) + I * PI
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Continuous increment of `ln sinh(mu - c)` along the straight piece `[a, b]`.
/// Pieces are halved until they are short against the distance to the zeros
/// `c + i pi k`, so each principal-branch difference is the true increment.
fn ln_sinh_increment(a: Complex64, b: Complex64, c: Complex64, depth: u32) -> Result<Complex64> {
    let da = distance_to_lattice(a, c);
    let db = distance_to_lattice(b, c);
    if da < POLE_GUARD || db < POLE_GUARD {
        return Err(XxzError::ContourFailure(format!(
            "phase path vertex within {:.1e} of a kernel pole",
            da.min(db)
        )));
    }
    let len = (b - a).norm();
    if (len < 0.5 * da.min(db) && len < 0.5) || depth > 60 {
        let diff = ln_sinh(b - c) - ln_sinh(a - c);
        return Ok(Complex64::new(diff.re, wrap_phase(diff.im)));
    }
    let mid = (a + b) * 0.5;
    Ok(ln_sinh_increment(a, mid, c, depth + 1)? + ln_sinh_increment(mid, b, c, depth + 1)?)
}

/// Vertices of the phase path from 0 to `lambda`: up the imaginary axis, then
/// horizontally. Kernel poles on the vertical leg are passed on their left.
fn phase_path(lambda: Complex64, eta: f64) -> Result<Vec<Complex64>> {
    let y = lambda.im;
    let top = Complex64::new(0.0, y);
    let mut vertices = vec![Complex64::new(0.0, 0.0)];
    if y != 0.0 {
        // Poles on the imaginary axis strictly between 0 and iy.
        let (lo, hi) = if y > 0.0 { (0.0, y) } else { (y, 0.0) };
        let mut poles = Vec::new();
        for base in [eta, -eta] {
            let k_min = ((lo - base) / PI).floor() as i64 - 1;
            let k_max = ((hi - base) / PI).ceil() as i64 + 1;
            for k in k_min..=k_max {
                let t = base + PI * k as f64;
                if t > lo - POLE_GUARD && t < hi + POLE_GUARD {
                    if t.abs() < POLE_GUARD || (t - y).abs() < POLE_GUARD {
                        return Err(XxzError::ContourFailure(format!(
                            "phase path endpoint i*{t} is a kernel pole"
                        )));
                    }
                    poles.push(t);
                }
            }
        }
        poles.sort_by(|a, b| if y > 0.0 { a.total_cmp(b) } else { b.total_cmp(a) });
        poles.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        for (idx, &t) in poles.iter().enumerate() {
            let prev = if idx == 0 { 0.0 } else { poles[idx - 1] };
            let next = poles.get(idx + 1).copied().unwrap_or(y);
            let rho = 0.1f64.min(0.5 * (t - prev).abs()).min(0.5 * (next - t).abs());
            vertices.push(Complex64::new(-rho, t));
        }
        vertices.push(top);
    }
    if lambda.re != 0.0 {
        vertices.push(lambda);
    }
    Ok(vertices)
}

/// Bare phase `theta(l|eta) = 2 pi int K(mu|eta) dmu` along the phase path.
///
/// Uses `2 pi K(mu|eta) = -i [coth(mu - i eta) - coth(mu + i eta)]`, so the
/// integral is a difference of continuously tracked `ln sinh` increments.
pub fn bare_phase_1(lambda: Complex64, eta: f64) -> Result<Complex64> {
    if kernel_is_null(eta) || lambda == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if lambda.re.abs() > FAR_FIELD {
        // The kernel is negligible past the far field; evaluate at its edge.
        let clipped = Complex64::new(FAR_FIELD.copysign(lambda.re), lambda.im);
        return bare_phase_1(clipped, eta);
    }
    let vertices = phase_path(lambda, eta)?;
    let c_minus = I * eta;
    let c_plus = -I * eta;
    let mut total = Complex64::new(0.0, 0.0);
    for pair in vertices.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        total += ln_sinh_increment(a, b, c_minus, 0)? - ln_sinh_increment(a, b, c_plus, 0)?;
    }
    Ok(-I * total)
}

/// `theta_r = theta(.|(r+1)zeta/2) + theta(.|(r-1)zeta/2)`.
pub fn bare_phase(lambda: Complex64, r: u32, zeta: f64) -> Result<Complex64> {
    check_r(r)?;
    let (a, b) = bound_state_etas(r, zeta);
    Ok(bare_phase_1(lambda, a)? + bare_phase_1(lambda, b)?)
}

/// Reduction of an angle to `[0, pi)`.
pub fn reduced_angle(eta: f64) -> f64 {
    eta - PI * (eta / PI).floor()
}

/// Integer data attached to an `r`-string.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StringCombinatorics {
    pub r: u32,
    pub ell_r: i64,
    pub m_r: i64,
    pub kappa_r: i64,
    /// `sgn sin(k zeta)` for `k = 1..=r`.
    pub s_k: Vec<i8>,
}

fn floor_i(x: f64) -> i64 {
    x.floor() as i64
}

pub fn sign_of(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn string_combinatorics(r: u32, zeta: f64) -> Result<StringCombinatorics> {
    check_r(r)?;
    validate_zeta(zeta)?;
    let rf = r as f64;
    let ell_r = 1 - r as i64 + 2 * floor_i(rf * zeta / (2.0 * PI));
    let delta = i64::from(r == 1);
    let m_r = 2 - r as i64 - delta
        + 2 * (floor_i(zeta * (rf + 1.0) / (2.0 * PI)) + floor_i(zeta * (rf - 1.0) / (2.0 * PI)));
    let kappa_r = floor_i((rf - 1.0) * zeta / PI);
    let s_k = (1..=r).map(|k| sign_of((k as f64 * zeta).sin())).collect();
    Ok(StringCombinatorics {
        r,
        ell_r,
        m_r,
        kappa_r,
        s_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn closed_real_phase(x: f64, eta: f64) -> f64 {
        2.0 * (x.tanh() / eta.tan()).atan()
    }

    #[test]
    fn kernel_examples() {
        assert_relative_eq!(kernel_k(c(0.0, 0.0), PI / 4.0).unwrap().re, 1.0 / PI, epsilon = 1e-15);
        assert_eq!(kernel_k(c(0.0, 0.0), PI / 2.0).unwrap(), c(0.0, 0.0));
        let z = c(0.3, 0.1);
        let a = kernel_k(z, 0.4).unwrap();
        let b = kernel_k(z + c(0.0, PI), 0.4).unwrap();
        assert!((a - b).norm() < 1e-14);
        let e = kernel_k(c(0.0, 0.4), 0.4).unwrap_err();
        assert_eq!(e.kind(), "pole-proximity");
    }

    #[test]
    fn kernel_matches_product_form() {
        let eta: f64 = 0.7;
        for z in [c(0.2, 0.3), c(-1.1, 0.9), c(2.0, -0.4)] {
            let product = (2.0 * eta).sin() / (2.0 * PI * (z + I * eta).sinh() * (z - I * eta).sinh());
            assert!((kernel_k(z, eta).unwrap() - product).norm() < 1e-14);
        }
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let eta = 0.9;
        let h = 1e-5;
        for z in [c(0.3, 0.0), c(-0.8, 0.4), c(1.5, PI / 2.0)] {
            let fd1 = (kernel_unchecked(z + h, eta) - kernel_unchecked(z - h, eta)) / (2.0 * h);
            let fd2 = (kernel_d1_unchecked(z + h, eta) - kernel_d1_unchecked(z - h, eta)) / (2.0 * h);
            assert!((fd1 - kernel_d1_unchecked(z, eta)).norm() < 1e-8);
            assert!((fd2 - kernel_d2_unchecked(z, eta)).norm() < 1e-8);
        }
        assert_relative_eq!(kernel_real_d1(0.4, eta), kernel_d1_unchecked(c(0.4, 0.0), eta).re, epsilon = 1e-15);
    }

    #[test]
    fn kr_examples() {
        let zeta = 0.37 * PI;
        let z = c(0.45, 0.2);
        assert!((kernel_kr(z, 1, zeta).unwrap() - kernel_k(z, zeta).unwrap()).norm() < 1e-15);
        assert!(kernel_kr(c(0.0, 0.0), 2, PI / 2.0).unwrap().norm() < 1e-15);
        let k3 = |x: f64| kernel_kr(c(x, 0.0), 3, 0.3 * PI).unwrap();
        assert!((k3(0.7) - k3(-0.7)).norm() < 1e-14);
    }

    #[test]
    fn phase_examples() {
        assert_eq!(bare_phase_1(c(0.0, 0.0), 0.3).unwrap(), c(0.0, 0.0));
        let v = bare_phase_1(c(1.0, 0.0), PI / 3.0).unwrap();
        assert_relative_eq!(v.re, closed_real_phase(1.0, PI / 3.0), epsilon = 1e-12);
        assert_relative_eq!(v.re, 0.829, epsilon = 1e-3);
        let far = bare_phase_1(c(20.0, 0.0), PI / 3.0).unwrap();
        assert!((far.re - PI / 3.0).abs() < 1e-8);
    }

    #[test]
    fn phase_matches_direct_quadrature() {
        let eta = 0.35;
        let q = crate::quadrature::gauss_legendre(200, 0.0, 3.0).unwrap();
        let direct = q.integrate(|x| 2.0 * PI * kernel_real(x, eta));
        assert_relative_eq!(bare_phase_1(c(3.0, 0.0), eta).unwrap().re, direct, epsilon = 1e-12);
    }

    #[test]
    fn phase_derivative_is_kernel_off_axis() {
        // Along a horizontal line the phase differentiates back to 2 pi K.
        let eta = 0.8;
        let h = 1e-5;
        for z in [c(0.4, PI / 2.0), c(-1.2, 0.3), c(0.9, -1.3)] {
            let fd = (bare_phase_1(z + h, eta).unwrap() - bare_phase_1(z - h, eta).unwrap()) / (2.0 * h);
            assert!((fd - kernel_unchecked(z, eta) * (2.0 * PI)).norm() < 1e-7, "{z}");
        }
    }

    #[test]
    fn phase_is_real_on_the_half_period_line() {
        for eta in [0.2, 0.9, 1.3, 2.0, 2.7] {
            for x in [-3.0, -0.4, 0.7, 2.5] {
                let v = bare_phase_1(c(x, PI / 2.0), eta).unwrap();
                assert!(v.im.abs() < 1e-10, "eta {eta} x {x} -> {v}");
            }
        }
    }

    #[test]
    fn phase_detours_match_left_shifted_quadrature() {
        // The vertical leg from 0 to 1.2i crosses the pole at 0.5i; passing it
        // on the left equals integrating along Re mu = -0.05 directly.
        let eta = 0.5;
        let lambda = c(0.6, 1.2);
        let path = crate::quadrature::Polyline::new(vec![
            c(0.0, 0.0),
            c(-0.05, 0.0),
            c(-0.05, 1.2),
            c(0.0, 1.2),
            lambda,
        ])
        .unwrap();
        let direct = crate::quadrature::integrate_polyline(
            |z| kernel_unchecked(z, eta) * (2.0 * PI),
            &path,
            200,
        )
        .unwrap();
        let v = bare_phase_1(lambda, eta).unwrap();
        assert!((v - direct).norm() < 1e-9, "{v} vs {direct}");
    }

    #[test]
    fn phase_rejects_poles_at_path_corners() {
        let e = bare_phase_1(c(0.3, 0.5), 0.5).unwrap_err();
        assert_eq!(e.kind(), "contour-failure");
    }

    #[test]
    fn combinatorics_examples() {
        for zeta in [0.1, 1.0, 2.0, 3.1] {
            let s1 = string_combinatorics(1, zeta).unwrap();
            assert_eq!((s1.ell_r, s1.m_r), (0, 0));
            assert_eq!(string_combinatorics(2, zeta).unwrap().ell_r, -1);
        }
        assert_eq!(string_combinatorics(3, 0.3 * PI).unwrap().kappa_r, 0);
    }

    #[test]
    fn sign_table_matches_direct_evaluation() {
        let zeta = 0.5365 * PI;
        let s = string_combinatorics(8, zeta).unwrap();
        for k in 1..=8usize {
            let direct = if (k as f64 * zeta).sin() > 0.0 { 1 } else { -1 };
            assert_eq!(s.s_k[k - 1], direct);
        }
    }

    #[test]
    fn near_rational_flag() {
        assert!(KernelParams::new(PI / 3.0, 0.1).unwrap().near_rational);
        assert!(!KernelParams::new(0.5365 * PI, 0.1).unwrap().near_rational);
        assert!(KernelParams::new(PI, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn kernel_periodic_and_even(x in -4.0f64..4.0, y in -1.5f64..1.5, eta in 0.05f64..3.0) {
            let z = c(x, y);
            prop_assume!(pole_distance(z, eta) > 1e-3);
            let k = kernel_k(z, eta).unwrap();
            let kp = kernel_k(z + c(0.0, PI), eta).unwrap();
            let km = kernel_k(-z, eta).unwrap();
            let scale = k.norm().max(1.0);
            prop_assert!((k - kp).norm() <= 1e-13 * scale);
            prop_assert!((k - km).norm() <= 1e-13 * scale);
        }

        #[test]
        fn real_phase_matches_closed_form(x in -5.0f64..5.0, pick in 0usize..3) {
            let eta = [PI / 6.0, PI / 4.0, PI / 3.0][pick];
            let v = bare_phase_1(c(x, 0.0), eta).unwrap();
            prop_assert!((v.re - closed_real_phase(x, eta)).abs() < 1e-9);
            prop_assert!(v.im.abs() < 1e-12);
        }

        #[test]
        fn bound_phase_is_odd_on_the_real_line(x in 0.01f64..6.0, r in 1u32..9, zeta in 0.05f64..3.09) {
            let a = bare_phase(c(x, 0.0), r, zeta).unwrap();
            let b = bare_phase(c(-x, 0.0), r, zeta).unwrap();
            prop_assert!((a + b).norm() < 1e-10);
        }

        #[test]
        fn combinatorics_floor_formulas(r in 1u32..12, zeta in 0.01f64..3.13) {
            let s = string_combinatorics(r, zeta).unwrap();
            prop_assert_eq!(s.kappa_r, ((r as f64 - 1.0) * zeta / PI).floor() as i64);
            prop_assert_eq!(s.s_k.len(), r as usize);
        }
    }
}
