//! Stationary points of the phase functions `u_r(lambda, v) = p_r - epsilon_r / v`.
//!
//! Species label the carrier lines: `0` is the real line and `1` the line
//! `R + i pi/2`, both for the 1-string; `r >= 2` is the carrier line of the
//! `r`-string. Zeros of `u_r'` are located by a sign-change scan on a fixed
//! grid over `[-L, L]` and polished by Brent's method. Beyond `L` the
//! derivative behaves like `p_r'(lambda) (1 -+ v_inf / v)`, which has a fixed
//! sign, so no zero is lost there unless `v` sits close to `v_inf`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dressed::DressedSet;
use crate::error::{Result, XxzError};
use crate::quadrature::find_root_bracketed;
use crate::strings::string_exists;

/// Half width of the scanned window on each carrier line.
pub const SCAN_HALF_WIDTH: f64 = 15.0;
/// Number of scan points on `[-L, L]`.
pub const SCAN_POINTS: usize = 2000;
/// `|v|` closer than this fraction of `v_inf` to `v_F` or `v_inf` is refused.
pub const CRITICAL_GUARD: f64 = 1e-6;
/// Resolution of the threshold velocities, as a fraction of `v_inf`.
pub const THRESHOLD_RESOLUTION: f64 = 1e-3;
/// Real part at which the asymptotic sign of `Im u_r` is probed.
pub const INFINITY_PROBE: f64 = 12.0;

const DEGENERATE_CURVATURE: f64 = 1e-8;

/// A zero of `u_r'` on a carrier line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddlePoint {
    /// Carrier-line label, see the module documentation.
    pub species: u32,
    /// String length whose phase function is stationary here.
    pub r: u32,
    pub omega: Complex64,
    pub u_value: Complex64,
    /// `u_r''(omega)`, real on the carrier line.
    pub u_second: f64,
    /// `sgn u_r''(omega)`.
    pub eps_sign: i8,
    /// Curvature scale `sqrt(|u''| / 2)`.
    pub scale: f64,
    /// `sgn p_r'(omega)`.
    pub p_prime_sign: i8,
}

/// `(r, Im)` of the carrier line of a species.
pub fn carrier_line(species: u32, zeta: f64) -> Result<(u32, f64)> {
    match species {
        0 => Ok((1, 0.0)),
        1 => Ok((1, FRAC_PI_2)),
        r => {
            let spec = string_exists(r, zeta)?;
            match spec.line_offset() {
                Some(offset) if spec.exists => Ok((r, offset)),
                _ => Err(XxzError::InvalidString { r, zeta }),
            }
        }
    }
}

fn check_velocity(v: f64) -> Result<()> {
    if !v.is_finite() || v == 0.0 {
        return Err(XxzError::InvalidArgument(format!("velocity ratio must be finite and non-zero, got {v}")));
    }
    Ok(())
}

/// `u_r(lambda, v)`; `r = 0` is read as the 1-string.
pub fn u_r(lambda: Complex64, v: f64, r: u32, ds: &DressedSet) -> Result<Complex64> {
    check_velocity(v)?;
    let r = r.max(1);
    Ok(ds.momentum(r, lambda)? - ds.energy(r, lambda)? / v)
}

/// `d/d lambda u_r(lambda, v)`.
pub fn u_r_d1(lambda: Complex64, v: f64, r: u32, ds: &DressedSet) -> Result<Complex64> {
    check_velocity(v)?;
    let r = r.max(1);
    Ok(ds.momentum_d1(r, lambda)? - ds.energy_d1(r, lambda)? / v)
}

/// `d^2/d lambda^2 u_r(lambda, v)`.
pub fn u_r_d2(lambda: Complex64, v: f64, r: u32, ds: &DressedSet) -> Result<Complex64> {
    check_velocity(v)?;
    let r = r.max(1);
    Ok(ds.momentum_d2(r, lambda)? - ds.energy_d2(r, lambda)? / v)
}

pub fn fermi_velocity(ds: &DressedSet) -> Result<f64> {
    ds.fermi_velocity()
}

pub fn v_infinity(ds: &DressedSet) -> Result<f64> {
    ds.v_infinity()
}

/// Refuses `v` within the guard band around `+-v_F` and `+-v_inf`.
pub fn check_not_critical(v: f64, v_fermi: f64, v_inf: f64) -> Result<()> {
    check_velocity(v)?;
    let band = CRITICAL_GUARD * v_inf;
    for critical in [v_fermi, v_inf] {
        if (v.abs() - critical).abs() <= band {
            return Err(XxzError::NearCritical { v, critical });
        }
    }
    Ok(())
}

/// `p'` and `epsilon'` sampled on the scan grid of one carrier line, so that
/// zero counts for any `v` cost one pass over the samples.
#[derive(Clone, Debug)]
pub struct LineProfile {
    pub species: u32,
    pub r: u32,
    pub offset: f64,
    pub xs: Vec<f64>,
    pub p_prime: Vec<f64>,
    pub e_prime: Vec<f64>,
}

impl LineProfile {
    pub fn sample(species: u32, ds: &DressedSet) -> Result<Self> {
        let (r, offset) = carrier_line(species, ds.zeta())?;
        let step = 2.0 * SCAN_HALF_WIDTH / (SCAN_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| -SCAN_HALF_WIDTH + step * i as f64).collect();
        let pairs = xs
            .par_iter()
            .map(|&x| {
                let l = Complex64::new(x, offset);
                Ok((ds.momentum_d1(r, l)?.re, ds.energy_d1(r, l)?.re))
            })
            .collect::<Result<Vec<_>>>()?;
        let (p_prime, e_prime) = pairs.into_iter().unzip();
        Ok(Self {
            species,
            r,
            offset,
            xs,
            p_prime,
            e_prime,
        })
    }

    fn derivative(&self, i: usize, v: f64) -> f64 {
        self.p_prime[i] - self.e_prime[i] / v
    }

    /// Brackets `(a, b)` of the zeros of `u'` at velocity `v`; exact zeros on
    /// a sample come back as `(x, x)`.
    pub fn brackets(&self, v: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let n = self.xs.len();
        for i in 0..n {
            let f = self.derivative(i, v);
            if f == 0.0 {
                out.push((self.xs[i], self.xs[i]));
                continue;
            }
            if i + 1 < n {
                let g = self.derivative(i + 1, v);
                if g != 0.0 && f.signum() != g.signum() {
                    out.push((self.xs[i], self.xs[i + 1]));
                }
            }
        }
        out
    }

    pub fn count(&self, v: f64) -> usize {
        self.brackets(v).len()
    }

    /// Velocity-curve extremum `sup |epsilon' / p'|` over the grid.
    pub fn max_velocity(&self) -> f64 {
        self.p_prime
            .iter()
            .zip(&self.e_prime)
            .map(|(p, e)| (e / p).abs())
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }

    /// Saddles at velocity `v`, polished and annotated.
    pub fn saddles(&self, v: f64, ds: &DressedSet) -> Result<Vec<SaddlePoint>> {
        check_velocity(v)?;
        let (r, offset) = (self.r, self.offset);
        let at = |x: f64| Complex64::new(x, offset);
        let mut out = Vec::new();
        for (a, b) in self.brackets(v) {
            let x = if a == b {
                a
            } else {
                find_root_bracketed(
                    |x| u_r_d1(at(x), v, r, ds).map(|u| u.re).unwrap_or(f64::NAN),
                    a,
                    b,
                    1e-15,
                )?
            };
            let omega = at(x);
            let first = u_r_d1(omega, v, r, ds)?.re;
            let second = u_r_d2(omega, v, r, ds)?.re;
            let curvature_scale = ds.momentum_d2(r, omega)?.re.abs().max(1.0);
            if second.abs() < DEGENERATE_CURVATURE * curvature_scale {
                return Err(XxzError::DegenerateSaddle {
                    species: self.species,
                    omega,
                    u_second: second,
                });
            }
            if first.abs() > 1e-9 * second.abs() {
                return Err(XxzError::ConsistencyFailure(format!(
                    "saddle residual {first:e} at {omega} exceeds 1e-9 |u''| = {:e}",
                    1e-9 * second.abs()
                )));
            }
            let p_prime = ds.momentum_d1(r, omega)?.re;
            out.push(SaddlePoint {
                species: self.species,
                r,
                omega,
                u_value: u_r(omega, v, r, ds)?,
                u_second: second,
                eps_sign: if second > 0.0 { 1 } else { -1 },
                scale: (0.5 * second.abs()).sqrt(),
                p_prime_sign: if p_prime > 0.0 { 1 } else { -1 },
            });
        }
        Ok(out)
    }
}

/// Every zero of `u_r'` on the carrier line(s) of `r`. For the 1-string both
/// `R` (species 0) and `R + i pi/2` (species 1) are scanned.
pub fn find_saddles(r: u32, v: f64, ds: &DressedSet) -> Result<Vec<SaddlePoint>> {
    check_not_critical(v, ds.fermi_velocity()?, ds.v_infinity()?)?;
    let species: Vec<u32> = if r <= 1 { vec![0, 1] } else { vec![r] };
    let mut out = Vec::new();
    for s in species {
        out.extend(LineProfile::sample(s, ds)?.saddles(v, ds)?);
    }
    Ok(out)
}

/// Threshold velocities of one carrier line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub species: u32,
    /// Below this `|v|` the line carries exactly one saddle.
    pub v_lower: f64,
    /// Above this `|v|` the line carries no saddle.
    pub v_upper: f64,
}

/// Bisection on an integer-valued predicate between `good` (true) and
/// `bad` (false) down to `resolution`; returns the last `good` abscissa.
fn bisect_predicate(mut good: f64, mut bad: f64, resolution: f64, pred: impl Fn(f64) -> bool) -> f64 {
    while (bad - good).abs() > resolution {
        let mid = 0.5 * (good + bad);
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

impl LineProfile {
    /// `v^(m)` and `v^(M)` from saddle counts; counts are even in `v`, so
    /// only positive velocities are probed.
    pub fn thresholds(&self, v_inf: f64) -> Thresholds {
        let res = THRESHOLD_RESOLUTION * v_inf;

        // v^(M): past the last velocity with a saddle, scanning upward.
        let steps = 150;
        let mut top = 4.0 * v_inf;
        let grid = |top: f64, k: usize| v_inf + (top - v_inf) * k as f64 / steps as f64;
        while self.count(top) > 0 && top < 1e3 * v_inf {
            top *= 2.0;
        }
        let last = (1..=steps).rev().find(|&k| self.count(grid(top, k)) > 0);
        let v_upper = match last {
            Some(k) if k < steps => bisect_predicate(grid(top, k), grid(top, k + 1), res, |v| self.count(v) > 0),
            Some(_) => f64::INFINITY,
            None => v_inf,
        };

        // v^(m): the first velocity below v_inf where uniqueness fails.
        let mut v_lower = v_inf;
        let mut prev = 1e-2 * v_inf;
        for k in 1..=steps {
            let v = v_inf * (1e-2 + (1.0 - 1e-2 - res / v_inf) * k as f64 / steps as f64);
            if self.count(v) != 1 {
                v_lower = bisect_predicate(prev, v, res, |v| self.count(v) == 1);
                break;
            }
            prev = v;
        }
        Thresholds {
            species: self.species,
            v_lower,
            v_upper,
        }
    }
}

/// Saddles on one carrier line at the classified velocity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineReport {
    pub species: u32,
    pub r: u32,
    pub offset: f64,
    pub saddles: Vec<SaddlePoint>,
    pub count: usize,
    pub thresholds: Thresholds,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub v: f64,
    pub v_fermi: f64,
    pub v_inf: f64,
    pub q: f64,
    pub lines: Vec<LineReport>,
    /// Minimal structure at this `v`: `v_F < v_inf`, one saddle per line for
    /// `|v| < v_inf` and none above.
    pub minimal: bool,
    /// Minimal structure at every `v`: additionally every threshold pair
    /// collapses onto `v_inf` within the resolution.
    pub minimal_all_v: bool,
    /// String lengths `r >= 2` with `|v| < v^(M)_r`.
    pub n_sp: Vec<u32>,
    /// `max_r v^(M)_r`, the edge of the conformal regime.
    pub v_max: f64,
    /// String lengths skipped because `sin(k zeta)` vanishes for some `k <= r`.
    pub degenerate: Vec<u32>,
}

impl StructureReport {
    pub fn line(&self, species: u32) -> Option<&LineReport> {
        self.lines.iter().find(|l| l.species == species)
    }

    /// Parity rule: odd counts for `|v| < v_inf`, even above.
    pub fn parity_holds(&self) -> bool {
        let odd = self.v.abs() < self.v_inf;
        self.lines.iter().all(|l| (l.count % 2 == 1) == odd)
    }
}

/// Species present at `zeta` up to `r_max`, and the degenerate lengths skipped.
pub fn catalogued_species(zeta: f64, r_max: u32) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut species = vec![0, 1];
    let mut degenerate = Vec::new();
    for r in 2..=r_max {
        if (r as f64 * zeta).sin().abs() < 1e-12 {
            degenerate.push(r);
            continue;
        }
        match string_exists(r, zeta) {
            Ok(spec) if spec.exists => species.push(r),
            Ok(_) => {}
            Err(XxzError::DegenerateAnisotropy { .. }) => degenerate.push(r),
            Err(e) => return Err(e),
        }
    }
    Ok((species, degenerate))
}

pub fn classify_structure(v: f64, ds: &DressedSet, r_max: u32) -> Result<StructureReport> {
    let v_fermi = ds.fermi_velocity()?;
    let v_inf = ds.v_infinity()?;
    check_not_critical(v, v_fermi, v_inf)?;
    let (species, degenerate) = catalogued_species(ds.zeta(), r_max)?;
    let lines = species
        .iter()
        .map(|&s| {
            let profile = LineProfile::sample(s, ds)?;
            let saddles = profile.saddles(v, ds)?;
            Ok(LineReport {
                species: s,
                r: profile.r,
                offset: profile.offset,
                count: saddles.len(),
                saddles,
                thresholds: profile.thresholds(v_inf),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let conformal = v.abs() > v_inf;
    let expected = if conformal { 0 } else { 1 };
    let minimal = v_fermi < v_inf && lines.iter().all(|l| l.count == expected);
    let res = THRESHOLD_RESOLUTION * v_inf;
    let minimal_all_v = v_fermi < v_inf
        && lines.iter().all(|l| {
            (l.thresholds.v_upper - v_inf).abs() <= 2.0 * res && (v_inf - l.thresholds.v_lower) <= 2.0 * res
        });
    let n_sp = lines
        .iter()
        .filter(|l| l.species >= 2 && v.abs() < l.thresholds.v_upper)
        .map(|l| l.species)
        .collect();
    let v_max = lines.iter().map(|l| l.thresholds.v_upper).fold(v_inf, f64::max);
    Ok(StructureReport {
        v,
        v_fermi,
        v_inf,
        q: ds.q(),
        lines,
        minimal,
        minimal_all_v,
        n_sp,
        v_max,
        degenerate,
    })
}

/// Asymptotic sign of `Im u_r(x + i y, v)` as `x -> side * infinity`, from
/// the leading exponential correction.
pub fn expected_sign_at_infinity(r: u32, v: f64, y: f64, side: i8, zeta: f64, v_inf: f64) -> i8 {
    let base = (r.max(1) as f64 * zeta).sin() * (2.0 * y).sin();
    let base = if base > 0.0 { 1 } else if base < 0.0 { -1 } else { 0 };
    if v.abs() > v_inf {
        base
    } else if v > 0.0 {
        -side.signum() * base
    } else {
        side.signum() * base
    }
}

/// Numerical sign of `Im u_r` at `x = side * 12`.
pub fn sign_im_u_at_infinity(r: u32, v: f64, y: f64, side: i8, ds: &DressedSet) -> Result<i8> {
    if !(y > -FRAC_PI_2 && y < FRAC_PI_2) {
        return Err(XxzError::InvalidArgument(format!("y = {y} must lie in (-pi/2, pi/2)")));
    }
    if side != 1 && side != -1 {
        return Err(XxzError::InvalidArgument("side must be +1 or -1".into()));
    }
    let lambda = Complex64::new(f64::from(side) * INFINITY_PROBE, y);
    let im = u_r(lambda, v, r, ds)?.im;
    if im.abs() < 1e-12 {
        return Err(XxzError::Inconclusive(format!(
            "|Im u_{r}({lambda}, {v})| = {:e} is below 1e-12",
            im.abs()
        )));
    }
    Ok(if im > 0.0 { 1 } else { -1 })
}
