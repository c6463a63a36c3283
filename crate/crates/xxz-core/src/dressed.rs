//! Dressed energies, momenta, phases and charge of the massless XXZ chain.
//!
//! All quantities share the operator `f + int_{-q}^{q} K(. - mu|zeta) f`, so a
//! [`DressedSet`] factorises it once. Off-segment values come from the
//! defining equations themselves (Nystrom extension), which is analytic away
//! from the kernel pole lines `[-q, q] +- i zeta + i pi Z`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheKey, CacheMeta, SolveCache, SolveRecord};
use crate::error::{Result, XxzError};
use crate::kernels::{
    bare_phase, bare_phase_1, bound_state_etas, kernel_d1_unchecked, kernel_d2_unchecked,
    kernel_real, kernel_real_d1, kernel_unchecked, pole_distance, reduced_angle,
    string_combinatorics, validate_zeta, StringCombinatorics,
};
use crate::quadrature::{
    find_root_bracketed, DrivingFn, GridFunction, KernelFn, NystromOperator, Quadrature,
};

pub const DEFAULT_ORDER: usize = 128;

/// Minimal distance to a kernel pole line for off-segment evaluation.
pub const EVALUATION_GUARD: f64 = 1e-4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which of the field or the Fermi endpoint is prescribed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpec {
    Field(f64),
    Endpoint(f64),
}

/// Physical inputs and the quadrature order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Exchange coupling `J > 0`.
    pub coupling: f64,
    pub zeta: f64,
    pub field: FieldSpec,
    pub order: usize,
}

/// Saturation field `8 J cos^2(zeta/2)` where the Fermi zone closes.
pub fn critical_field(coupling: f64, zeta: f64) -> f64 {
    8.0 * coupling * (0.5 * zeta).cos().powi(2)
}

impl ModelParams {
    pub fn with_field(coupling: f64, zeta: f64, h: f64, order: usize) -> Result<Self> {
        let p = Self {
            coupling,
            zeta,
            field: FieldSpec::Field(h),
            order,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_endpoint(coupling: f64, zeta: f64, q: f64, order: usize) -> Result<Self> {
        let p = Self {
            coupling,
            zeta,
            field: FieldSpec::Endpoint(q),
            order,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn critical_field(&self) -> f64 {
        critical_field(self.coupling, self.zeta)
    }

    pub fn validate(&self) -> Result<()> {
        validate_zeta(self.zeta)?;
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(XxzError::InvalidArgument(format!(
                "coupling J must be positive, got {}",
                self.coupling
            )));
        }
        if self.order < 2 {
            return Err(XxzError::InvalidArgument(format!(
                "quadrature order must be at least 2, got {}",
                self.order
            )));
        }
        match self.field {
            FieldSpec::Field(h) => {
                let h_c = self.critical_field();
                if !(h > 0.0) || !h.is_finite() {
                    return Err(XxzError::InvalidArgument(format!(
                        "field h must be positive, got {h}"
                    )));
                }
                if h >= h_c {
                    return Err(XxzError::FieldAboveCritical { h, h_c });
                }
            }
            FieldSpec::Endpoint(q) => {
                if !(q > 0.0) || !q.is_finite() {
                    return Err(XxzError::InvalidArgument(format!(
                        "Fermi endpoint q must be positive, got {q}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same physics at a different quadrature order.
    pub fn at_order(&self, order: usize) -> Self {
        Self { order, ..*self }
    }
}

fn lieb_kernel(zeta: f64) -> KernelFn {
    Arc::new(move |l: Complex64, m: f64| {
        if l.im == 0.0 {
            Complex64::new(kernel_real(l.re - m, zeta), 0.0)
        } else {
            kernel_unchecked(l - m, zeta)
        }
    })
}

fn lieb_operator(zeta: f64, q: f64, order: usize) -> Result<NystromOperator> {
    NystromOperator::new(lieb_kernel(zeta), q, order, format!("K(.|{zeta:.17e})"))
}

/// Bare energy driving term `h - 4 pi J sin(zeta) K(l|zeta/2)`.
fn energy_driving(coupling: f64, zeta: f64, h: f64) -> DrivingFn {
    let amplitude = 4.0 * PI * coupling * zeta.sin();
    Arc::new(move |l| Complex64::new(h, 0.0) - kernel_unchecked(l, 0.5 * zeta) * amplitude)
}

fn momentum_driving(zeta: f64) -> DrivingFn {
    Arc::new(move |l| kernel_unchecked(l, 0.5 * zeta) * (2.0 * PI))
}

fn unit_driving() -> DrivingFn {
    Arc::new(|_| Complex64::new(1.0, 0.0))
}

/// `epsilon(.|Q)` on `[-Q, Q]` for a known field.
pub fn solve_dressed_energy(params: &ModelParams, half_width: f64) -> Result<GridFunction> {
    params.validate()?;
    let FieldSpec::Field(h) = params.field else {
        return Err(XxzError::InvalidArgument(
            "solve_dressed_energy needs the field h; use find_fermi_endpoint for a given q".into(),
        ));
    };
    lieb_operator(params.zeta, half_width, params.order)?.solve(
        energy_driving(params.coupling, params.zeta, h),
        format!("energy(h={h:.17e})"),
    )
}

/// Field `h` for which `epsilon(Q|Q) = 0`, from the affine decomposition
/// `epsilon = h z_Q - 4 pi J sin(zeta) e_Q`.
pub fn field_for_endpoint(coupling: f64, zeta: f64, q: f64, order: usize) -> Result<f64> {
    let op = lieb_operator(zeta, q, order)?;
    let z = op.solve(unit_driving(), "one")?;
    let e = op.solve(Arc::new(move |l| kernel_unchecked(l, 0.5 * zeta)), "K(.|zeta/2)")?;
    let at = Complex64::new(q, 0.0);
    Ok(4.0 * PI * coupling * zeta.sin() * e.evaluate(at).re / z.evaluate(at).re)
}

fn endpoint_for_field(coupling: f64, zeta: f64, h: f64, order: usize) -> Result<f64> {
    let h_c = critical_field(coupling, zeta);
    if h >= h_c {
        return Err(XxzError::FieldAboveCritical { h, h_c });
    }
    // h(Q) decreases from h_c at Q = 0 towards 0 as Q grows.
    let g = |q: f64| field_for_endpoint(coupling, zeta, q, order).map(|v| v - h);
    let lower = 1e-12;
    let mut upper = 1.0;
    while g(upper)? > 0.0 {
        upper *= 2.0;
        if upper > 256.0 {
            return Err(XxzError::BracketFailure {
                a: lower,
                b: upper,
                fa: g(lower)?,
                fb: g(upper)?,
            });
        }
    }
    let mut failure = None;
    let root = find_root_bracketed(
        |q| match g(q) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lower,
        upper,
        1e-13,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root
}

type PhaseKey = (u32, i64, i64);

/// Solved thermodynamic data at one parameter point; immutable apart from the
/// memoised dressed phases.
pub struct DressedSet {
    coupling: f64,
    zeta: f64,
    q: f64,
    h: f64,
    order: usize,
    operator: Arc<NystromOperator>,
    eps1: GridFunction,
    p1_prime: GridFunction,
    charge: GridFunction,
    p_fermi: f64,
    phase_cache: Mutex<HashMap<PhaseKey, Arc<GridFunction>>>,
    store: Option<SolveCache>,
}

impl std::fmt::Debug for DressedSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DressedSet")
            .field("coupling", &self.coupling)
            .field("zeta", &self.zeta)
            .field("q", &self.q)
            .field("h", &self.h)
            .field("order", &self.order)
            .field("p_fermi", &self.p_fermi)
            .finish()
    }
}

/// Solves for the Fermi endpoint (or field) and builds the dressed set.
pub fn find_fermi_endpoint(params: &ModelParams) -> Result<DressedSet> {
    DressedSet::solve(params)
}

impl DressedSet {
    pub fn solve(params: &ModelParams) -> Result<Self> {
        Self::solve_cached(params, None)
    }

    /// Like [`DressedSet::solve`], reusing and filling an on-disk cache.
    pub fn solve_cached(params: &ModelParams, store: Option<SolveCache>) -> Result<Self> {
        params.validate()?;
        let ModelParams {
            coupling,
            zeta,
            order,
            ..
        } = *params;

        let base_key = {
            let key = CacheKey::new("dressed")
                .real("zeta", zeta)
                .real("J", coupling)
                .integer("order", order as i64);
            match params.field {
                FieldSpec::Field(h) => key.real("h", h),
                FieldSpec::Endpoint(q) => key.real("q", q),
            }
        };
        let cached_eps = store
            .as_ref()
            .and_then(|s| s.load(&base_key.clone().text("solve", "eps1"), "eps1"));

        let (q, h) = match (&cached_eps, params.field) {
            (Some(rec), _) => (rec.meta.q, rec.meta.h),
            (None, FieldSpec::Field(h)) => (endpoint_for_field(coupling, zeta, h, order)?, h),
            (None, FieldSpec::Endpoint(q)) => (q, field_for_endpoint(coupling, zeta, q, order)?),
        };

        let operator = Arc::new(lieb_operator(zeta, q, order)?);
        let meta = |kind: &str| CacheMeta {
            kind: kind.into(),
            zeta,
            coupling,
            order,
            q,
            h,
            r: None,
            mu: None,
        };
        let load_or_solve = |kind: &str, driving: DrivingFn, id: String| -> Result<GridFunction> {
            let key = base_key.clone().text("solve", kind);
            if let Some(rec) = store.as_ref().and_then(|s| s.load(&key, kind)) {
                return grid_from_record(&operator, rec, driving, id);
            }
            let g = operator.solve(driving, id)?;
            if let Some(s) = &store {
                s.store(&key, &record_from_grid(meta(kind), &g))?;
            }
            Ok(g)
        };

        let eps1 = load_or_solve(
            "eps1",
            energy_driving(coupling, zeta, h),
            format!("energy(h={h:.17e})"),
        )?;
        let p1_prime = load_or_solve("p1prime", momentum_driving(zeta), "2 pi K(.|zeta/2)".into())?;
        let charge = load_or_solve("charge", unit_driving(), "one".into())?;

        let mut set = Self {
            coupling,
            zeta,
            q,
            h,
            order,
            operator,
            eps1,
            p1_prime,
            charge,
            p_fermi: f64::NAN,
            phase_cache: Mutex::new(HashMap::new()),
            store,
        };
        set.p_fermi = set.momentum_formula(1, Complex64::new(q, 0.0), 0.0)?.re;
        set.check_invariants()?;
        Ok(set)
    }

    fn check_invariants(&self) -> Result<()> {
        let edge = self.eps1.evaluate(Complex64::new(self.q, 0.0)).re;
        if edge.abs() > 1e-8 * self.h.max(1e-300) {
            return Err(XxzError::ConsistencyFailure(format!(
                "dressed energy at the Fermi endpoint is {edge:e}, not zero"
            )));
        }
        let quadrature_route = 0.5 * self.p1_prime.integrate_real(|_| 1.0);
        if (quadrature_route - self.p_fermi).abs() > 1e-10 * self.p_fermi.abs().max(1.0) {
            return Err(XxzError::ConsistencyFailure(format!(
                "Fermi momentum {} disagrees with the integrated density {}",
                self.p_fermi, quadrature_route
            )));
        }
        for i in 1..50 {
            let x = self.q * (-1.0 + 2.0 * i as f64 / 50.0);
            let v = self.eps1.evaluate(Complex64::new(x, 0.0)).re;
            if !(v < 0.0) {
                return Err(XxzError::ConsistencyFailure(format!(
                    "dressed energy {v:e} is not negative inside the Fermi zone at {x}"
                )));
            }
        }
        for i in 0..50 {
            let x = self.q + 0.1 + 4.9 * i as f64 / 49.0;
            let outside = self.eps1.evaluate(Complex64::new(x, 0.0)).re;
            let shifted = self.eps1.evaluate(Complex64::new(x - 2.5, FRAC_PI_2)).re;
            if !(outside > 0.0 && shifted > 0.0) {
                return Err(XxzError::ConsistencyFailure(format!(
                    "dressed energy not positive off the Fermi zone near {x}: {outside:e}, {shifted:e}"
                )));
            }
            let p_real = self.p1_prime.evaluate(Complex64::new(x - 2.5, 0.0)).re;
            let p_shift = self.p1_prime.evaluate(Complex64::new(x - 2.5, FRAC_PI_2)).re;
            if !(p_real > 0.0 && p_shift < 0.0) {
                return Err(XxzError::ConsistencyFailure(format!(
                    "p'_1 sign pattern violated at {}: {p_real:e}, {p_shift:e}",
                    x - 2.5
                )));
            }
        }
        Ok(())
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn p_fermi(&self) -> f64 {
        self.p_fermi
    }

    pub fn eps1(&self) -> &GridFunction {
        &self.eps1
    }

    pub fn p1_prime(&self) -> &GridFunction {
        &self.p1_prime
    }

    pub fn charge(&self) -> &GridFunction {
        &self.charge
    }

    pub fn operator(&self) -> &NystromOperator {
        &self.operator
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            coupling: self.coupling,
            zeta: self.zeta,
            field: FieldSpec::Endpoint(self.q),
            order: self.order,
        }
    }

    pub fn combinatorics(&self, r: u32) -> Result<StringCombinatorics> {
        string_combinatorics(r, self.zeta)
    }

    /// Per-site density `D = p_F / pi`; construction already checked it
    /// against `int rho` with `2 pi rho = p'_1`.
    pub fn density(&self) -> f64 {
        self.p_fermi / PI
    }

    /// Refuses `lambda` near the pole lines `[-q, q] +- i eta + i pi Z` of the
    /// convolution terms and near the isolated poles of the driving terms.
    fn guard(&self, lambda: Complex64, segment_etas: &[f64], point_etas: &[f64]) -> Result<()> {
        let mut distance = f64::INFINITY;
        for &eta in segment_etas {
            if (2.0 * eta).sin().abs() < 1e-15 {
                continue;
            }
            for c in [eta, -eta] {
                let z = lambda - Complex64::new(0.0, c);
                let im = z.im.rem_euclid(PI);
                let im = im.min(PI - im);
                let re = (z.re.abs() - self.q).max(0.0);
                distance = distance.min(re.hypot(im));
            }
        }
        for &eta in point_etas {
            if (2.0 * eta).sin().abs() < 1e-15 {
                continue;
            }
            distance = distance.min(pole_distance(lambda, eta));
        }
        if distance < EVALUATION_GUARD {
            return Err(XxzError::PoleProximity {
                point: lambda,
                distance,
            });
        }
        Ok(())
    }

    /// `sum_j w_j sum_eta K^(d)(lambda - mu_j|eta) f(mu_j)`.
    fn convolve(&self, f: &GridFunction, lambda: Complex64, etas: &[f64], derivative: u8) -> Complex64 {
        let real = lambda.im == 0.0;
        let mut total = ZERO;
        for ((&mu, &w), &v) in f.nodes().iter().zip(f.weights()).zip(f.values()) {
            let mut k = ZERO;
            for &eta in etas {
                k += match (derivative, real) {
                    (0, true) => Complex64::new(kernel_real(lambda.re - mu, eta), 0.0),
                    (1, true) => Complex64::new(kernel_real_d1(lambda.re - mu, eta), 0.0),
                    (0, false) => kernel_unchecked(lambda - mu, eta),
                    (1, false) => kernel_d1_unchecked(lambda - mu, eta),
                    _ => kernel_d2_unchecked(lambda - mu, eta),
                };
            }
            total += k * v * w;
        }
        total
    }

    fn kernel_term(lambda: Complex64, eta: f64, derivative: u8) -> Complex64 {
        match derivative {
            0 => kernel_unchecked(lambda, eta),
            1 => kernel_d1_unchecked(lambda, eta),
            _ => kernel_d2_unchecked(lambda, eta),
        }
    }

    fn energy_derivative(&self, r: u32, lambda: Complex64, derivative: u8) -> Result<Complex64> {
        if r == 0 {
            return Err(XxzError::InvalidArgument("string length must be at least 1".into()));
        }
        let (a, b) = bound_state_etas(r, self.zeta);
        let own = 0.5 * r as f64 * self.zeta;
        self.guard(lambda, &[a, b], &[own])?;
        let amplitude = 4.0 * PI * self.coupling * self.zeta.sin();
        let constant = if derivative == 0 { r as f64 * self.h } else { 0.0 };
        Ok(Complex64::new(constant, 0.0)
            - Self::kernel_term(lambda, own, derivative) * amplitude
            - self.convolve(&self.eps1, lambda, &[a, b], derivative))
    }

    /// `epsilon_r(lambda)`; for `r = 1` this is the Nystrom extension of `epsilon_1`.
    pub fn energy(&self, r: u32, lambda: Complex64) -> Result<Complex64> {
        self.energy_derivative(r, lambda, 0)
    }

    pub fn energy_d1(&self, r: u32, lambda: Complex64) -> Result<Complex64> {
        self.energy_derivative(r, lambda, 1)
    }

    pub fn energy_d2(&self, r: u32, lambda: Complex64) -> Result<Complex64> {
        self.energy_derivative(r, lambda, 2)
    }

    fn momentum_derivative(&self, r: u32, lambda: Complex64, derivative: u8) -> Result<Complex64> {
        if r == 0 {
            return Err(XxzError::InvalidArgument("string length must be at least 1".into()));
        }
        let (a, b) = bound_state_etas(r, self.zeta);
        let own = 0.5 * r as f64 * self.zeta;
        self.guard(lambda, &[a, b], &[own])?;
        Ok(Self::kernel_term(lambda, own, derivative - 1) * (2.0 * PI)
            - self.convolve(&self.p1_prime, lambda, &[a, b], derivative - 1))
    }

    /// `p'_r(lambda)`.
    pub fn momentum_d1(&self, r: u32, lambda: Complex64) -> Result<Complex64> {
        self.momentum_derivative(r, lambda, 1)
    }

    /// `p''_r(lambda)`.
    pub fn momentum_d2(&self, r: u32, lambda: Complex64) -> Result<Complex64> {
        self.momentum_derivative(r, lambda, 2)
    }

    /// Dressed momentum `p_r(lambda)`, extended by `i pi` periodicity.
    pub fn momentum(&self, r: u32, lambda: Complex64) -> Result<Complex64> {
        self.momentum_formula(r, lambda, self.p_fermi)
    }

    fn momentum_formula(&self, r: u32, lambda: Complex64, p_fermi: f64) -> Result<Complex64> {
        let comb = string_combinatorics(r, self.zeta)?;
        let lambda = reduce_to_strip(lambda);
        let (a, b) = bound_state_etas(r, self.zeta);
        let own = 0.5 * r as f64 * self.zeta;
        self.guard(lambda, &[a, b], &[own])?;

        let mut integral = ZERO;
        let nodes = self.p1_prime.nodes();
        let weights = self.p1_prime.weights();
        for ((&mu, &w), &v) in nodes.iter().zip(weights).zip(self.p1_prime.values()) {
            integral += bare_phase(lambda - mu, r, self.zeta)? * v * w;
        }
        let mut p = bare_phase_1(lambda, own)? - integral / (2.0 * PI)
            + PI * comb.ell_r as f64
            - p_fermi * comb.m_r as f64;
        for sigma in [1i64, -1] {
            if sigma == -1 && r == 1 {
                continue;
            }
            let w_hat = reduced_angle(0.5 * (r as i64 + sigma) as f64 * self.zeta);
            let lower = w_hat.min(PI - w_hat);
            let im = lambda.im.abs();
            if im <= FRAC_PI_2 && im >= lower {
                // At w_hat = pi/2 the line sits on the step itself; the
                // vanishing sign averages the two one-sided limits.
                let tilt = 1.0 - 2.0 * w_hat / PI;
                let sign = if tilt.abs() < 1e-14 { 0.0 } else { tilt.signum() };
                p -= 2.0 * p_fermi * sign;
            }
        }
        Ok(p)
    }

    /// Dressed charge `Z(lambda)`.
    pub fn charge_at(&self, lambda: Complex64) -> Result<Complex64> {
        self.guard(lambda, &[self.zeta], &[])?;
        Ok(self.charge.evaluate(lambda))
    }

    /// `epsilon_1'(q) / p_1'(q)`.
    pub fn fermi_velocity(&self) -> Result<f64> {
        let at = Complex64::new(self.q, 0.0);
        Ok(self.energy_d1(1, at)?.re / self.momentum_d1(1, at)?.re)
    }

    /// Limiting velocity at infinite rapidity from its integral representation,
    /// cross-checked against `epsilon_1'/p_1'` at `lambda = 15`.
    pub fn v_infinity(&self) -> Result<f64> {
        let (closed, limit) = self.v_infinity_routes()?;
        if (closed - limit).abs() > 1e-6 * closed.abs() {
            return Err(XxzError::ConsistencyFailure(format!(
                "v_inf integral form {closed} disagrees with the large-rapidity ratio {limit}"
            )));
        }
        Ok(closed)
    }

    /// Both routes to `v_inf`: (integral form, velocity ratio at `lambda = 15`).
    pub fn v_infinity_routes(&self) -> Result<(f64, f64)> {
        let cz = self.zeta.cos();
        let nodes = self.eps1.nodes();
        let weights = self.eps1.weights();
        let mut energy_moment = 0.0;
        let mut momentum_moment = 0.0;
        for ((&mu, &w), &p) in nodes.iter().zip(weights).zip(self.p1_prime.values()) {
            let de = self.energy_d1(1, Complex64::new(mu, 0.0))?.re;
            energy_moment += w * (2.0 * mu).sinh() * de;
            momentum_moment += w * (2.0 * mu).cosh() * p.re;
        }
        let closed = (8.0 * PI * self.coupling * self.zeta.sin() - 2.0 * cz * energy_moment)
            / (2.0 * PI - 2.0 * cz * momentum_moment);
        let far = Complex64::new(15.0, 0.0);
        let limit = self.energy_d1(1, far)?.re / self.momentum_d1(1, far)?.re;
        Ok((closed, limit))
    }

    fn phase_key(r: u32, mu: Complex64) -> PhaseKey {
        (r, (mu.re * 1e12).round() as i64, (mu.im * 1e12).round() as i64)
    }

    /// `phi_r(., mu)` as a solved function; memoised per `(r, mu)` and
    /// persisted when the set carries a cache.
    pub fn phase(&self, r: u32, mu: Complex64) -> Result<Arc<GridFunction>> {
        let key = Self::phase_key(r, mu);
        if let Some(g) = self.phase_cache.lock().expect("phase cache poisoned").get(&key) {
            return Ok(g.clone());
        }
        let comb = string_combinatorics(r, self.zeta)?;
        let zeta = self.zeta;
        let half_m = 0.5 * comb.m_r as f64;
        let driving: DrivingFn = Arc::new(move |l| match bare_phase(l - mu, r, zeta) {
            Ok(t) => t / (2.0 * PI) + half_m,
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        });
        let id = format!("phase(r={r},mu={:.17e}{:+.17e}i)", mu.re, mu.im);
        let disk_key = CacheKey::new("phase")
            .real("zeta", self.zeta)
            .real("q", self.q)
            .real("J", self.coupling)
            .integer("order", self.order as i64)
            .integer("r", r as i64)
            .integer("mu_re", key.1)
            .integer("mu_im", key.2);
        let solved = match self.store.as_ref().and_then(|s| s.load(&disk_key, "phase")) {
            Some(rec) => grid_from_record(&self.operator, rec, driving, id)?,
            None => {
                let g = self.operator.solve(driving, id)?;
                if let Some(s) = &self.store {
                    let meta = CacheMeta {
                        kind: "phase".into(),
                        zeta: self.zeta,
                        coupling: self.coupling,
                        order: self.order,
                        q: self.q,
                        h: self.h,
                        r: Some(r),
                        mu: Some([mu.re, mu.im]),
                    };
                    s.store(&disk_key, &record_from_grid(meta, &g))?;
                }
                g
            }
        };
        let solved = Arc::new(solved);
        self.phase_cache
            .lock()
            .expect("phase cache poisoned")
            .insert(key, solved.clone());
        Ok(solved)
    }

    /// `phi_r(lambda, mu)`.
    pub fn phase_at(&self, r: u32, lambda: Complex64, mu: Complex64) -> Result<Complex64> {
        self.guard(lambda, &[self.zeta], &[])?;
        let g = self.phase(r, mu)?;
        let v = g.evaluate(lambda);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(XxzError::ContourFailure(format!(
                "bare phase path for phi_{r}({lambda}, {mu}) meets a kernel pole"
            )));
        }
        Ok(v)
    }

    /// Number of memoised dressed phases.
    pub fn cached_phases(&self) -> usize {
        self.phase_cache.lock().expect("phase cache poisoned").len()
    }
}

/// Maps `lambda` to the strip `-pi/2 < Im <= pi/2` by `i pi` shifts.
pub fn reduce_to_strip(lambda: Complex64) -> Complex64 {
    let mut im = lambda.im - PI * (lambda.im / PI).round();
    if im <= -FRAC_PI_2 {
        im += PI;
    }
    Complex64::new(lambda.re, im)
}

fn record_from_grid(meta: CacheMeta, g: &GridFunction) -> SolveRecord {
    SolveRecord {
        meta,
        nodes: g.nodes().to_vec(),
        weights: g.weights().to_vec(),
        values: g.values().iter().map(|v| [v.re, v.im]).collect(),
    }
}

fn grid_from_record(
    op: &NystromOperator,
    rec: SolveRecord,
    driving: DrivingFn,
    id: String,
) -> Result<GridFunction> {
    let quad = Quadrature::from_parts(rec.nodes, rec.weights, op.quadrature().interval())?;
    if quad.nodes() != op.quadrature().nodes() {
        return Err(XxzError::Cache("cached nodes differ from the current rule".into()));
    }
    let values = rec.values.iter().map(|v| Complex64::new(v[0], v[1])).collect();
    GridFunction::from_parts(quad, values, op.kernel().clone(), driving, op.kernel_id(), id)
}

/// `epsilon_r` as a closure, for catalogued strings only.
pub fn dressed_energy_r(
    ds: &DressedSet,
    r: u32,
) -> Result<impl Fn(Complex64) -> Result<Complex64> + '_> {
    require_catalogued(ds, r)?;
    Ok(move |l| ds.energy(r, l))
}

/// `p_r` as a closure, for catalogued strings only, together with `p_F`.
pub fn dressed_momentum(
    ds: &DressedSet,
    r: u32,
) -> Result<(impl Fn(Complex64) -> Result<Complex64> + '_, f64)> {
    require_catalogued(ds, r)?;
    Ok((move |l| ds.momentum(r, l), ds.p_fermi()))
}

/// `phi_r(., mu)`.
pub fn dressed_phase(ds: &DressedSet, r: u32, mu: Complex64) -> Result<Arc<GridFunction>> {
    ds.phase(r, mu)
}

/// `Z` on the Fermi zone.
pub fn dressed_charge(ds: &DressedSet) -> &GridFunction {
    ds.charge()
}

/// Per-site density `D` entering `m = 1 - 2D`.
pub fn magnetization_density(ds: &DressedSet) -> f64 {
    ds.density()
}

fn require_catalogued(ds: &DressedSet, r: u32) -> Result<()> {
    if r == 1 {
        return Ok(());
    }
    let spec = crate::strings::string_exists(r, ds.zeta())?;
    if !spec.exists {
        return Err(XxzError::InvalidString { r, zeta: ds.zeta() });
    }
    Ok(())
}
