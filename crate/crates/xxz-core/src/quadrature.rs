//! Gauss-Legendre rules, Nystrom solves of second-kind Fredholm equations,
//! bracketed root finding, polyline integration and the Barnes G function.

use std::fmt;
use std::sync::Arc;

use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Result, XxzError};

/// Kernel `k(lambda, mu)` of an integral operator. Only real `mu` (grid
/// nodes) are ever passed; `lambda` may be complex for off-grid evaluation.
pub type KernelFn = Arc<dyn Fn(Complex64, f64) -> Complex64 + Send + Sync>;

/// Right-hand side `g(lambda)` of an integral equation.
pub type DrivingFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// Gauss-Legendre rule on a finite interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: (f64, f64),
}

impl Quadrature {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Applies the rule to a real integrand.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Applies the rule to a complex integrand.
    pub fn integrate_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }

    /// Rebuilds a rule from stored data, checking the structural invariants.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>, interval: (f64, f64)) -> Result<Self> {
        let (a, b) = interval;
        if nodes.len() != weights.len() || nodes.len() < 2 || !(a < b) {
            return Err(XxzError::InvalidArgument(
                "inconsistent quadrature data".into(),
            ));
        }
        let increasing = nodes.windows(2).all(|p| p[0] < p[1]);
        let inside = nodes.iter().all(|&x| a < x && x < b);
        let sum: f64 = weights.iter().sum();
        if !increasing || !inside || (sum - (b - a)).abs() > 1e-12 * (b - a) {
            return Err(XxzError::InvalidArgument(
                "quadrature data violates node/weight invariants".into(),
            ));
        }
        Ok(Self {
            order: nodes.len(),
            nodes,
            weights,
            interval,
        })
    }
}

/// Legendre polynomial `P_n(x)` and its derivative via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `order`-point Gauss-Legendre rule on `[a, b]`, exact for polynomials of
/// degree `2 order - 1`. Nodes come from Newton iteration on `P_order`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<Quadrature> {
    if order < 2 {
        return Err(XxzError::InvalidArgument(format!(
            "quadrature order must be at least 2, got {order}"
        )));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(XxzError::InvalidArgument(format!(
            "quadrature interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    let n = order;
    let mut reference = vec![(0.0, 0.0); n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        reference[i] = (-x, w);
        reference[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        reference[n / 2].0 = 0.0;
    }
    let mid = 0.5 * (a + b);
    let half_len = 0.5 * (b - a);
    let nodes = reference.iter().map(|&(x, _)| mid + half_len * x).collect();
    let weights = reference.iter().map(|&(_, w)| half_len * w).collect();
    Ok(Quadrature {
        order,
        nodes,
        weights,
        interval: (a, b),
    })
}

/// Nystrom solution of `f(l) + int_{-Q}^{Q} k(l, m) f(m) dm = g(l)`.
///
/// Values are stored at the quadrature nodes; elsewhere the equation itself
/// supplies the interpolant, which is valid wherever the kernel is analytic.
#[derive(Clone)]
pub struct GridFunction {
    quad: Quadrature,
    values: Vec<Complex64>,
    kernel: KernelFn,
    driving: DrivingFn,
    kernel_id: String,
    driving_id: String,
    condition: f64,
}

impl fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFunction")
            .field("order", &self.quad.order)
            .field("interval", &self.quad.interval)
            .field("kernel_id", &self.kernel_id)
            .field("driving_id", &self.driving_id)
            .field("condition", &self.condition)
            .finish()
    }
}

impl GridFunction {
    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn nodes(&self) -> &[f64] {
        &self.quad.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.quad.weights
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Real parts of the nodal values.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    pub fn driving_id(&self) -> &str {
        &self.driving_id
    }

    /// 1-norm condition estimate of the Nystrom matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `sum_j w_j f(mu_j) values_j`, the discrete `int f(mu) F(mu) dmu`.
    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.quad
            .nodes
            .iter()
            .zip(&self.quad.weights)
            .zip(&self.values)
            .map(|((&x, &w), &v)| f(x) * v * w)
            .sum()
    }

    /// Real-valued variant of [`GridFunction::integrate`] that ignores the
    /// imaginary parts of the nodal values.
    pub fn integrate_real<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.quad
            .nodes
            .iter()
            .zip(&self.quad.weights)
            .zip(&self.values)
            .map(|((&x, &w), v)| f(x) * v.re * w)
            .sum()
    }

    /// Natural Nystrom interpolant `g(l) - sum_j w_j k(l, mu_j) f_j`.
    pub fn evaluate(&self, lambda: Complex64) -> Complex64 {
        let kernel = &self.kernel;
        (self.driving)(lambda) - self.integrate(|mu| kernel(lambda, mu))
    }

    /// Rebuilds a solved function from stored nodal values.
    pub fn from_parts(
        quad: Quadrature,
        values: Vec<Complex64>,
        kernel: KernelFn,
        driving: DrivingFn,
        kernel_id: impl Into<String>,
        driving_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != quad.order {
            return Err(XxzError::InvalidArgument(
                "value count differs from quadrature order".into(),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(XxzError::InvalidArgument("non-finite nodal value".into()));
        }
        Ok(Self {
            quad,
            values,
            kernel,
            driving,
            kernel_id: kernel_id.into(),
            driving_id: driving_id.into(),
            condition: f64::NAN,
        })
    }
}

const MAX_CONDITION: f64 = 1e12;
const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Factored Nystrom matrix `I + K W` of `f(l) + int_{-q}^{q} k(l, m) f(m) dm`.
///
/// One factorisation serves every right-hand side; the kernel must be real on
/// the real square.
pub struct NystromOperator {
    quad: Quadrature,
    kernel: KernelFn,
    kernel_id: String,
    matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    condition: f64,
}

impl fmt::Debug for NystromOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NystromOperator")
            .field("order", &self.quad.order)
            .field("interval", &self.quad.interval)
            .field("kernel_id", &self.kernel_id)
            .field("condition", &self.condition)
            .finish()
    }
}

impl NystromOperator {
    pub fn new(kernel: KernelFn, q: f64, order: usize, kernel_id: impl Into<String>) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(XxzError::InvalidArgument(format!(
                "segment half-width must be positive, got {q}"
            )));
        }
        let kernel_id = kernel_id.into();
        let quad = gauss_legendre(order, -q, q)?;
        let x = &quad.nodes;
        let w = &quad.weights;
        let matrix = DMatrix::from_fn(order, order, |i, j| {
            let k = kernel(Complex64::new(x[i], 0.0), x[j]).re;
            (if i == j { 1.0 } else { 0.0 }) + w[j] * k
        });
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(XxzError::SolverFailure {
                what: format!("{kernel_id}: non-finite kernel sample"),
                condition: f64::INFINITY,
            });
        }
        let lu = matrix.clone().lu();
        let inverse = lu.try_inverse().ok_or_else(|| XxzError::SolverFailure {
            what: kernel_id.clone(),
            condition: f64::INFINITY,
        })?;
        let condition = one_norm(&matrix) * one_norm(&inverse);
        if !(condition < MAX_CONDITION) {
            return Err(XxzError::SolverFailure {
                what: kernel_id,
                condition,
            });
        }
        Ok(Self {
            quad,
            kernel,
            kernel_id,
            matrix,
            lu,
            condition,
        })
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn kernel(&self) -> &KernelFn {
        &self.kernel
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    /// 1-norm condition number of `I + K W`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Solves for one right-hand side, with one step of iterative refinement
    /// and a residual check against `1e-10 max|g|`.
    pub fn solve(&self, driving: DrivingFn, driving_id: impl Into<String>) -> Result<GridFunction> {
        let driving_id = driving_id.into();
        let what = format!("{}/{}", self.kernel_id, driving_id);
        let n = self.quad.order;
        let rhs: Vec<Complex64> = self
            .quad
            .nodes
            .iter()
            .map(|&xi| driving(Complex64::new(xi, 0.0)))
            .collect();
        if rhs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(XxzError::SolverFailure {
                what: format!("{what}: non-finite right-hand side"),
                condition: self.condition,
            });
        }
        let b_re = DVector::from_iterator(n, rhs.iter().map(|v| v.re));
        let b_im = DVector::from_iterator(n, rhs.iter().map(|v| v.im));
        let refined = |b: &DVector<f64>| -> Result<DVector<f64>> {
            let fail = || XxzError::SolverFailure {
                what: what.clone(),
                condition: self.condition,
            };
            let mut sol = self.lu.solve(b).ok_or_else(fail)?;
            let residual = b - &self.matrix * &sol;
            sol += self.lu.solve(&residual).ok_or_else(fail)?;
            Ok(sol)
        };
        let f_re = refined(&b_re)?;
        let f_im = if b_im.iter().all(|&v| v == 0.0) {
            DVector::zeros(n)
        } else {
            refined(&b_im)?
        };

        let scale = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let residual = (&b_re - &self.matrix * &f_re)
            .amax()
            .max((&b_im - &self.matrix * &f_im).amax());
        let tolerance = RESIDUAL_TOLERANCE * scale;
        if residual > tolerance && residual > 0.0 {
            return Err(XxzError::ResidualTooLarge {
                what,
                residual,
                tolerance,
            });
        }
        let values = f_re
            .iter()
            .zip(f_im.iter())
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        Ok(GridFunction {
            quad: self.quad.clone(),
            values,
            kernel: self.kernel.clone(),
            driving,
            kernel_id: self.kernel_id.clone(),
            driving_id,
            condition: self.condition,
        })
    }
}

/// Solves `f(l) + int_{-q}^{q} k(l, m) f(m) dm = g(l)` by Nystrom collocation
/// with a dense LU factorisation and one step of iterative refinement.
///
/// The kernel must be real on the real square; a complex right-hand side is
/// handled by solving its real and imaginary parts with the same factors.
pub fn solve_fredholm2(
    kernel: KernelFn,
    driving: DrivingFn,
    q: f64,
    order: usize,
    kernel_id: impl Into<String>,
    driving_id: impl Into<String>,
) -> Result<GridFunction> {
    NystromOperator::new(kernel, q, order, kernel_id)?.solve(driving, driving_id)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Brent's bracketed root finder. Stops once the bracket is narrower than
/// `tol` (or an exact zero is hit).
pub fn find_root_bracketed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(XxzError::InvalidArgument("root tolerance must be positive".into()));
    }
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) || fa.is_nan() || fb.is_nan() {
        return Err(XxzError::BracketFailure { a, b, fa, fb });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.25 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Ok(b)
}

/// Barnes G at a positive integer: `G(1) = G(2) = 1`, `G(n + 1) = (n - 1)! G(n)`.
pub fn barnes_g(n: u32) -> Result<f64> {
    if n < 1 {
        return Err(XxzError::InvalidArgument("Barnes G needs n >= 1".into()));
    }
    if n <= 12 {
        let mut g = 1.0_f64;
        let mut factorial = 1.0_f64;
        for k in 2..n {
            // factorial = (k - 1)!
            factorial *= (k - 1).max(1) as f64;
            g *= factorial;
        }
        return Ok(g);
    }
    Ok(ln_barnes_g(n)?.exp())
}

/// `ln G(n)` accumulated as a sum of log-factorials.
pub fn ln_barnes_g(n: u32) -> Result<f64> {
    if n < 1 {
        return Err(XxzError::InvalidArgument("Barnes G needs n >= 1".into()));
    }
    let mut ln_g = 0.0;
    let mut ln_factorial = 0.0;
    for k in 2..n {
        ln_factorial += ((k - 1).max(1) as f64).ln();
        ln_g += ln_factorial;
    }
    Ok(ln_g)
}

/// Ordered list of complex vertices; consecutive vertices are distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    vertices: Vec<Complex64>,
}

impl Polyline {
    pub fn new(vertices: Vec<Complex64>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(XxzError::InvalidArgument(
                "a polyline needs at least two vertices".into(),
            ));
        }
        if vertices.windows(2).any(|p| p[0] == p[1]) {
            return Err(XxzError::InvalidArgument(
                "consecutive polyline vertices must differ".into(),
            ));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices }
    }

    pub fn segments(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.vertices.windows(2).map(|p| (p[0], p[1]))
    }
}

/// Sum of Gauss-Legendre integrals over the straight pieces of `path`.
pub fn integrate_polyline<F: Fn(Complex64) -> Complex64>(
    f: F,
    path: &Polyline,
    order_per_segment: usize,
) -> Result<Complex64> {
    let rule = gauss_legendre(order_per_segment, -1.0, 1.0)?;
    let mut total = Complex64::new(0.0, 0.0);
    for (a, b) in path.segments() {
        let mid = (a + b) * 0.5;
        let half = (b - a) * 0.5;
        let mut seg = Complex64::new(0.0, 0.0);
        for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
            let z = mid + half * t;
            let v = f(z);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(XxzError::IntegrationFailure { point: z });
            }
            seg += v * w;
        }
        total += seg * half;
    }
    Ok(total)
}
