//! Existence, parity and momentum sign of `r`-string bound states.
//!
//! Two condition families decide existence: the product-of-sines conditions
//! above `zeta = pi/2`, and the shifted-lattice conditions below it. They are
//! believed equivalent below `pi/2`; [`check_condition_equivalence`] compares
//! them, and both verdicts are kept when they differ.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::dressed::DressedSet;
use crate::error::{Result, XxzError};
use crate::kernels::{sign_of, validate_zeta};

/// Tolerance under which `sin(k zeta)` counts as zero.
const DEGENERACY: f64 = 1e-12;

/// Which condition family decided a [`StringSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionRegime {
    /// The 1-string, present for every anisotropy.
    Elementary,
    /// Product-of-sines conditions, `pi/2 < zeta < pi`.
    ProductOfSines,
    /// Shifted-lattice conditions, `0 < zeta < pi/2`.
    ShiftedLattice,
    /// `zeta = pi/2`, where both families were evaluated and agree.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StringSpec {
    pub r: u32,
    pub exists: bool,
    /// Carrier line `R + i sigma pi/2`; `None` for the 1-string, which lives
    /// on both lines.
    pub sigma: Option<u8>,
    /// Sign of `p'_r` on the carrier line (on `R` for the 1-string).
    pub sgn_p_prime: Option<i8>,
    pub regime: ConditionRegime,
}

impl StringSpec {
    /// Imaginary part of the carrier line.
    pub fn line_offset(&self) -> Option<f64> {
        self.sigma.map(|s| f64::from(s) * FRAC_PI_2)
    }
}

fn check_sines(r: u32, zeta: f64) -> Result<()> {
    for k in 1..r {
        if (k as f64 * zeta).sin().abs() < DEGENERACY {
            return Err(XxzError::DegenerateAnisotropy { k, zeta });
        }
    }
    Ok(())
}

/// Parity allowed by the product-of-sines conditions
/// `(-1)^sigma sin(k zeta) sin((r - k) zeta) > 0`, `k = 1..r-1`.
pub fn product_of_sines_parity(r: u32, zeta: f64) -> Result<Option<u8>> {
    validate_zeta(zeta)?;
    check_sines(r, zeta)?;
    Ok((0..=1u8).find(|&sigma| {
        let sign = if sigma == 0 { 1.0 } else { -1.0 };
        (1..r).all(|k| sign * (k as f64 * zeta).sin() * ((r - k) as f64 * zeta).sin() > 0.0)
    }))
}

/// Parity allowed by the shifted-lattice conditions; the string is centred
/// on `R - i kappa_r pi/2`, so its parity is `kappa_r mod 2`.
pub fn shifted_lattice_parity(r: u32, zeta: f64) -> Result<Option<u8>> {
    validate_zeta(zeta)?;
    check_sines(r, zeta)?;
    let kappa = ((r as f64 - 1.0) * zeta / PI).floor() as i64;
    let slope = PI * zeta / (PI - zeta);
    let w = |p: i64| {
        ((p as f64 - 0.5 * kappa as f64 + (r as f64 - 1.0) * zeta / (2.0 * PI)) * PI / zeta).floor()
            as i64
    };
    let sign = if kappa % 2 == 0 { 1.0 } else { -1.0 };
    for k in 1..(r as i64 - 1) {
        // The window index p with w_p + 1 <= k <= w_{p+1} - 1, if any.
        let mut p = 0i64;
        while w(p + 1) <= k && p < 10_000 {
            p += 1;
        }
        if !(w(p) + 1 <= k && k <= w(p + 1) - 1) {
            continue;
        }
        let a = (slope * (k - p) as f64).sin();
        let b = (slope * (r as i64 - k + p - kappa - 1) as f64).sin();
        if a.abs() < DEGENERACY || b.abs() < DEGENERACY {
            return Err(XxzError::DegenerateAnisotropy { k: k as u32, zeta });
        }
        if !(sign * a * b > 0.0) {
            return Ok(None);
        }
    }
    Ok(Some((kappa.rem_euclid(2)) as u8))
}

/// Existence and parity of the `r`-string; `sgn_p_prime` is left unset.
pub fn string_exists(r: u32, zeta: f64) -> Result<StringSpec> {
    validate_zeta(zeta)?;
    if r == 0 {
        return Err(XxzError::InvalidArgument("string length must be at least 1".into()));
    }
    if r == 1 {
        return Ok(StringSpec {
            r,
            exists: true,
            sigma: None,
            sgn_p_prime: None,
            regime: ConditionRegime::Elementary,
        });
    }
    let (parity, regime) = if (zeta - FRAC_PI_2).abs() < 1e-14 {
        let above = product_of_sines_parity(r, zeta)?;
        let below = shifted_lattice_parity(r, zeta)?;
        if above != below {
            return Err(XxzError::ConsistencyFailure(format!(
                "{r}-string verdicts differ at zeta = pi/2: {above:?} vs {below:?}"
            )));
        }
        (above, ConditionRegime::Boundary)
    } else if zeta > FRAC_PI_2 {
        (product_of_sines_parity(r, zeta)?, ConditionRegime::ProductOfSines)
    } else {
        (shifted_lattice_parity(r, zeta)?, ConditionRegime::ShiftedLattice)
    };
    Ok(StringSpec {
        r,
        exists: parity.is_some(),
        sigma: parity,
        sgn_p_prime: None,
        regime,
    })
}

/// Real parts at which the sign of `p'_r` is sampled on the carrier line.
pub const SIGN_PROBES: [f64; 5] = [-2.37, -0.91, 0.13, 1.06, 2.71];

/// Sign of `p'_r` on its carrier line, required to agree at all probes.
pub fn momentum_sign(r: u32, ds: &DressedSet) -> Result<i8> {
    let spec = string_exists(r, ds.zeta())?;
    if !spec.exists {
        return Err(XxzError::InvalidString { r, zeta: ds.zeta() });
    }
    let offset = spec.line_offset().unwrap_or(0.0);
    let samples = SIGN_PROBES
        .iter()
        .map(|&x| ds.momentum_d1(r, Complex64::new(x, offset)).map(|v| v.re))
        .collect::<Result<Vec<_>>>()?;
    let positive = samples.iter().all(|&v| v > 0.0);
    let negative = samples.iter().all(|&v| v < 0.0);
    match (positive, negative) {
        (true, _) => Ok(1),
        (_, true) => Ok(-1),
        _ => Err(XxzError::SignInconsistency { r, samples }),
    }
}

/// Catalogue of strings `1..=r_max` with parities and momentum signs.
pub fn catalog(zeta: f64, r_max: u32, ds: &DressedSet) -> Result<Vec<StringSpec>> {
    if r_max == 0 {
        return Err(XxzError::InvalidArgument("r_max must be at least 1".into()));
    }
    (1..=r_max)
        .map(|r| {
            let mut spec = string_exists(r, zeta)?;
            if spec.exists {
                spec.sgn_p_prime = Some(if r == 1 { 1 } else { momentum_sign(r, ds)? });
            }
            Ok(spec)
        })
        .collect()
}

/// True when both condition families give the same verdict (and parity).
pub fn check_condition_equivalence(zeta: f64, r: u32) -> Result<bool> {
    if !(zeta > 0.0 && zeta < FRAC_PI_2) {
        return Err(XxzError::InvalidArgument(format!(
            "condition comparison needs 0 < zeta < pi/2, got {zeta}"
        )));
    }
    Ok(product_of_sines_parity(r, zeta)? == shifted_lattice_parity(r, zeta)?)
}

/// How the tabulated momentum sign is expressed through `s_k = sgn sin(k zeta)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SignRule {
    /// `s_r`.
    Own,
    /// `-s_r`.
    MinusOwn,
    /// `s_2 s_3`.
    SecondTimesThird,
}

impl SignRule {
    pub fn evaluate(self, r: u32, zeta: f64) -> i8 {
        let s = |k: u32| sign_of((k as f64 * zeta).sin());
        match self {
            SignRule::Own => s(r),
            SignRule::MinusOwn => -s(r),
            SignRule::SecondTimesThird => s(2) * s(3),
        }
    }
}

/// One row of the reference existence table: an open interval of
/// `zeta/pi` on which the `r`-string exists with a given parity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TabulatedInterval {
    pub r: u32,
    pub lower: f64,
    pub upper: f64,
    pub sigma: u8,
    pub sign: SignRule,
}

const fn row(r: u32, lower: f64, upper: f64, sigma: u8, sign: SignRule) -> TabulatedInterval {
    TabulatedInterval {
        r,
        lower,
        upper,
        sigma,
        sign,
    }
}

use SignRule::{MinusOwn, Own, SecondTimesThird};

/// Reference existence table for `r = 2..=8`, bounds in units of `pi`.
/// Outside the listed intervals the string does not exist.
pub const TABULATED: &[TabulatedInterval] = &[
    row(2, 0.0, 0.5, 0, Own),
    row(2, 0.5, 1.0, 0, Own),
    row(3, 0.0, 1.0 / 3.0, 0, SecondTimesThird),
    row(3, 1.0 / 3.0, 0.5, 0, SecondTimesThird),
    row(3, 0.5, 2.0 / 3.0, 1, SecondTimesThird),
    row(3, 2.0 / 3.0, 1.0, 1, SecondTimesThird),
    row(4, 0.0, 1.0 / 3.0, 0, Own),
    row(4, 2.0 / 3.0, 1.0, 0, Own),
    row(5, 0.0, 0.25, 0, Own),
    row(5, 1.0 / 3.0, 0.5, 1, MinusOwn),
    row(5, 0.5, 2.0 / 3.0, 0, Own),
    row(5, 0.75, 1.0, 1, MinusOwn),
    row(6, 0.0, 0.2, 0, Own),
    row(6, 0.8, 1.0, 0, Own),
    row(7, 0.0, 1.0 / 6.0, 0, Own),
    row(7, 0.25, 1.0 / 3.0, 1, MinusOwn),
    row(7, 0.4, 0.5, 0, Own),
    row(7, 0.5, 0.6, 1, MinusOwn),
    row(7, 2.0 / 3.0, 0.75, 0, Own),
    row(7, 5.0 / 6.0, 1.0, 1, MinusOwn),
    row(8, 0.0, 1.0 / 7.0, 0, Own),
    row(8, 1.0 / 3.0, 0.4, 0, Own),
    row(8, 0.6, 2.0 / 3.0, 0, Own),
    row(8, 6.0 / 7.0, 1.0, 0, Own),
];

/// Reference entry `(sigma, sgn p'_r)` at `zeta`, or `None` where the table
/// lists no string. Only `r = 2..=8` is tabulated.
pub fn tabulated_entry(r: u32, zeta: f64) -> Option<(u8, i8)> {
    let x = zeta / PI;
    TABULATED
        .iter()
        .find(|row| row.r == r && row.lower < x && x < row.upper)
        .map(|row| (row.sigma, row.sign.evaluate(r, zeta)))
}

/// Anisotropies (in radians) probing every tabulated interval of length `r`
/// and every gap between them, three per interval, nudged off points where
/// some `sin(k zeta)`, `k <= r`, nearly vanishes.
pub fn table_probes(r: u32) -> Vec<f64> {
    let mut edges: Vec<f64> = vec![0.0, 1.0];
    for row in TABULATED.iter().filter(|row| row.r == r) {
        edges.push(row.lower);
        edges.push(row.upper);
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut probes = Vec::new();
    for pair in edges.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        for t in [0.21, 0.53, 0.79] {
            let mut x = lo + t * (hi - lo);
            let clear = |x: f64| {
                (1..=r + 1).all(|k| (k as f64 * x * PI).sin().abs() > 2e-2)
                    && (x - 0.5).abs() > 2e-2
            };
            let mut tries = 0;
            while !clear(x) && tries < 20 {
                x += 0.011 * (hi - lo);
                tries += 1;
            }
            probes.push(x * PI);
        }
    }
    probes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dressed::ModelParams;

    #[test]
    fn examples() {
        let s = string_exists(2, 0.7 * PI).unwrap();
        assert!(s.exists);
        assert_eq!(s.sigma, Some(0));
        let s = string_exists(3, 0.6 * PI).unwrap();
        assert_eq!(s.sigma, Some(1));
        assert!(!string_exists(4, 0.45 * PI).unwrap().exists);
        assert_eq!(string_exists(1, 0.3).unwrap().regime, ConditionRegime::Elementary);
    }

    #[test]
    fn boundary_agreement_for_two_strings() {
        let s = string_exists(2, FRAC_PI_2).unwrap();
        assert_eq!(s.regime, ConditionRegime::Boundary);
        assert_eq!(s.sigma, Some(0));
        let e = string_exists(3, FRAC_PI_2).unwrap_err();
        assert_eq!(e.kind(), "degenerate-anisotropy");
    }

    #[test]
    fn equivalence_examples() {
        assert!(check_condition_equivalence(0.3 * PI, 3).unwrap());
        for r in 2..=8 {
            assert!(check_condition_equivalence(0.1065 * PI, r).unwrap());
        }
        assert!(check_condition_equivalence(0.45 * PI, 5).unwrap());
        assert!(check_condition_equivalence(0.7 * PI, 3).is_err());
    }

    #[test]
    fn equivalence_sweep_logs_counterexamples() {
        let mut disagreements = Vec::new();
        for i in 1..=50 {
            let zeta = 0.5 * PI * (i as f64 - 0.5) / 50.0;
            for r in 2..=8 {
                match check_condition_equivalence(zeta, r) {
                    Ok(true) | Err(_) => {}
                    Ok(false) => disagreements.push((zeta / PI, r)),
                }
            }
        }
        if !disagreements.is_empty() {
            eprintln!("condition families disagree at {disagreements:?}");
        }
        assert!(disagreements.is_empty());
    }

    #[test]
    fn existence_reproduces_table() {
        for r in 2..=8 {
            for zeta in table_probes(r) {
                let spec = string_exists(r, zeta).unwrap();
                let entry = tabulated_entry(r, zeta);
                assert_eq!(spec.exists, entry.is_some(), "r = {r}, zeta/pi = {}", zeta / PI);
                if let Some((sigma, _)) = entry {
                    assert_eq!(spec.sigma, Some(sigma), "r = {r}, zeta/pi = {}", zeta / PI);
                }
            }
        }
    }

    #[test]
    fn two_string_sign_is_sign_of_sin_two_zeta() {
        for zeta in [0.13, 0.9, 1.3, 1.9, 2.4, 2.95] {
            let ds = DressedSet::solve(&ModelParams::with_endpoint(1.0, zeta, 0.2, 64).unwrap()).unwrap();
            assert_eq!(momentum_sign(2, &ds).unwrap(), sign_of((2.0 * zeta).sin()));
        }
    }

    #[test]
    fn catalog_shapes() {
        let ds = DressedSet::solve(&ModelParams::with_endpoint(1.0, 0.45 * PI, 0.2, 64).unwrap()).unwrap();
        let one = catalog(0.45 * PI, 1, &ds).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].exists);
        assert!(catalog(0.45 * PI, 0, &ds).is_err());
    }
}
