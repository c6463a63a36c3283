//! Terms of the long-distance / large-time expansion of two-point functions.
//!
//! A term is labelled by Umklapp deficiencies `ell_+-` at the Fermi edges and
//! by how many excitations sit at each saddle point of the phase functions.
//! Everything universal is computed: edge exponents `Delta_+-`, the saddle
//! decay exponent `Delta_sp = sum n^2 / 2`, the oscillation phase and the
//! Barnes-G amplitude `C_n`. The form-factor amplitude is not known in closed
//! form and is carried as an opaque placeholder of unit weight.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dressed::DressedSet;
use crate::error::{Result, XxzError};
use crate::quadrature::barnes_g;
use crate::saddle::{SaddlePoint, StructureReport};
use crate::strings::string_exists;

const DOMAIN_TOLERANCE: f64 = 1e-12;

/// Which excitations produce power laws at a given `v = m / t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `|v| > v_inf` (or `v_max`): Umklapp excitations only.
    Conformal,
    /// `v_F < |v| < v_inf`: particles at the real-line saddle.
    SpaceLike,
    /// `|v| < v_F`: holes at the real-line saddle.
    TimeLike,
    /// Non-minimal saddle structure below `v_max`.
    General,
}

impl Regime {
    /// Regime implied by `structure`; non-minimal structures below `v_max`
    /// are `General`.
    pub fn infer(structure: &StructureReport) -> Self {
        let v = structure.v.abs();
        if structure.minimal_all_v {
            if v > structure.v_inf {
                Regime::Conformal
            } else if v > structure.v_fermi {
                Regime::SpaceLike
            } else {
                Regime::TimeLike
            }
        } else if v > structure.v_max {
            Regime::Conformal
        } else {
            Regime::General
        }
    }

    /// `kappa_v`: `-1` when the real-line saddle carries holes, `+1` otherwise.
    pub fn kappa(self, v: f64, v_fermi: f64) -> i32 {
        match self {
            Regime::TimeLike => -1,
            Regime::SpaceLike | Regime::Conformal => 1,
            Regime::General => {
                if v.abs() < v_fermi {
                    -1
                } else {
                    1
                }
            }
        }
    }
}

/// Count of excitations at one saddle of an `r`-string line, `r >= 2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StringCount {
    pub r: u32,
    /// Saddle index along the line; always 0 under the minimal structure.
    pub index: usize,
    pub n: u32,
}

/// Excitation content of one term. Field order is the lexicographic order
/// used for ties.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ExcitationConfig {
    pub s_gamma: i32,
    pub ell_plus: i32,
    pub ell_minus: i32,
    /// Holes (time-like) or real-line particles (space-like) at `omega_0`.
    pub n0: u32,
    /// Particles at `omega_1`.
    pub n1: u32,
    /// Non-zero string counts, sorted by `(r, index)`.
    pub strings: Vec<StringCount>,
}

impl ExcitationConfig {
    pub fn umklapp(s_gamma: i32, ell_plus: i32, ell_minus: i32) -> Self {
        Self {
            s_gamma,
            ell_plus,
            ell_minus,
            n0: 0,
            n1: 0,
            strings: Vec::new(),
        }
    }

    /// The conformal configuration `(ell + s, -ell)`.
    pub fn conformal(s_gamma: i32, ell: i32) -> Self {
        Self::umklapp(s_gamma, ell + s_gamma, -ell)
    }

    /// `ell_+ + ell_- + kappa n0 + n1 + sum r n_r`; equals `s_gamma` on the
    /// admissible set.
    pub fn spin_balance(&self, kappa: i32) -> i64 {
        i64::from(self.ell_plus)
            + i64::from(self.ell_minus)
            + i64::from(kappa) * i64::from(self.n0)
            + i64::from(self.n1)
            + self.strings.iter().map(|s| i64::from(s.r) * i64::from(s.n)).sum::<i64>()
    }

    pub fn is_massless(&self) -> bool {
        self.n0 == 0 && self.n1 == 0 && self.strings.iter().all(|s| s.n == 0)
    }

    /// `sum n^2 / 2` over every saddle count.
    pub fn delta_sp(&self) -> f64 {
        let sq = |n: u32| f64::from(n) * f64::from(n);
        0.5 * (sq(self.n0) + sq(self.n1) + self.strings.iter().map(|s| sq(s.n)).sum::<f64>())
    }

    /// Every saddle count multiplied by `k`.
    pub fn scaled(&self, k: u32) -> Self {
        let mut out = self.clone();
        out.n0 *= k;
        out.n1 *= k;
        for s in &mut out.strings {
            s.n *= k;
        }
        out
    }
}

/// Rapidities of an excited state.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RapiditySet {
    pub s_gamma: i32,
    pub ell_plus: i32,
    pub ell_minus: i32,
    /// Holes, on `[-q, q]`.
    pub holes: Vec<Complex64>,
    /// 1-string particles, on `R \ (-q, q)` or `R + i pi/2`.
    pub particles: Vec<Complex64>,
    /// `(r, rapidities)` for `r >= 2`, each on its carrier line.
    pub strings: Vec<(u32, Vec<Complex64>)>,
}

impl RapiditySet {
    pub fn umklapp(s_gamma: i32, ell_plus: i32, ell_minus: i32) -> Self {
        Self {
            s_gamma,
            ell_plus,
            ell_minus,
            ..Self::default()
        }
    }

    /// Checks every rapidity against its admissible domain.
    pub fn validate(&self, ds: &DressedSet) -> Result<()> {
        let q = ds.q();
        let off = |what: &str, z: Complex64| {
            Err(XxzError::InvalidArgument(format!("{what} rapidity {z} lies off its domain")))
        };
        for &mu in &self.holes {
            if mu.im.abs() > DOMAIN_TOLERANCE || mu.re.abs() > q * (1.0 + DOMAIN_TOLERANCE) {
                return off("hole", mu);
            }
        }
        for &nu in &self.particles {
            let real_outside = nu.im.abs() <= DOMAIN_TOLERANCE && nu.re.abs() >= q * (1.0 - DOMAIN_TOLERANCE);
            let shifted = (nu.im - FRAC_PI_2).abs() <= DOMAIN_TOLERANCE;
            if !(real_outside || shifted) {
                return off("particle", nu);
            }
        }
        for (r, nus) in &self.strings {
            if *r < 2 {
                return Err(XxzError::InvalidArgument("string groups need r >= 2".into()));
            }
            let spec = string_exists(*r, ds.zeta())?;
            let offset = match spec.line_offset() {
                Some(o) if spec.exists => o,
                _ => return Err(XxzError::InvalidString { r: *r, zeta: ds.zeta() }),
            };
            for &nu in nus {
                if (nu.im - offset).abs() > DOMAIN_TOLERANCE {
                    return off(&format!("{r}-string"), nu);
                }
            }
        }
        Ok(())
    }

    /// `(r, rapidity)` of every massive particle, 1-string particles first.
    fn particle_like(&self) -> impl Iterator<Item = (u32, Complex64)> + '_ {
        self.particles
            .iter()
            .map(|&nu| (1, nu))
            .chain(self.strings.iter().flat_map(|(r, nus)| nus.iter().map(move |&nu| (*r, nu))))
    }

    fn umklapp_momentum(&self, p_fermi: f64) -> f64 {
        p_fermi * f64::from(self.ell_plus - self.ell_minus)
    }
}

/// Excitation energy `E`, momentum `P`, and `U = P - E / v - pi s`.
pub fn excitation_energy_momentum(y: &RapiditySet, v: f64, ds: &DressedSet) -> Result<(f64, f64, Complex64)> {
    if !v.is_finite() || v == 0.0 {
        return Err(XxzError::InvalidArgument(format!("velocity ratio must be finite and non-zero, got {v}")));
    }
    y.validate(ds)?;
    let mut energy = Complex64::new(0.0, 0.0);
    let mut momentum = Complex64::new(y.umklapp_momentum(ds.p_fermi()) + PI * f64::from(y.s_gamma), 0.0);
    for (r, nu) in y.particle_like() {
        energy += ds.energy(r, nu)?;
        momentum += ds.momentum(r, nu)?;
    }
    for &mu in &y.holes {
        energy -= ds.energy(1, mu)?;
        momentum -= ds.momentum(1, mu)?;
    }
    let u = momentum - energy / v - PI * f64::from(y.s_gamma);
    Ok((energy.re, momentum.re, u))
}

fn shift_function(omega: Complex64, y: &RapiditySet, ds: &DressedSet) -> Result<Complex64> {
    let q = Complex64::new(ds.q(), 0.0);
    let mut total = 0.5 * f64::from(y.s_gamma) * ds.charge_at(omega)?;
    for &mu in &y.holes {
        total += ds.phase_at(1, omega, mu)?;
    }
    for (r, nu) in y.particle_like() {
        total -= ds.phase_at(r, omega, nu)?;
    }
    if y.ell_plus != 0 {
        total -= f64::from(y.ell_plus) * ds.phase_at(1, omega, q)?;
    }
    if y.ell_minus != 0 {
        total -= f64::from(y.ell_minus) * ds.phase_at(1, omega, -q)?;
    }
    Ok(total)
}

/// `theta(omega | Y)`, minus the shift function of the excitation `Y`.
pub fn shift_exponent(omega: Complex64, y: &RapiditySet, ds: &DressedSet) -> Result<f64> {
    y.validate(ds)?;
    Ok(shift_function(omega, y, ds)?.re)
}

/// Edge exponent `theta_ups(Y) = theta(ups q | Y) - ups ell_ups`.
pub fn theta_upsilon(y: &RapiditySet, upsilon: i8, ds: &DressedSet) -> Result<f64> {
    let (sign, ell) = edge(upsilon, y.ell_plus, y.ell_minus)?;
    Ok(shift_exponent(Complex64::new(sign * ds.q(), 0.0), y, ds)? - sign * f64::from(ell))
}

fn edge(upsilon: i8, ell_plus: i32, ell_minus: i32) -> Result<(f64, i32)> {
    match upsilon {
        1 => Ok((1.0, ell_plus)),
        -1 => Ok((-1.0, ell_minus)),
        _ => Err(XxzError::InvalidArgument("upsilon must be +1 or -1".into())),
    }
}

/// Closed form `ell Z(q) - ups s / (2 Z(q))` of the conformal edge exponents.
pub fn conformal_exponent(ell: i32, upsilon: i8, s_gamma: i32, z_edge: f64) -> f64 {
    f64::from(ell) * z_edge - f64::from(upsilon) * f64::from(s_gamma) / (2.0 * z_edge)
}

/// What occupies one saddle slot of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotKind {
    /// `omega_0`: hole when `kappa = -1`, particle otherwise.
    RealLine,
    /// `omega_1`: 1-string particle off the Fermi zone.
    SecondOneString,
    /// A saddle on an `r`-string line.
    String { r: u32, index: usize },
}

/// Saddle data needed to assemble any term at fixed `v`.
#[derive(Clone, Debug, Serialize)]
pub struct Slot {
    pub kind: SlotKind,
    pub saddle: SaddlePoint,
    /// `phi_r(+q, omega)` and `phi_r(-q, omega)`.
    pub phase_edges: [Complex64; 2],
}

/// Placeholder for the non-universal form-factor amplitude of a term.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AmplitudePlaceholder {
    pub label: String,
    /// Default weight; the true amplitude is not computed.
    pub weight: f64,
    /// Rapidities at the saddle points that the amplitude is evaluated at.
    pub rapidities: RapiditySet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticTerm {
    pub config: ExcitationConfig,
    pub regime: Regime,
    pub kappa: i32,
    /// Universal amplitude `C_n`.
    pub c_n: Complex64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub delta_sp: f64,
    /// `Delta_+^2 + Delta_-^2 + Delta_sp`.
    pub total_exponent: f64,
    /// Oscillation phase `phi_n(v)` per unit distance.
    pub phase: f64,
    /// `p_F (ell_+ - ell_-) + pi (s mod 2)`: Umklapp momentum plus the
    /// `(-1)^(m s)` staggering.
    pub wavevector: f64,
    pub amplitude_placeholder: AmplitudePlaceholder,
}

fn pick_closest(saddles: &[SaddlePoint], skip: Option<&SaddlePoint>, pred: impl Fn(&SaddlePoint) -> bool) -> Option<SaddlePoint> {
    saddles
        .iter()
        .filter(|s| Some(*s) != skip && pred(s))
        .min_by(|a, b| a.omega.re.abs().total_cmp(&b.omega.re.abs()))
        .cloned()
}

/// Precomputed saddle data at fixed `v`; assembling a term is then pure
/// arithmetic.
pub struct Assembler<'a> {
    ds: &'a DressedSet,
    v: f64,
    regime: Regime,
    kappa: i32,
    z_edge: f64,
    /// `phi_1(ups q, ups' q)` for `ups, ups' = +, -`.
    edge_phases: [[f64; 2]; 2],
    slots: Vec<Slot>,
}

impl<'a> Assembler<'a> {
    pub fn new(v: f64, ds: &'a DressedSet, structure: &StructureReport) -> Result<Self> {
        Self::with_regime(v, ds, structure, Regime::infer(structure))
    }

    pub fn with_regime(v: f64, ds: &'a DressedSet, structure: &StructureReport, regime: Regime) -> Result<Self> {
        if (structure.v - v).abs() > 1e-12 * v.abs().max(1.0) {
            return Err(XxzError::RegimeMismatch(format!(
                "structure was classified at v = {} but terms are requested at v = {v}",
                structure.v
            )));
        }
        let conformal_edge = if structure.minimal_all_v { structure.v_inf } else { structure.v_max };
        let is_conformal = v.abs() > conformal_edge;
        let consistent = match regime {
            Regime::Conformal => is_conformal,
            Regime::SpaceLike => !is_conformal && v.abs() > structure.v_fermi,
            Regime::TimeLike => v.abs() < structure.v_fermi,
            Regime::General => !is_conformal,
        };
        if !consistent {
            return Err(XxzError::RegimeMismatch(format!(
                "{regime:?} does not apply at v = {v} (v_F = {}, v_inf = {}, v_max = {})",
                structure.v_fermi, structure.v_inf, structure.v_max
            )));
        }
        let kappa = regime.kappa(v, structure.v_fermi);
        let q = ds.q();
        let z_edge = ds.charge_at(Complex64::new(q, 0.0))?.re;
        let mut edge_phases = [[0.0; 2]; 2];
        for (i, a) in [q, -q].iter().enumerate() {
            for (j, b) in [q, -q].iter().enumerate() {
                edge_phases[i][j] = ds.phase_at(1, Complex64::new(*a, 0.0), Complex64::new(*b, 0.0))?.re;
            }
        }
        let slots = if regime == Regime::Conformal {
            Vec::new()
        } else {
            Self::build_slots(ds, structure, kappa)?
        };
        Ok(Self {
            ds,
            v,
            regime,
            kappa,
            z_edge,
            edge_phases,
            slots,
        })
    }

    fn build_slots(ds: &DressedSet, structure: &StructureReport, kappa: i32) -> Result<Vec<Slot>> {
        let q = ds.q();
        let real = structure.line(0).map(|l| l.saddles.clone()).unwrap_or_default();
        let shifted = structure.line(1).map(|l| l.saddles.clone()).unwrap_or_default();
        let omega0 = if kappa < 0 {
            pick_closest(&real, None, |s| s.omega.re.abs() < q)
        } else {
            pick_closest(&real, None, |s| s.omega.re.abs() >= q)
        };
        let omega1 = pick_closest(&shifted, None, |_| true)
            .or_else(|| pick_closest(&real, omega0.as_ref(), |s| s.omega.re.abs() >= q));

        let mut picked = Vec::new();
        if let Some(s) = omega0 {
            picked.push((SlotKind::RealLine, s));
        }
        if let Some(s) = omega1 {
            picked.push((SlotKind::SecondOneString, s));
        }
        for line in structure.lines.iter().filter(|l| l.species >= 2) {
            if !structure.n_sp.contains(&line.species) {
                continue;
            }
            for (index, s) in line.saddles.iter().enumerate() {
                picked.push((SlotKind::String { r: line.r, index }, s.clone()));
            }
        }
        picked
            .into_par_iter()
            .map(|(kind, saddle)| {
                let plus = ds.phase_at(saddle.r, Complex64::new(q, 0.0), saddle.omega)?;
                let minus = ds.phase_at(saddle.r, Complex64::new(-q, 0.0), saddle.omega)?;
                Ok(Slot {
                    kind,
                    saddle,
                    phase_edges: [plus, minus],
                })
            })
            .collect()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn kappa(&self) -> i32 {
        self.kappa
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn z_edge(&self) -> f64 {
        self.z_edge
    }

    fn slot(&self, kind: SlotKind) -> Option<&Slot> {
        self.slots.iter().find(|s| s.kind == kind)
    }

    /// Per-slot counts of `config`, or a regime mismatch when a count has
    /// no saddle to sit at.
    fn occupied(&self, config: &ExcitationConfig) -> Result<Vec<(&Slot, u32)>> {
        let mut out = Vec::new();
        let mut want = vec![(SlotKind::RealLine, config.n0), (SlotKind::SecondOneString, config.n1)];
        want.extend(
            config
                .strings
                .iter()
                .map(|s| (SlotKind::String { r: s.r, index: s.index }, s.n)),
        );
        for (kind, n) in want {
            if n == 0 {
                continue;
            }
            match self.slot(kind) {
                Some(slot) => out.push((slot, n)),
                None => {
                    return Err(XxzError::RegimeMismatch(format!(
                        "no saddle available for {kind:?} at v = {}",
                        self.v
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Assembles the term of `config`.
    pub fn term(&self, config: &ExcitationConfig) -> Result<AsymptoticTerm> {
        if config.spin_balance(self.kappa) != i64::from(config.s_gamma) {
            return Err(XxzError::RegimeMismatch(format!(
                "configuration {config:?} violates the spin constraint with kappa = {}",
                self.kappa
            )));
        }
        let occupied = self.occupied(config)?;
        let kappa = f64::from(self.kappa);
        let s = f64::from(config.s_gamma);

        let mut deltas = [0.0; 2];
        for (i, (sign, ell)) in [(1.0, config.ell_plus), (-1.0, config.ell_minus)].into_iter().enumerate() {
            let mut d = -sign * f64::from(ell) + 0.5 * s * self.z_edge
                - f64::from(config.ell_plus) * self.edge_phases[i][0]
                - f64::from(config.ell_minus) * self.edge_phases[i][1];
            for (slot, n) in &occupied {
                let weight = if slot.kind == SlotKind::RealLine { kappa } else { 1.0 };
                d -= weight * f64::from(*n) * slot.phase_edges[i].re;
            }
            deltas[i] = d;
        }

        let mut c_n = Complex64::new(1.0, 0.0);
        let mut phase = 0.0;
        let mut rapidities = RapiditySet::umklapp(config.s_gamma, config.ell_plus, config.ell_minus);
        for (slot, n) in &occupied {
            let n = *n;
            let nf = f64::from(n);
            let sp = &slot.saddle;
            let sign = if sp.p_prime_sign < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
            let mut factor = Complex64::new(barnes_g(n + 1)? * sign / (2.0 * PI).powf(0.5 * nf), 0.0);
            let exponent = 0.5 * nf * nf;
            let u2 = Complex64::new(sp.u_second, 0.0);
            let i = Complex64::i();
            factor *= match slot.kind {
                SlotKind::RealLine => (i * kappa / u2).powf(exponent),
                SlotKind::SecondOneString => (i / u2).powf(exponent),
                SlotKind::String { .. } => (-i * u2).powf(-exponent),
            };
            c_n *= factor;
            let weight = if slot.kind == SlotKind::RealLine { kappa } else { 1.0 };
            phase += weight * nf * sp.u_value.re;
            let copies = std::iter::repeat(sp.omega).take(n as usize);
            match slot.kind {
                SlotKind::RealLine if self.kappa < 0 => rapidities.holes.extend(copies),
                SlotKind::RealLine | SlotKind::SecondOneString => rapidities.particles.extend(copies),
                SlotKind::String { r, .. } => match rapidities.strings.iter_mut().find(|(rr, _)| *rr == r) {
                    Some((_, v)) => v.extend(copies),
                    None => rapidities.strings.push((r, copies.collect())),
                },
            }
        }

        let delta_sp = config.delta_sp();
        let parity = f64::from(config.s_gamma.rem_euclid(2));
        Ok(AsymptoticTerm {
            config: config.clone(),
            regime: self.regime,
            kappa: self.kappa,
            c_n,
            delta_plus: deltas[0],
            delta_minus: deltas[1],
            delta_sp,
            total_exponent: deltas[0] * deltas[0] + deltas[1] * deltas[1] + delta_sp,
            phase,
            wavevector: self.ds.p_fermi() * f64::from(config.ell_plus - config.ell_minus) + PI * parity,
            amplitude_placeholder: AmplitudePlaceholder {
                label: placeholder_label(config),
                weight: 1.0,
                rapidities,
            },
        })
    }

    /// Admissible configurations with `|ell_+-| <= bound` and every saddle
    /// count `<= bound`, in lexicographic order.
    pub fn enumerate(&self, s_gamma: i32, bound: u32) -> Vec<ExcitationConfig> {
        let kinds: Vec<SlotKind> = self.slots.iter().map(|s| s.kind).collect();
        enumerate_over(s_gamma, bound, self.kappa, &kinds)
    }
}

fn placeholder_label(config: &ExcitationConfig) -> String {
    let mut label = format!(
        "F[s={};l+={},l-={};n0={},n1={}",
        config.s_gamma, config.ell_plus, config.ell_minus, config.n0, config.n1
    );
    for s in &config.strings {
        label.push_str(&format!(";n{}.{}={}", s.r, s.index, s.n));
    }
    label.push(']');
    label
}

fn enumerate_over(s_gamma: i32, bound: u32, kappa: i32, kinds: &[SlotKind]) -> Vec<ExcitationConfig> {
    let b = bound as i32;
    let mut out = Vec::new();
    let mut counts = vec![0u32; kinds.len()];
    loop {
        let mut cfg = ExcitationConfig::umklapp(s_gamma, 0, 0);
        for (kind, &n) in kinds.iter().zip(&counts) {
            match kind {
                SlotKind::RealLine => cfg.n0 = n,
                SlotKind::SecondOneString => cfg.n1 = n,
                SlotKind::String { r, index } => {
                    if n > 0 {
                        cfg.strings.push(StringCount { r: *r, index: *index, n });
                    }
                }
            }
        }
        cfg.strings.sort();
        let massive = cfg.spin_balance(kappa);
        for ell_plus in -b..=b {
            let ell_minus = i64::from(s_gamma) - massive - i64::from(ell_plus);
            if ell_minus.abs() <= i64::from(b) {
                let mut c = cfg.clone();
                c.ell_plus = ell_plus;
                c.ell_minus = ell_minus as i32;
                out.push(c);
            }
        }
        // Odometer over the slot counts.
        let mut k = 0;
        while k < counts.len() && counts[k] == bound {
            counts[k] = 0;
            k += 1;
        }
        if k == counts.len() {
            break;
        }
        counts[k] += 1;
    }
    out.sort();
    out
}

/// Admissible configurations for `regime`; slots come from `structure`.
pub fn enumerate_configs(
    s_gamma: i32,
    regime: Regime,
    bound: u32,
    structure: &StructureReport,
) -> Result<Vec<ExcitationConfig>> {
    if !(-1..=1).contains(&s_gamma) {
        return Err(XxzError::InvalidArgument(format!("operator spin must be -1, 0 or 1, got {s_gamma}")));
    }
    let kappa = regime.kappa(structure.v, structure.v_fermi);
    if regime == Regime::Conformal {
        return Ok(enumerate_over(s_gamma, bound, kappa, &[]));
    }
    let mut kinds = Vec::new();
    let real = structure.line(0).map_or(0, |l| l.count);
    let shifted = structure.line(1).map_or(0, |l| l.count);
    if real > 0 {
        kinds.push(SlotKind::RealLine);
    }
    if shifted > 0 || real > 1 {
        kinds.push(SlotKind::SecondOneString);
    }
    for line in structure.lines.iter().filter(|l| l.species >= 2 && structure.n_sp.contains(&l.species)) {
        kinds.extend((0..line.count).map(|index| SlotKind::String { r: line.r, index }));
    }
    Ok(enumerate_over(s_gamma, bound, kappa, &kinds))
}

/// One-off assembly; prefer [`Assembler`] for many terms at the same `v`.
pub fn assemble_term(
    config: &ExcitationConfig,
    v: f64,
    ds: &DressedSet,
    structure: &StructureReport,
) -> Result<AsymptoticTerm> {
    Assembler::new(v, ds, structure)?.term(config)
}

/// Slowest decay first; exponents equal to 1e-10 tie and fall back to the
/// configuration order.
pub fn rank_terms(mut terms: Vec<AsymptoticTerm>) -> Result<Vec<AsymptoticTerm>> {
    if terms.is_empty() {
        return Err(XxzError::InvalidArgument("cannot rank an empty list of terms".into()));
    }
    let key = |t: &AsymptoticTerm| (t.total_exponent * 1e10).round() as i64;
    terms.sort_by(|a, b| match key(a).cmp(&key(b)) {
        Ordering::Equal => a.config.cmp(&b.config),
        other => other,
    });
    Ok(terms)
}
