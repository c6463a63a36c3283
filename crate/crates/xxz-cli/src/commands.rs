//! One function per subcommand; each returns the rendered report.

use serde::Serialize;
use xxz_core::asymptotics::{rank_terms, Assembler, AsymptoticTerm};
use xxz_core::cache::{CacheEntry, SolveCache};
use xxz_core::contour::{run_suite, CheckRecord, Suite};
use xxz_core::saddle::{catalogued_species, classify_structure, LineProfile, Thresholds};
use xxz_core::strings::catalog;
use xxz_core::{Complex64, DressedSet, ModelParams, StringSpec, StructureReport};

use crate::args::{CacheAction, Command, Options, SuiteArg};
use crate::error::CliError;
use crate::output::{Cell, Report};

/// Fermi endpoint used by `strings` when neither `--q` nor `--h` is given;
/// momentum signs do not depend on it.
const DEFAULT_STRING_ENDPOINT: f64 = 0.2;
/// Every `CURVE_STRIDE`-th scan sample goes into a velocity curve.
const CURVE_STRIDE: usize = 10;

pub fn run(command: &Command, o: &Options) -> Result<Vec<u8>, CliError> {
    match command {
        Command::Solve => solve(o)?.render(o.format),
        Command::Strings => strings(o)?.render(o.format),
        Command::Velocities => velocities(o)?.render(o.format),
        Command::Saddles => saddles(o)?.render(o.format),
        Command::Exponents => exponents(o)?.render(o.format),
        Command::Verify => verify(o),
        Command::Cache { action } => cache(*action, o),
    }
}

fn require_zeta(o: &Options) -> Result<f64, CliError> {
    o.zeta
        .ok_or_else(|| CliError::Usage("--zeta is required".into()))
}

fn require_v(o: &Options) -> Result<f64, CliError> {
    o.v.ok_or_else(|| CliError::Usage("--v is required".into()))
}

fn order(o: &Options) -> usize {
    o.order as usize
}

fn open_cache(o: &Options) -> Result<Option<SolveCache>, CliError> {
    Ok(match &o.cache_dir {
        Some(dir) => Some(SolveCache::open(dir)?),
        None => None,
    })
}

fn dressed(o: &Options, default_q: Option<f64>) -> Result<DressedSet, CliError> {
    let zeta = require_zeta(o)?;
    let params = match (o.q, o.h, default_q) {
        (Some(_), Some(_), _) => return Err(CliError::Usage("--q and --h are mutually exclusive".into())),
        (Some(q), None, _) => ModelParams::with_endpoint(o.coupling, zeta, q, order(o))?,
        (None, Some(h), _) => ModelParams::with_field(o.coupling, zeta, h, order(o))?,
        (None, None, Some(q)) => ModelParams::with_endpoint(o.coupling, zeta, q, order(o))?,
        (None, None, None) => return Err(CliError::Usage("one of --q or --h is required".into())),
    };
    Ok(DressedSet::solve_cached(&params, open_cache(o)?)?)
}

#[derive(Serialize)]
struct SolveSummary {
    zeta: f64,
    #[serde(rename = "J")]
    coupling: f64,
    order: usize,
    q: f64,
    h: f64,
    p_fermi: f64,
    v_fermi: f64,
    v_inf: f64,
    z_q: f64,
    density: f64,
    magnetization: f64,
}

fn summary(ds: &DressedSet) -> Result<SolveSummary, CliError> {
    let density = ds.density();
    Ok(SolveSummary {
        zeta: ds.zeta(),
        coupling: ds.coupling(),
        order: ds.order(),
        q: ds.q(),
        h: ds.h(),
        p_fermi: ds.p_fermi(),
        v_fermi: ds.fermi_velocity()?,
        v_inf: ds.v_infinity()?,
        z_q: ds.charge_at(Complex64::new(ds.q(), 0.0))?.re,
        density,
        magnetization: 1.0 - 2.0 * density,
    })
}

fn solve(o: &Options) -> Result<Report<SolveSummary>, CliError> {
    let s = summary(&dressed(o, None)?)?;
    let rows = vec![vec![
        s.zeta.into(),
        s.coupling.into(),
        (s.order as i64).into(),
        s.q.into(),
        s.h.into(),
        s.p_fermi.into(),
        s.v_fermi.into(),
        s.v_inf.into(),
        s.z_q.into(),
        s.density.into(),
        s.magnetization.into(),
    ]];
    Ok(Report {
        json: s,
        header: vec!["zeta", "J", "order", "q", "h", "p_F", "v_F", "v_inf", "Z_q", "D", "m"],
        rows,
    })
}

fn strings(o: &Options) -> Result<Report<Vec<StringSpec>>, CliError> {
    let ds = dressed(o, Some(DEFAULT_STRING_ENDPOINT))?;
    let specs = catalog(ds.zeta(), o.rmax, &ds)?;
    let rows = specs
        .iter()
        .map(|s| {
            vec![
                i64::from(s.r).into(),
                i64::from(s.exists).into(),
                s.sigma.map(i64::from).into(),
                s.sgn_p_prime.map(i64::from).into(),
                serde_json::to_value(s.regime)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .into(),
            ]
        })
        .collect();
    Ok(Report {
        json: specs,
        header: vec!["r", "exists", "sigma", "sgn_p_prime", "regime"],
        rows,
    })
}

#[derive(Serialize)]
struct VelocityLine {
    species: u32,
    r: u32,
    offset: f64,
    thresholds: Thresholds,
    max_velocity: f64,
    /// `(lambda, epsilon' / p')` along the carrier line.
    curve: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct VelocityReport {
    v_fermi: f64,
    v_inf: f64,
    degenerate: Vec<u32>,
    lines: Vec<VelocityLine>,
}

fn velocities(o: &Options) -> Result<Report<VelocityReport>, CliError> {
    let ds = dressed(o, None)?;
    let v_inf = ds.v_infinity()?;
    let v_fermi = ds.fermi_velocity()?;
    let (species, degenerate) = catalogued_species(ds.zeta(), o.rmax)?;
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for s in species {
        let profile = LineProfile::sample(s, &ds)?;
        let curve: Vec<[f64; 2]> = (0..profile.xs.len())
            .step_by(CURVE_STRIDE)
            .map(|i| [profile.xs[i], profile.e_prime[i] / profile.p_prime[i]])
            .collect();
        for &[x, v] in &curve {
            rows.push(vec![
                i64::from(s).into(),
                i64::from(profile.r).into(),
                profile.offset.into(),
                x.into(),
                v.into(),
            ]);
        }
        lines.push(VelocityLine {
            species: s,
            r: profile.r,
            offset: profile.offset,
            thresholds: profile.thresholds(v_inf),
            max_velocity: profile.max_velocity(),
            curve,
        });
    }
    Ok(Report {
        json: VelocityReport {
            v_fermi,
            v_inf,
            degenerate,
            lines,
        },
        header: vec!["species", "r", "offset", "lambda", "velocity"],
        rows,
    })
}

fn saddles(o: &Options) -> Result<Report<StructureReport>, CliError> {
    let v = require_v(o)?;
    let ds = dressed(o, None)?;
    let report = classify_structure(v, &ds, o.rmax)?;
    let rows = report
        .lines
        .iter()
        .flat_map(|l| l.saddles.iter())
        .map(|s| {
            vec![
                i64::from(s.species).into(),
                i64::from(s.r).into(),
                s.omega.re.into(),
                s.omega.im.into(),
                s.u_value.re.into(),
                s.u_value.im.into(),
                s.u_second.into(),
                i64::from(s.eps_sign).into(),
                s.scale.into(),
                i64::from(s.p_prime_sign).into(),
            ]
        })
        .collect();
    Ok(Report {
        json: report,
        header: vec![
            "species", "r", "omega_re", "omega_im", "u_re", "u_im", "u_second", "eps_sign", "scale",
            "p_prime_sign",
        ],
        rows,
    })
}

fn exponents(o: &Options) -> Result<Report<Vec<AsymptoticTerm>>, CliError> {
    let v = require_v(o)?;
    let ds = dressed(o, None)?;
    let structure = classify_structure(v, &ds, o.rmax)?;
    let assembler = Assembler::new(v, &ds, &structure)?;
    let terms = assembler
        .enumerate(o.spin, o.bound)
        .iter()
        .map(|c| assembler.term(c))
        .collect::<xxz_core::Result<Vec<_>>>()?;
    let ranked = rank_terms(terms)?;
    let rows = ranked
        .iter()
        .map(|t| {
            vec![
                i64::from(t.config.s_gamma).into(),
                i64::from(t.config.ell_plus).into(),
                i64::from(t.config.ell_minus).into(),
                i64::from(t.config.n0).into(),
                i64::from(t.config.n1).into(),
                t.amplitude_placeholder.label.clone().into(),
                format!("{:?}", t.regime).into(),
                t.delta_plus.into(),
                t.delta_minus.into(),
                t.delta_sp.into(),
                t.total_exponent.into(),
                t.phase.into(),
                t.wavevector.into(),
                t.c_n.re.into(),
                t.c_n.im.into(),
            ]
        })
        .collect();
    Ok(Report {
        json: ranked,
        header: vec![
            "s", "ell_plus", "ell_minus", "n0", "n1", "label", "regime", "delta_plus", "delta_minus",
            "delta_sp", "total_exponent", "phase", "wavevector", "c_n_re", "c_n_im",
        ],
        rows,
    })
}

fn verify(o: &Options) -> Result<Vec<u8>, CliError> {
    let suite = match o.suite {
        SuiteArg::Quick => Suite::Quick,
        SuiteArg::Full => Suite::Full,
    };
    let records = run_suite(suite)?;
    let failed = records.iter().filter(|r| !r.pass).count();
    let rows = records.iter().map(check_row).collect();
    let bytes = Report {
        json: &records,
        header: vec!["identity", "params", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "rel_diff", "tail_bound", "pass"],
        rows,
    }
    .render(o.format)?;
    if failed > 0 {
        // The report is still written; the exit code carries the verdict.
        crate::output::emit(&bytes, o.out.as_deref())?;
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(bytes)
}

fn check_row(r: &CheckRecord) -> Vec<Cell> {
    vec![
        r.identity.clone().into(),
        r.params.to_string().into(),
        r.lhs.re.into(),
        r.lhs.im.into(),
        r.rhs.re.into(),
        r.rhs.im.into(),
        r.rel_diff.into(),
        r.tail_bound.into(),
        i64::from(r.pass).into(),
    ]
}

#[derive(Serialize)]
struct Cleared {
    removed: usize,
}

fn cache(action: CacheAction, o: &Options) -> Result<Vec<u8>, CliError> {
    let cache = open_cache(o)?
        .ok_or_else(|| CliError::Usage("--cache-dir or XXZ_CACHE_DIR is required".into()))?;
    match action {
        CacheAction::List => {
            let entries: Vec<CacheEntry> = cache.list()?;
            let rows = entries
                .iter()
                .map(|e| {
                    vec![
                        e.file.clone().into(),
                        (e.bytes as i64).into(),
                        e.meta.kind.clone().into(),
                        e.meta.zeta.into(),
                        e.meta.coupling.into(),
                        (e.meta.order as i64).into(),
                        e.meta.q.into(),
                        e.meta.h.into(),
                        e.meta.r.map(i64::from).into(),
                    ]
                })
                .collect();
            Report {
                json: &entries,
                header: vec!["file", "bytes", "kind", "zeta", "J", "order", "q", "h", "r"],
                rows,
            }
            .render(o.format)
        }
        CacheAction::Clear => {
            let removed = cache.clear()?;
            Report {
                json: Cleared { removed },
                header: vec!["removed"],
                rows: vec![vec![(removed as i64).into()]],
            }
            .render(o.format)
        }
    }
}

