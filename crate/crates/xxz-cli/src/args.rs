//! Command-line grammar and the `key = value` configuration overlay.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "xxz", version, about = "Dressed quantities, string catalogues, saddle structure and contour checks for the massless XXZ chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fermi endpoint, field, velocities, dressed charge and density.
    Solve,
    /// Existence, parity and momentum sign of r-strings.
    Strings,
    /// Velocity curves and saddle thresholds on every carrier line.
    Velocities,
    /// Saddle points of every carrier line at velocity --v.
    Saddles,
    /// Ranked critical exponents of the asymptotic expansion at --v.
    Exponents,
    /// Contour, residue and multiple-integral checks.
    Verify,
    /// Inspect or empty the solve cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum CacheAction {
    List,
    Clear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    #[default]
    Quick,
    Full,
}

#[derive(Debug, Args)]
pub struct Options {
    /// Anisotropy in radians, or in units of pi with the suffix `pi`.
    #[arg(long, global = true, value_parser = parse_angle, allow_hyphen_values = true)]
    pub zeta: Option<f64>,
    /// Fermi endpoint.
    #[arg(long, global = true, conflicts_with = "h", allow_hyphen_values = true)]
    pub q: Option<f64>,
    /// Magnetic field.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub h: Option<f64>,
    /// Exchange coupling.
    #[arg(long = "J", global = true, default_value_t = 1.0)]
    pub coupling: f64,
    /// Ray velocity x/t.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub v: Option<f64>,
    /// Longest string considered.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..=64))]
    pub rmax: u32,
    /// Largest Umklapp deficiency and saddle occupation enumerated.
    #[arg(long, global = true, default_value_t = 2)]
    pub bound: u32,
    /// Spin of the operator whose correlator is expanded.
    #[arg(long, global = true, default_value_t = 0, allow_hyphen_values = true, value_parser = clap::value_parser!(i32).range(-1..=1))]
    pub spin: i32,
    /// Gauss-Legendre order of the Nystrom solves.
    #[arg(long, global = true, default_value_t = 128, value_parser = clap::value_parser!(u64).range(2..=4096))]
    pub order: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long = "cache-dir", global = true, env = "XXZ_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = SuiteArg::Quick)]
    pub suite: SuiteArg,
}

/// `0.5365pi`, `pi/3`, `pi` or a plain number of radians.
pub fn parse_angle(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let value = if let Some(head) = lower.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*').trim();
        let factor = if head.is_empty() {
            1.0
        } else {
            head.parse::<f64>().map_err(|e| format!("invalid angle `{t}`: {e}"))?
        };
        factor * std::f64::consts::PI
    } else if let Some(tail) = lower.strip_prefix("pi/") {
        let d = tail.parse::<f64>().map_err(|e| format!("invalid angle `{t}`: {e}"))?;
        std::f64::consts::PI / d
    } else {
        t.parse::<f64>().map_err(|e| format!("invalid angle `{t}`: {e}"))?
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("angle `{t}` is not finite"))
    }
}

/// Flags named on the command line, without leading dashes.
fn named_flags(argv: &[OsString]) -> Vec<String> {
    argv.iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect()
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Parse a configuration file into `(key, value)` pairs. Blank lines and
/// lines starting with `#` are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected `key = value`, got `{line}`", n + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k == "config" {
            return Err(CliError::Usage(format!("config line {}: invalid key `{k}`", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Append file settings not already given as flags. `q` and `h` count as
/// one setting, so a field on the command line also masks a file endpoint.
pub fn with_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let given = named_flags(&argv);
    let field_given = given.iter().any(|f| f == "q" || f == "h");
    let mut out = argv;
    for (k, v) in parse_config(&text)? {
        let masked = given.contains(&k) || ((k == "q" || k == "h") && field_given);
        if !masked {
            out.push(format!("--{k}={v}").into());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("0.5pi").unwrap(), 0.5 * PI);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("0.25*pi").unwrap(), 0.25 * PI);
        assert_eq!(parse_angle("pi/4").unwrap(), PI / 4.0);
        assert_eq!(parse_angle("1.2").unwrap(), 1.2);
        assert!(parse_angle("abc").is_err());
        assert!(parse_angle("inf").is_err());
    }

    #[test]
    fn config_lines() {
        let kv = parse_config("# run\nzeta = 0.3pi\n\nq=0.5\n").unwrap();
        assert_eq!(kv, vec![("zeta".into(), "0.3pi".into()), ("q".into(), "0.5".into())]);
        assert!(parse_config("zeta 0.3").is_err());
    }

    #[test]
    fn flags_mask_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "zeta = 0.3pi\nq = 0.5\norder = 64\n").unwrap();
        let argv: Vec<OsString> = ["xxz", "solve", "--h", "1.0", "--order=32", "--config"]
            .iter()
            .map(OsString::from)
            .chain([path.clone().into_os_string()])
            .collect();
        let merged = with_config(argv).unwrap();
        let tail: Vec<_> = merged[7..].iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(tail, vec!["--zeta=0.3pi"]);
    }
}
