use num_complex::Complex64;
use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum XxzError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Nystrom solve failed for {what}: condition estimate {condition:.3e}")]
    SolverFailure { what: String, condition: f64 },

    #[error("Nystrom residual {residual:.3e} exceeds tolerance {tolerance:.3e} for {what}")]
    ResidualTooLarge {
        what: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("no sign change on [{a}, {b}]: f(a) = {fa:e}, f(b) = {fb:e}")]
    BracketFailure { a: f64, b: f64, fa: f64, fb: f64 },

    #[error("field h = {h} is not below the critical field h_c = {h_c}")]
    FieldAboveCritical { h: f64, h_c: f64 },

    #[error("non-finite integrand sample at {point}")]
    IntegrationFailure { point: Complex64 },

    #[error("point {point} lies within {distance:.3e} of a pole")]
    PoleProximity { point: Complex64, distance: f64 },

    #[error("contour failure: {0}")]
    ContourFailure(String),

    #[error("{r}-string is not available at zeta = {zeta}")]
    InvalidString { r: u32, zeta: f64 },

    #[error("degenerate anisotropy: sin({k} zeta) vanishes at zeta = {zeta}")]
    DegenerateAnisotropy { k: u32, zeta: f64 },

    #[error("sign of p'_{r} is not constant on its carrier line: samples {samples:?}")]
    SignInconsistency { r: u32, samples: Vec<f64> },

    #[error("consistency check failed: {0}")]
    ConsistencyFailure(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("v = {v} lies in the guard band around the critical velocity {critical}")]
    NearCritical { v: f64, critical: f64 },

    #[error("degenerate saddle of species {species} at {omega}: u'' = {u_second:e}")]
    DegenerateSaddle {
        species: u32,
        omega: Complex64,
        u_second: f64,
    },

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("residue reduction mismatch: closed form {closed} vs numerical {numerical}")]
    ReductionMismatch {
        closed: Complex64,
        numerical: Complex64,
    },

    #[error("tail bound {bound:.3e} exceeds tolerance {tolerance:.3e}")]
    TailTooLarge { bound: f64, tolerance: f64 },

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl XxzError {
    /// Short machine-readable tag for each variant.
    pub fn kind(&self) -> &'static str {
        match self {
            XxzError::InvalidArgument(_) => "invalid-argument",
            XxzError::SolverFailure { .. } => "solver-failure",
            XxzError::ResidualTooLarge { .. } => "solver-failure",
            XxzError::BracketFailure { .. } => "bracket-failure",
            XxzError::FieldAboveCritical { .. } => "bracket-failure",
            XxzError::IntegrationFailure { .. } => "integration-failure",
            XxzError::PoleProximity { .. } => "pole-proximity",
            XxzError::ContourFailure(_) => "contour-failure",
            XxzError::InvalidString { .. } => "invalid-string",
            XxzError::DegenerateAnisotropy { .. } => "degenerate-anisotropy",
            XxzError::SignInconsistency { .. } => "sign-inconsistency",
            XxzError::ConsistencyFailure(_) => "consistency-failure",
            XxzError::Inconclusive(_) => "inconclusive",
            XxzError::NearCritical { .. } => "near-critical",
            XxzError::DegenerateSaddle { .. } => "degenerate-saddle",
            XxzError::RegimeMismatch(_) => "regime-mismatch",
            XxzError::ReductionMismatch { .. } => "reduction-mismatch",
            XxzError::TailTooLarge { .. } => "tail-bound",
            XxzError::Cache(_) => "cache",
            XxzError::Io(_) => "io",
            XxzError::Json(_) => "json",
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            XxzError::InvalidArgument(_)
                | XxzError::FieldAboveCritical { .. }
                | XxzError::InvalidString { .. }
                | XxzError::NearCritical { .. }
                | XxzError::DegenerateAnisotropy { .. }
                | XxzError::RegimeMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, XxzError>;
