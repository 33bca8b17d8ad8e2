use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },

    #[error("invalid norm specification: {0}")]
    InvalidNorm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design rows are linearly dependent (numerical rank about {rank_hint}); the interpolation problem is infeasible or ill-posed")]
    RankDeficient { rank_hint: usize },

    #[error("more samples than parameters (n = {n}, p = {p}); interpolation needs n <= p")]
    Underparameterized { n: usize, p: usize },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(&'static str),

    #[error("missing input `{0}`")]
    MissingInput(&'static str),

    #[error("operation not available for the {family} norm: {what}")]
    Unsupported { family: &'static str, what: &'static str },

    #[error("probe value {probe:.6e} exceeds the analytic bound {bound:.6e}")]
    GapBoundViolated { probe: f64, bound: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
