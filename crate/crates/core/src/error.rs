use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row} ({family}): {reason}")]
    MalformedRow {
        row: usize,
        family: String,
        reason: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("prevalence must lie in (0, 1), got {0}")]
    Prevalence(f64),

    #[error("cohort needs at least one case and one control (cases={cases}, controls={controls})")]
    OneSidedCohort { cases: usize, controls: usize },

    #[error("haplotype enumeration failed: {0}")]
    Enumeration(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("family {family} has zero likelihood under the current parameters")]
    ZeroProbabilityFamily { family: String },

    #[error("constraint term 1 + lambda0 (L_u - f) is non-positive for family {family} ({value})")]
    ConstraintDomain { family: String, value: f64 },

    #[error("non-finite gradient component {index}")]
    NonFiniteGradient { index: usize },

    #[error("multiplier equation has no sign change on the feasible interval")]
    NoMultiplierRoot,

    #[error("line search failed after {0} step halvings")]
    LineSearch(usize),

    #[error("no usable families remain for fitting: {0}")]
    EmptyCohort(String),

    #[error("information matrix is numerically singular (condition number {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error("logistic regression did not converge: {0}")]
    Separation(String),

    #[error("invalid design: {0}")]
    Design(String),

    #[error("case accrual stalled after {draws} draws ({cases}/{wanted} cases)")]
    AccrualStalled {
        draws: u64,
        cases: usize,
        wanted: usize,
    },

    #[error("invalid option: {0}")]
    Options(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
