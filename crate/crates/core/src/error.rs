use thiserror::Error;

/// Errors produced by fitting, growing, loading and evaluating models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    #[error("value outside the distribution's domain: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient sup-norm {gradient_norm:e})")]
    NonConvergence {
        /// Best iterate found, in the optimizer's coordinates.
        best: Vec<f64>,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("no admissible split point satisfies minbucket = {minbucket}")]
    NoAdmissibleSplit { minbucket: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("parse error at line {line}, column '{column}': {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("unknown category '{value}' in column '{column}'")]
    UnknownCategory { column: String, value: String },

    #[error("negative value {value} in column '{column}' (line {line}) cannot be power transformed")]
    NegativeUnderTransform {
        column: String,
        line: usize,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("collinear or constant regressor: {0}")]
    Collinear(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("reference mean CRPS is zero")]
    ZeroReference,

    #[error("unsupported archive version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u64, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
