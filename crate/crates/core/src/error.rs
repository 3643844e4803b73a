use thiserror::Error;

/// Errors raised by the variation kernels, generators and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid refinement: partition level {level} exceeds grid level {grid_level}")]
    InvalidRefinement { level: u32, grid_level: u32 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("resolution error: grid level {grid_level} cannot resolve Schauder level {max_level}")]
    Resolution { grid_level: u32, max_level: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("variation source error: {0}")]
    Source(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("inconclusive classification at q = {q}")]
    Inconclusive { q: f64, evidence: Vec<crate::roughness::Probe> },

    #[error("circulant embedding failed: eigenvalue {eigenvalue:e} below tolerance (max {max_eigenvalue:e})")]
    Embedding { eigenvalue: f64, max_eigenvalue: f64 },

    #[error("evaluation error: non-finite value at t = {t}")]
    Evaluation { t: f64 },

    #[error("length mismatch: {0}")]
    Mismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by malformed inputs rather than numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidRefinement { .. }
                | Error::InvalidPartition(_)
                | Error::InvalidPath(_)
                | Error::Resolution { .. }
                | Error::InvalidParameter(_)
                | Error::Source(_)
                | Error::Mismatch(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}
