use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system size L = {sites}: {reason}")]
    InvalidSize { sites: usize, reason: &'static str },

    #[error("L = {sites} exceeds the configured cap of {cap} sites")]
    ExceedsCap { sites: usize, cap: usize },

    #[error("site {site} out of range for L = {sites}")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("expected {expected} field values, found {found}")]
    FieldsLength { expected: usize, found: usize },

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown initial-state kind `{0}` (expected F, AF or FlipOne)")]
    UnknownStateKind(String),

    #[error("dense eigensolver failed on a block of dimension {dim}")]
    EigenSolver { dim: usize },

    #[error("target vectors are not orthonormal (Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("target subspace selection is empty")]
    EmptySelection,

    #[error("observable norm {norm} exceeds 1")]
    NormViolation { norm: f64 },

    #[error("loose bound violated at t = {time}: margin {margin:e}")]
    BoundViolation { time: f64, margin: f64 },

    #[error("realization {index} (seed {seed}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures (eigensolver breakdown, theorem violations) as
    /// opposed to bad input or resource limits.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::EigenSolver { .. } | Error::BoundViolation { .. } => true,
            Error::Realization { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_resource_cap(&self) -> bool {
        match self {
            Error::ExceedsCap { .. } => true,
            Error::Realization { source, .. } => source.is_resource_cap(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
