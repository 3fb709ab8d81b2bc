use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// The CLI maps each variant onto one of its documented exit codes through
/// [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("svd did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("empty subspace: {0}")]
    EmptySubspace(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dimension too large: {0}")]
    DimensionTooLarge(String),

    #[error("principal cosine {0} lies outside [0, 1] beyond roundoff")]
    CosineOutOfRange(f64),

    #[error("invalid rank tolerance {0}: must lie in (0, 1)")]
    InvalidTolerance(f64),

    #[error("token id {id} is out of vocabulary (size {vocab})")]
    OutOfVocabulary { id: usize, vocab: usize },

    #[error("decay factor {0} outside [0, 1]")]
    InvalidDecay(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown parameter {0:?}")]
    UnknownParam(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward called on a tensor with no recorded graph")]
    NoGraph,

    #[error("scene placement failed after {0} attempts")]
    PlacementFailure(usize),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at key {key:?}: {msg}")]
    Config { key: String, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the `gradsub` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch(_) | Error::DimensionTooLarge(_) => 3,
            Error::EmptySubspace(_) => 4,
            Error::Divergence(_) | Error::NonConvergence { .. } | Error::CosineOutOfRange(_) => 5,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
