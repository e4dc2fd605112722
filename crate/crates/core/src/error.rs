use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("integration diverged at step {step}: |x| reached {magnitude:e} (limit 1e6)")]
    Divergence { step: usize, magnitude: f64 },

    #[error("integration span {span} is not an integral number of steps of dt = {dt}")]
    NonIntegralSteps { span: f64, dt: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not skew-symmetric at ({row}, {col})")]
    NotSkewSymmetric { row: usize, col: usize },

    #[error("coupling block ({block}, {block}) must be zero")]
    NonzeroDiagonalBlock { block: usize },

    /// The least-squares regressor does not determine every free coupling entry.
    /// `null_space` holds an orthonormal basis of the unidentifiable directions.
    #[error("rank-deficient regressor: rank {rank} of {unknowns} unknowns")]
    RankDeficient {
        rank: usize,
        unknowns: usize,
        null_space: Vec<Vec<f64>>,
    },

    #[error("dataset has no transitions")]
    EmptyDataset,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dims(context, expected, actual))
    }
}
