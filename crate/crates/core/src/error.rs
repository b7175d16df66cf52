use thiserror::Error;

pub type Result<T> = std::result::Result<T, NvarError>;

#[derive(Debug, Error)]
pub enum NvarError {
    #[error("design is rank deficient (smallest/largest triangular diagonal ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("insufficient data: need at least {needed} observations, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("model is not stationary (spectral radius bound {bound:.6})")]
    NonStationaryModel { bound: f64 },

    #[error("residual sum of squares is numerically zero")]
    ZeroRss,

    #[error("no feasible radius for series {series}")]
    NoFeasibleRadius { series: usize },

    #[error("history has {got} columns, model needs {needed}")]
    HistoryTooShort { needed: usize, got: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("ordering strategy requires 2-D coordinates")]
    MissingCoordinates,

    #[error("test span of {available} columns is shorter than the {needed} required")]
    InsufficientTestSpan { needed: usize, available: usize },

    #[error("line {line}: {message}")]
    UnparseableRecord { line: usize, message: String },

    #[error("no site is fully observed on any month window")]
    NoCompleteCell,

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NvarError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NvarError::InvalidInput(msg.into())
    }
}
