use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected} elements, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("pixel {index} = {value} lies outside [0, 1]")]
    PixelOutOfRange { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    /// The target oracle refused a query because the budget is spent.
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },

    #[error("candidate is not adversarial")]
    NotAdversarial,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("bad magic bytes in {what}: expected {expected:?}")]
    BadMagic { what: &'static str, expected: &'static str },

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u8),

    #[error("corrupt model file at layer {layer}: {reason}")]
    CorruptLayer { layer: usize, reason: String },

    #[error("truncated {what}")]
    Truncated { what: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("model '{id}' could not be loaded: {source}")]
    ModelLoad {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Path { path, source }
    }

    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, Error::BudgetExhausted { .. })
    }
}
