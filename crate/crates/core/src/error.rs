use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch for layer {layer}")]
    Checksum { layer: usize },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("training failed: {reason}")]
    TrainingFailure {
        reason: String,
        /// Per-epoch metric the run was judged on (accuracy or MSE).
        curve: Vec<f64>,
    },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Failed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
