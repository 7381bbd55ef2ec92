use thiserror::Error;

/// Everything that can go wrong while building, training or evaluating models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loss or gradient left the finite range, or a loss exceeded the abort threshold.
    #[error("training diverged in {stage} at epoch {epoch}: {detail}")]
    Divergence {
        stage: String,
        epoch: usize,
        detail: String,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn divergence(
        stage: impl Into<String>,
        epoch: usize,
        detail: impl Into<String>,
    ) -> Self {
        Error::Divergence {
            stage: stage.into(),
            epoch,
            detail: detail.into(),
        }
    }

    /// Sets the epoch of a divergence error.
    pub fn at_epoch(self, at: usize) -> Self {
        match self {
            Error::Divergence { stage, detail, .. } => Error::Divergence {
                stage,
                epoch: at,
                detail,
            },
            other => other,
        }
    }

    /// Prefixes the stage of a divergence error with more context.
    pub fn in_stage(self, context: &str) -> Self {
        match self {
            Error::Divergence {
                stage,
                epoch,
                detail,
            } => Error::Divergence {
                stage: format!("{context}/{stage}"),
                epoch,
                detail,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
