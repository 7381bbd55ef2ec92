use emogan_core::Error as CoreError;
use thiserror::Error;

/// Failures of an experiment run, grouped by process exit code.
#[derive(Debug, Error)]
pub enum ExpError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Stage {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type ExpResult<T> = std::result::Result<T, ExpError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

impl ExpError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config(_) => EXIT_CONFIG,
            ExpError::Io { .. } => EXIT_FAILURE,
            ExpError::Core(e) | ExpError::Stage { source: e, .. } => match e {
                CoreError::Divergence { .. } => EXIT_DIVERGENCE,
                CoreError::Parse { .. }
                | CoreError::Csv(_)
                | CoreError::Io(_)
                | CoreError::DegenerateData(_)
                | CoreError::Shape(_) => EXIT_DATA,
                CoreError::InvalidArgument(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            },
        }
    }
}

/// Attaches a stage label (model, fold) to core errors.
pub(crate) trait Context<T> {
    fn stage(self, context: impl FnOnce() -> String) -> ExpResult<T>;
}

impl<T> Context<T> for std::result::Result<T, CoreError> {
    fn stage(self, context: impl FnOnce() -> String) -> ExpResult<T> {
        self.map_err(|source| ExpError::Stage {
            context: context(),
            source,
        })
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> ExpError + '_ {
    move |source| ExpError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(ExpError::Config("x".into()).exit_code(), EXIT_CONFIG);
        let div = CoreError::Divergence {
            stage: "s".into(),
            epoch: 1,
            detail: "d".into(),
        };
        assert_eq!(ExpError::from(div).exit_code(), EXIT_DIVERGENCE);
        let parse = CoreError::Parse {
            row: 2,
            message: "m".into(),
        };
        let staged: ExpResult<()> = Err(parse).stage(|| "fold 0".into());
        assert_eq!(staged.unwrap_err().exit_code(), EXIT_DATA);
    }
}
