use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: asyncfo_core::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit status: 1 for bad inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Toml(_) => 1,
            HarnessError::Core { source, .. } if is_validation(source) => 1,
            _ => 2,
        }
    }
}

fn is_validation(e: &asyncfo_core::Error) -> bool {
    use asyncfo_core::Error::*;
    matches!(
        e,
        DimensionMismatch { .. }
            | InvalidLayout(_)
            | EmptyBox { .. }
            | NotPositiveDefinite { .. }
            | NotSymmetric { .. }
            | InvalidAgent { .. }
            | HorizonTooShort { .. }
            | InvalidAsyncConfig(_)
            | InvalidEpochs(_)
            | InfeasibleInit { .. }
            | NonPositiveStep { .. }
            | Parse { .. }
    )
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Attaches context to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T>;
}

impl<T> Context<T> for asyncfo_core::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T> {
        self.map_err(|source| HarnessError::Core {
            context: what.into(),
            source,
        })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
