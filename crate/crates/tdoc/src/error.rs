use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] tdoc_core::Error),
    #[error("oracle: {0}")]
    Oracle(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 4 for configuration problems, 3 for a
    /// monotonicity abort, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 4,
            Error::Core(tdoc_core::Error::MonotonicityAbort { .. }) => 3,
            Error::Core(
                tdoc_core::Error::InvalidGrid(_)
                | tdoc_core::Error::InvalidParameter(_)
                | tdoc_core::Error::InvalidTarget(_)
                | tdoc_core::Error::MemoryCap { .. },
            ) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
