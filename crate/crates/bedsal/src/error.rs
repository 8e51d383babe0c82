use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] bedsal_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{}: {source}", path.display())]
    Tensor {
        path: PathBuf,
        #[source]
        source: TensorError,
    },
    #[error("sample {0:?} lacks an rgb, depth or gt file")]
    MissingPair(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input or missing prerequisites, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingPair(_) | Error::Config(_) | Error::MissingArtifact(_) | Error::Invalid(_) => 1,
            Error::Core(bedsal_core::Error::BadChannelCount(_) | bedsal_core::Error::InvalidParameter(_)) => 1,
            _ => 2,
        }
    }
}

/// Attaches a path to IO results.
pub(crate) trait IoContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
