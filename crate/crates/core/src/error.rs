use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report.
///
/// Variants group into three families that the command line maps onto exit
/// codes: bad arguments (`Argument`), bad data (decode, dataset, shape,
/// fusion, model file problems) and numerical trouble.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported image format in {path}: only PNG and JPEG are accepted")]
    UnsupportedFormat { path: PathBuf },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("network configuration error: {0}")]
    Config(String),

    #[error("fusion error: sample {sample} is missing view {view}{}", expected.as_ref().map(|p| format!(" (expected {})", p.display())).unwrap_or_default())]
    Fusion {
        sample: String,
        view: String,
        expected: Option<PathBuf>,
    },

    #[error("model/config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model file integrity error: {0}")]
    Integrity(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 1,
            Error::Degenerate(_) | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
