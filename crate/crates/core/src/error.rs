use std::path::PathBuf;

/// Errors produced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An API was called out of order or with inconsistent state.
    #[error("usage error: {0}")]
    Usage(String),

    /// Model or run configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A dataset record could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A text file did not follow its expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// A review is too long for the configured sequence length.
    #[error("review has {tokens} tokens, sequence length is {max_len}")]
    Length { tokens: usize, max_len: usize },

    /// The dataset lacks something the operation needs.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Stratified splitting is impossible for the given class counts.
    #[error("cannot stratify: {0}")]
    Stratification(String),

    /// A ranking metric is undefined for the given predictions.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(format!($($arg)*)))
    };
}
pub(crate) use bail;
