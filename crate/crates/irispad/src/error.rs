use std::path::PathBuf;

/// Error type shared across the crate.
///
/// The `category` method yields the stable single-word tag the CLI prints on
/// failure, so scripts can branch on it without parsing free text.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("ingestion error for {path}: {msg}")]
    Ingestion { path: PathBuf, msg: String },

    #[error("pretrained weights requested but unavailable: {0}")]
    PretrainedUnavailable(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted at epoch {epoch}, batch {batch}: {msg}")]
    Training {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error("scoring failure for {path}: {msg}")]
    Scoring { path: PathBuf, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Parse { .. } => "parse",
            Error::Protocol(_) => "protocol",
            Error::Ingestion { .. } => "ingestion",
            Error::PretrainedUnavailable(_) => "pretrained-unavailable",
            Error::Checkpoint(_) => "checkpoint",
            Error::Training { .. } => "training",
            Error::Scoring { .. } => "scoring",
            Error::Io(_) => "io",
            Error::Csv(_) => "parse",
            Error::Tensor(_) => "tensor",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
