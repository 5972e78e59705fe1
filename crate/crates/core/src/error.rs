use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed AVPF data at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("row {row} has no positive entry")]
    ZeroRow { row: usize },
    #[error("word `{0}` is not in the lexicon")]
    OutOfVocabulary(String),
    #[error("missing artifact {path}; run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Nn(#[from] avfusion_nn::NnError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
