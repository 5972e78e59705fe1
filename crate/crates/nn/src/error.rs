use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("target index {index} at frame {frame} is outside 0..{classes}")]
    TargetOutOfRange { frame: usize, index: usize, classes: usize },
    #[error("forward tape does not belong to this network: {0}")]
    TapeMismatch(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
