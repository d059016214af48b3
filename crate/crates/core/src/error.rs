use alloc::string::String;

/// Errors produced by the core kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("index out of range: {what} {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no evaluable users")]
    NoEvaluableUsers,
}

pub type Result<T> = core::result::Result<T, Error>;
