use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch in {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid permutor: {0}")]
    InvalidPermutor(String),
    #[error("window underfilled: need {needed} blocks, have {have}")]
    WindowUnderfilled { needed: usize, have: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
