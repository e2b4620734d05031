use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("relation sequence is empty")]
    EmptySequence,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid token {token:?}: {reason}")]
    Token { token: String, reason: &'static str },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("no intermediate entities connect the path in the store")]
    NotFound,
    #[error("non-finite loss {loss} ({context})")]
    NonFinite { loss: f64, context: String },
    #[error("undefined statistic: {0}")]
    Undefined(&'static str),
    #[error("synthetic generation failed: {0}")]
    Generation(String),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
