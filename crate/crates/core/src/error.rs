use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("weights are all zero; absmean scale is undefined")]
    AllZeroWeights,

    #[error("value {0} is not ternary")]
    InvalidTernary(i32),

    #[error("K remainder {two_k} after the TL2 region is odd and cannot be packed in pairs")]
    OddRemainder { two_k: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("corrupt buffer: {0}")]
    CorruptBuffer(String),

    #[error("lookup table mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptBuffer(msg.into())
    }
}
