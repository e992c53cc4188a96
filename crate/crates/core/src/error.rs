use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank-deficient sample after {attempts} attempts")]
    RankDeficient { attempts: u32 },

    #[error("instance too large for exact oracle: {supports} support sets exceed cap {cap}")]
    InstanceTooLarge { supports: u128, cap: u64 },

    #[error("fewer than 2 distinct points")]
    TooFewPoints,

    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
