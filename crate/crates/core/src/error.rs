use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("pivot degeneracy at node {node}: {detail}")]
    PivotDegeneracy { node: usize, detail: String },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("invalid coefficient model: {0}")]
    ModelInvalid(String),
    #[error("coefficient not elliptic: {0}")]
    Ellipticity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
