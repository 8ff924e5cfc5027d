use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The search space or a beam violates a structural invariant.
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was called outside its domain.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no terminal reachable within a path length of {max_path_length}")]
    EmptyTerminal { max_path_length: usize },

    #[error("size guard exceeded: {what} has {actual} entries, limit is {limit}")]
    SizeGuard {
        what: &'static str,
        actual: usize,
        limit: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
