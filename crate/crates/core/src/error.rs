use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    /// A torus window is too small to hold a result without wrap-around aliasing.
    #[error("window overflow: {0}")]
    WindowOverflow(String),

    #[error("materialization cap exceeded: {0}")]
    CapExceeded(String),

    #[error("not a member: {0}")]
    NotAMember(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not stochastic: {0}")]
    NotStochastic(String),

    #[error("inconsistent marginals: {0}")]
    InconsistentMarginals(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
