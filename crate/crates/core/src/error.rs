//! Crate-wide error type.

/// Errors produced by the analytical engines, oracles, and the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The request is outside the numerically stable range of a closed form;
    /// the message names the recursion to use instead.
    #[error("precision limit: {0}")]
    Precision(String),

    /// The operation is not supported for the requested configuration
    /// (for example a full distribution under a general finite seed rate).
    #[error("unsupported: {0}")]
    Capability(String),

    /// Underlying I/O failure, e.g. while writing an event trace.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
