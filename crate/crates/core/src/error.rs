use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the supported domain: {0}")]
    Domain(String),

    #[error("K_{order}(z) underflows for Re(z) = {re}; use the scaled form")]
    Underflow { order: f64, re: f64 },

    #[error("process is frozen: total jump rate is zero")]
    Frozen,

    #[error("state space has {states} states, above the cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },

    #[error(
        "Laplace inversion did not converge at t = {t} (last two estimates {previous} and {last}, nodes {nodes})"
    )]
    InversionNotConverged {
        t: f64,
        previous: f64,
        last: f64,
        nodes: usize,
    },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    QuadratureNotConverged { tolerance: f64, estimate: f64 },

    #[error("time scale not identifiable: objective spread {spread:e} is within noise {noise:e}")]
    NonIdentifiable { spread: f64, noise: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
