use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error(
        "explicit step is unstable: dt * max rate = {product:.3e} (must be < {bound}); \
         reduce dt or use the exponential scheme"
    )]
    Stability { product: f64, bound: f64 },

    #[error("non-finite state after step {step}")]
    NonFinite { step: usize },

    #[error("no unique steady state: {0}")]
    NoUniqueSteadyState(String),

    #[error(
        "series too short: {len} samples, need at least {min_len} for a {segment}-point segment"
    )]
    TooShort {
        len: usize,
        min_len: usize,
        segment: usize,
    },

    #[error("spectrum grids differ: {0}")]
    GridMismatch(String),

    #[error("configuration error for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid scan range: {0}")]
    InvalidRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
