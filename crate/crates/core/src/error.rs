use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("time {t} lies outside [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix I + c*G_n is singular at rank {rank}; increase the rank or refine the grid")]
    SingularMatrix { rank: usize },

    #[error(
        "rank {rank} is under-resolved on a {n_points}-point grid (need at least {needed} points)"
    )]
    UnderResolved {
        rank: usize,
        n_points: usize,
        needed: usize,
    },

    #[error("root bracketing failed for root {index}: {reason}")]
    Bracketing { index: usize, reason: String },

    #[error("volume bins do not align with the grid: {0}")]
    BinMisalignment(String),

    #[error("config error in [{section}] `{key}`: {message}")]
    Config {
        section: String,
        key: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config { .. }
                | Error::OutOfDomain { .. }
                | Error::BinMisalignment(_)
                | Error::UnderResolved { .. }
        )
    }
}
