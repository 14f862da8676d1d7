use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time s = {s} is outside [0, 1]")]
    Domain { s: f64 },

    #[error("{what} is singular at s = {s}; use the endpoint-safe path")]
    Singular { what: &'static str, s: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("all posterior weights underflow at s = {s}, x = {x:?}")]
    WeightUnderflow { s: f64, x: Vec<f64> },

    #[error("non-finite state at step {step} (s = {s})")]
    NonFinite { step: usize, s: f64 },

    #[error("loss is not finite at step {step} (lr = {lr})")]
    Diverged { step: u64, lr: f64 },

    #[error("vorticity blow-up at t = {t}: max |omega| = {max_abs}")]
    BlowUp { t: f64, max_abs: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::WeightUnderflow { .. }
                | Error::NonFinite { .. }
                | Error::Diverged { .. }
                | Error::BlowUp { .. }
                | Error::Singular { .. }
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
