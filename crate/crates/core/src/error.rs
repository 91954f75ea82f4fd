use thiserror::Error;

/// Errors raised by the simulator and its harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid region [{lo}, {hi}): {reason}")]
    InvalidRegion { lo: f64, hi: f64, reason: String },
    #[error("state has zero norm (squared norm {0:e})")]
    ZeroNorm(f64),
    #[error("amplitudes contain NaN or infinite values")]
    NonFinite,
    #[error("grid or level mismatch between states")]
    GridMismatch,
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid propagator config: {0}")]
    InvalidPropagator(String),
    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e}")]
    UnstableStep { drift: f64, tolerance: f64 },
    #[error("duration {t} is not an integer multiple of dt = {dt}")]
    NotMultipleOfDt { t: f64, dt: f64 },
    #[error("localization width a = {a} is not resolved by grid spacing dx = {dx} (need a >= 4 dx)")]
    UnresolvedWidth { a: f64, dx: f64 },
    #[error("invalid collapse parameters: {0}")]
    InvalidParams(String),
    #[error("collapse-center density has vanishing mass ({0:e})")]
    ZeroDensity(f64),
    #[error("{undecided} of {total} trajectories undecided at the horizon (limit 1%)")]
    NonConvergent { undecided: usize, total: usize },
    #[error("horizon {horizon} must be below the recurrence time {recurrence}")]
    InvalidHorizon { horizon: usize, recurrence: usize },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("insufficient data: {decided} decided trajectories (need at least {required})")]
    InsufficientData { decided: usize, required: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("{failed} of {total} trajectories failed (budget 1%); first failure: {first}")]
    FailureBudget {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidRegion { .. }
                | Error::InvalidPotential(_)
                | Error::InvalidPropagator(_)
                | Error::NotMultipleOfDt { .. }
                | Error::UnresolvedWidth { .. }
                | Error::InvalidParams(_)
                | Error::InvalidHorizon { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
