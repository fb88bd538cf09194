use thiserror::Error;

/// Errors raised by the library. Numeric payloads are reported in `f64`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric: |A[{row}][{col}] - A[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    EigenNoConvergence { sweeps: usize, off: f64 },

    #[error("internal resonance near mode {mode}: {detail}")]
    InternalResonance { mode: usize, detail: String },

    #[error("amplitude {a:e} fell below the floor {floor:e} at t = {t:e}")]
    AmplitudeFloor { a: f64, floor: f64, t: f64 },

    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e}, best iterate {best:?})")]
    NoConvergence { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("detuning sigma = {sigma} is on the unstable side of the bound {bound}")]
    UnstableDetuning { sigma: f64, bound: f64 },

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t:e}")]
    TooManySteps { max_steps: usize, t: f64 },

    #[error("tolerance out of range: {0}")]
    InvalidTolerance(String),

    #[error("time {t:e} outside trajectory span [{t0:e}, {t1:e}]")]
    OutOfSpan { t: f64, t0: f64, t1: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code class used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_)
            | Error::Dimension(_)
            | Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::InvalidTolerance(_)
            | Error::Json(_) => 2,
            Error::NoConvergence { .. }
            | Error::EigenNoConvergence { .. }
            | Error::Continuation(_)
            | Error::UnstableDetuning { .. }
            | Error::InsufficientData(_) => 3,
            Error::AmplitudeFloor { .. } | Error::StepSizeUnderflow { .. } | Error::TooManySteps { .. } | Error::OutOfSpan { .. } => 4,
            Error::InternalResonance { .. } => 5,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
