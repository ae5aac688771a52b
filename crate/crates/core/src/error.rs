use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the design/filtering pipeline.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A participant's data has the wrong shape.
    #[error("participant {participant}{}: {what} has shape {found}, expected {expected}", fmt_time(*.time))]
    ParticipantDimension {
        participant: usize,
        time: Option<usize>,
        what: &'static str,
        expected: String,
        found: String,
    },

    /// Shape mismatch not tied to a participant.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not symmetric")]
    NotSymmetric { what: String },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("invalid argument: {0}")]
    Domain(String),

    /// A matrix that must be inverted is singular.
    #[error("singular matrix in {what}{}", fmt_time(*.time))]
    Singular { what: String, time: Option<usize> },

    #[error("steady-state doubling did not converge after {iterations} steps (relative change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("process noise covariance W at t={time} is singular; regularize it explicitly (W + ηI) before building the SDP")]
    SingularProcessNoise { time: usize },

    #[error("SDP solver failed with status {status}: {message}")]
    Solver { status: String, message: String },

    /// Π is not realizable by any shaping matrix.
    #[error("information matrix is not feasible: {0}")]
    InfeasibleInformation(String),

    /// The recovered shaping matrix has no rows; nothing would be released.
    #[error("degenerate mechanism: shaping matrix has rank 0")]
    DegenerateMechanism,

    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),
}

fn fmt_time(time: Option<usize>) -> String {
    match time {
        Some(t) => format!(" at t={t}"),
        None => String::new(),
    }
}
