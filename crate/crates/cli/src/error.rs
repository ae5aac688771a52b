use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; `path` names the offending field.
    #[error("invalid configuration at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Compute(dpkf::Error),
}

impl CliError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 2 for validation, 3 for solver failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) | CliError::Compute(_) => 1,
        }
    }
}

impl From<dpkf::Error> for CliError {
    fn from(e: dpkf::Error) -> Self {
        match e {
            // A design that cannot be turned into a mechanism is a failed solve.
            dpkf::Error::Solver { .. } | dpkf::Error::InfeasibleInformation(_) | dpkf::Error::DegenerateMechanism => {
                CliError::Solver(e.to_string())
            }
            dpkf::Error::InvalidPlan(msg) => CliError::validation("simulation", msg),
            other => CliError::Compute(other),
        }
    }
}
