use std::fmt;

/// Failure classes of the command line, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration, scenario or parameter files.
    Config(String),
    Diverged {
        epoch: usize,
    },
    /// The solve was not converged-feasible.
    Infeasible(String),
    AllCellsFailed(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Diverged { .. } => 3,
            CliError::Infeasible(_) => 4,
            CliError::AllCellsFailed(_) => 5,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
            CliError::Infeasible(m) => write!(f, "solve failed: {m}"),
            CliError::AllCellsFailed(m) => write!(f, "every comparison cell failed: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
