use thiserror::Error;

/// Failures surfaced by the harness, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("expectation not met: {0}")]
    Expectation(String),

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => 2,
            CliError::Expectation(_) => 3,
            CliError::Config(_) | CliError::Io(_) => 4,
        }
    }
}

impl From<carnot_core::Error> for CliError {
    fn from(e: carnot_core::Error) -> Self {
        use carnot_core::Error as E;
        match e {
            E::UnreachedTarget { .. } | E::OracleFailure { .. } | E::Divergence { .. } | E::Evaluation(_) | E::NonSmooth(_) => {
                CliError::Solver(e.to_string())
            }
            E::Dimension { .. } | E::Domain(_) | E::InvalidSpec(_) | E::Validation(_) | E::Config(_) | E::Serde(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
