use std::fmt;

use fsmpc_core::Error as CoreError;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit 2).
    Config(String),
    /// Simulation diverged or the controller faulted (exit 3).
    Divergence(String),
    /// Unusable input data: dataset, model file, undefined indicators (exit 4).
    Data(String),
    /// Model incompatible with the configuration (exit 5).
    Compatibility(String),
    /// Anything else, such as failing to write an output file (exit 1).
    Io(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Data(_) => 4,
            CliError::Compatibility(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Config(m) => ("configuration error", m),
            CliError::Divergence(m) => ("simulation failed", m),
            CliError::Data(m) => ("data error", m),
            CliError::Compatibility(m) => ("incompatible model", m),
            CliError::Io(m) => ("i/o error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Config(_) => CliError::Config(msg),
            CoreError::Divergence { .. } | CoreError::ControllerFault(_) | CoreError::FluxNotEstablished => {
                CliError::Divergence(msg)
            }
            CoreError::ModelVersion { .. } => CliError::Compatibility(msg),
            CoreError::UndefinedIndicator(_)
            | CoreError::Training(_)
            | CoreError::ModelFormat { .. }
            | CoreError::Parse { .. } => CliError::Data(msg),
            CoreError::Io(_) => CliError::Io(msg),
        }
    }
}
