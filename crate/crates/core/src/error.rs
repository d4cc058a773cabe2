use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t:.6} s: {state}")]
    Divergence { t: f64, state: String },

    #[error("controller fault: {0}")]
    ControllerFault(String),

    #[error("flux not established: d-axis current reference is zero")]
    FluxNotEstablished,

    #[error("indicator undefined: {0}")]
    UndefinedIndicator(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("malformed model file at line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("unsupported model file version {found} (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("malformed {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
