use std::fmt;
use std::path::PathBuf;

/// Failures surfaced to the user. Usage problems exit with 2, everything
/// else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(mixdiff_core::Error),
    Io { path: PathBuf, source: std::io::Error },
    /// A command ran but one of its checks failed.
    Failed { module: &'static str, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.module(),
            CliError::Failed { module, .. } => module,
            CliError::Usage(_) | CliError::Io { .. } => "cli",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Failed { message, .. } => f.write_str(message),
        }
    }
}

impl From<mixdiff_core::Error> for CliError {
    fn from(e: mixdiff_core::Error) -> Self {
        CliError::Core(e)
    }
}
