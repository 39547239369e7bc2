use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports. [`Error::module`] names the subsystem
/// the failure belongs to so front ends can prefix messages consistently.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{0}")]
    InvalidData(String),

    #[error("{0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{0}")]
    Scoring(String),

    #[error("no auxiliary samples")]
    NoAuxiliary,

    #[error("{0}")]
    Perturb(String),

    #[error("access level denied")]
    AccessDenied,

    #[error("gradients unavailable")]
    GradientsUnavailable,

    #[error("{0}")]
    Backend(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("no oracle exemplars for class {0}")]
    NoOracleForClass(usize),

    #[error("{0}")]
    Engine(String),

    #[error("{0}")]
    Theory(String),

    #[error("{0}")]
    Metrics(String),

    #[error("{0}")]
    Server(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short subsystem tag used in `ERROR <module>: <message>` lines.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Parse { .. }
            | Error::EmptyDataset
            | Error::InvalidData(_)
            | Error::Io { .. }
            | Error::Json(_) => "core",
            Error::InvalidConfig(_) => "config",
            Error::DimensionMismatch { .. } => "core",
            Error::Scoring(_) => "scoring",
            Error::NoAuxiliary | Error::Perturb(_) => "perturb",
            Error::AccessDenied
            | Error::GradientsUnavailable
            | Error::Backend(_)
            | Error::Transport(_) => "backend",
            Error::NoOracleForClass(_) | Error::Engine(_) => "engine",
            Error::Theory(_) => "theory",
            Error::Metrics(_) => "metrics",
            Error::Server(_) => "modelserver",
            Error::Context { source, .. } => source.module(),
        }
    }

    /// Innermost error, skipping any [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Context {
            context: context(),
            source: Box::new(source),
        })
    }
}
