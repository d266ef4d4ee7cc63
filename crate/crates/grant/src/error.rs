use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix or vector had an unexpected shape.
    #[error("shape error: {0}")]
    Shape(String),

    /// A graph violated a structural invariant (asymmetry, self-loop, ...).
    #[error("graph {index}: {reason}")]
    InvalidGraph { index: usize, reason: String },

    /// A dataset file failed to parse.
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// An operation received arguments outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration rejected before any work was done.
    #[error("config error: {0}")]
    Config(String),

    /// The requested operation is not defined for this task kind.
    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    /// ROC-AUC / AP requested on a label set with a single class.
    #[error("degenerate labels: both classes must be present")]
    DegenerateLabels,

    /// All probe jacobians vanished; the kernel bound is undefined.
    #[error("zero kernel: all probe jacobians are zero")]
    ZeroKernel,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io {
            context: "io".into(),
            source,
        }
    }
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code class: 1 for usage/config errors, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
