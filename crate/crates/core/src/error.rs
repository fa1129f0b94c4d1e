use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch at {layer}: expected {expected}, got {got}")]
    Dimension {
        layer: String,
        expected: usize,
        got: usize,
    },

    #[error("backward called on `{net}` without a recorded forward pass")]
    NoForward { net: String },

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("missing artifacts:\n{}", list_paths(.0))]
    MissingArtifacts(Vec<PathBuf>),

    #[error("csv schema error: {0}")]
    Schema(String),

    #[error("{0}")]
    Invalid(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact(_) | Error::MissingArtifacts(_) => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::NonFiniteGradient { .. } | Error::NonFinite(_) => 3,
            _ => 1,
        }
    }
}

fn list_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| format!("  {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n")
}
