use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// The variants map onto the process exit codes used by the `ddml` binary
/// (see [`DdmlError::exit_code`]).
#[derive(Debug, Error)]
pub enum DdmlError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("shape mismatch: expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("learner `{learner}` failed on fold {fold}: {source}")]
    LearnerFit {
        learner: String,
        fold: usize,
        #[source]
        source: Box<DdmlError>,
    },

    #[error("data error: {0}")]
    Io(#[from] std::io::Error),
}

impl DdmlError {
    pub fn config(msg: impl Into<String>) -> Self {
        DdmlError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        DdmlError::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        DdmlError::Numerical(msg.into())
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            DdmlError::Config(_) => "config",
            DdmlError::Data(_) | DdmlError::Io(_) => "data",
            DdmlError::Numerical(_) => "numerical",
            DdmlError::Shape { .. } => "shape",
            DdmlError::Contract(_) => "contract",
            DdmlError::LearnerFit { source, .. } => source.kind(),
        }
    }

    /// Exit code: 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" | "contract" => 2,
            "data" | "shape" => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, DdmlError>;
