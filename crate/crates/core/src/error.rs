use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh generation failed: {0}")]
    MeshGeneration(String),

    #[error("no grid faces found on the fracture polygon")]
    EmptyFracture,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("singular local system at vertex {vertex} (pivot ratio {ratio:.3e})")]
    Discretization { vertex: usize, ratio: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("global system assembly failed: {0}")]
    Assembly(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("relative error undefined: exact solution has zero norm")]
    UndefinedRelativeError,

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for a command-line front end: 2 for bad input or
    /// configuration, 3 for failures while discretizing or solving, 1 for
    /// file I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::Unsupported(_)
            | Error::MeshGeneration(_)
            | Error::EmptyFracture
            | Error::DimensionMismatch { .. } => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
