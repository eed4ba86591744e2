use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("writer {writer_id} has only {available} genuine signatures, {required} required")]
    InsufficientGenuines {
        writer_id: u32,
        available: usize,
        required: usize,
    },

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("training set of size {training} is smaller than k = {k}")]
    TrainingSmallerThanK { training: usize, k: usize },

    #[error("single-class input: training requires both positive and negative samples")]
    SingleClass,

    #[error("SMO did not converge within {max_passes} passes (max KKT violation {residual:.6e})")]
    NonConvergence { max_passes: usize, residual: f64 },

    #[error("mixed k values in hardness scores: {0} vs {1}")]
    MixedK(usize, usize),

    #[error("model file {path}: {message}")]
    Model { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
