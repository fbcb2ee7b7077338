use thiserror::Error;

/// Errors produced by the planning, learning and control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("joint {joint} = {value} outside limits [{min}, {max}]")]
    JointLimit {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("point {index} has non-positive depth {depth} in the camera frame")]
    Projection { index: usize, depth: f64 },

    #[error("configuration {q:?} projects outside the image: {reason}")]
    Visibility { q: Vec<f64>, reason: String },

    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("input not ordered by frame index at position {position}")]
    Unordered { position: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch} (non-finite loss); try a lower learning rate")]
    Diverged { epoch: usize },

    #[error("model weights are not finite")]
    NonFiniteModel,

    #[error("missing oracle joint configurations: {0}")]
    MissingOracle(String),

    #[error("plant fault: {0}")]
    Plant(String),

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
