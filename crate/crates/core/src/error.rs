use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid hyperparameter `{name}` = {value}")]
    InvalidHyperparameter { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("linear system is not positive definite (size {size})")]
    Conditioning { size: usize },

    #[error("solver did not converge after {iterations} iterations (best gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("no feasible streamline step from the Sun at ({row}, {col})")]
    EmptyStreamline { row: usize, col: usize },

    #[error("streamline reached a dead end at ({row}, {col}) before the image edge")]
    StreamlineDeadEnd { row: usize, col: usize },

    #[error("infinite traversal time at streamline pixel {index}")]
    InfiniteTraversal { index: usize },

    #[error("unknown sky condition `{0}`")]
    UnknownCondition(String),

    #[error("missing input file {}", .0.display())]
    MissingInput(std::path::PathBuf),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
