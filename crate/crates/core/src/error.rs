use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lower bound {a} exceeds upper bound {b}")]
    InvalidRange { a: f64, b: f64 },

    #[error("invalid scale: {0} is negative")]
    InvalidScale(f64),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid horizon: need at least 2 steps, got {0}")]
    InvalidHorizon(usize),

    #[error("insufficient data: need at least {need} values, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("invalid summary: length {left} does not match {right}")]
    InvalidSummary { left: usize, right: usize },

    #[error("empty set: every prior predictive row failed")]
    EmptySet,

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate path: shape process fell below floor {restarts} times")]
    DegeneratePath { restarts: usize },

    #[error("extinct population")]
    ExtinctPopulation,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable kebab-case identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidRange { .. } => "invalid-range",
            Error::InvalidScale(_) => "invalid-scale",
            Error::InvalidShape(_) => "invalid-shape",
            Error::InvalidHorizon(_) => "invalid-horizon",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::InvalidSummary { .. } => "invalid-summary",
            Error::EmptySet => "empty-set",
            Error::DegenerateEnsemble(_) => "degenerate-ensemble",
            Error::InvalidModel(_) => "invalid-model",
            Error::NonConvergence(_) => "non-convergence",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidGrid(_) => "invalid-grid",
            Error::DegeneratePath { .. } => "degenerate-path",
            Error::ExtinctPopulation => "extinct-population",
            Error::InvalidInput(_) => "invalid-input",
            Error::Parse { .. } => "parse-error",
            Error::Io(_) => "io-error",
        }
    }
}
