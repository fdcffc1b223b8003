use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("model coefficient is not finite ({0})")]
    CoefficientOverflow(String),

    #[error("binary variable {name} is fractional ({value})")]
    IntegralityViolation { name: String, value: f64 },

    #[error("solution violates {0}")]
    FeasibilityViolation(String),

    #[error("symmetry breaking requires a uniform phase alphabet")]
    NonUniformAlphabet,

    #[error("exhaustive search needs {candidates} candidates, guard is {guard}")]
    GuardExceeded { candidates: f64, guard: f64 },

    #[error("LP solve failed: {0}")]
    LpFailure(String),

    #[error("MPS parse error at line {line}: {message}")]
    Mps { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
