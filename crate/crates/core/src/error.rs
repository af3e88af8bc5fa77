use thiserror::Error;

/// Errors raised while configuring or evaluating neural forms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("a network needs at least one neuron")]
    ZeroNeurons,
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid interval [{a}, {b}]: need a < b")]
    InvalidInterval { a: f64, b: f64 },
    #[error("grid needs at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("degenerate condition coefficients: {0}")]
    DegenerateCondition(String),
    #[error("match parameters do not fit the condition type: {0}")]
    MatchArity(String),
    #[error("unsupported form configuration: {0}")]
    InvalidForm(String),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("problem `{problem}` has no condition variant `{variant}`")]
    UnknownVariant { problem: String, variant: String },
    #[error("problem `{0}` has no exact solution")]
    MissingExact(String),
    #[error("expected {expected} solution components, got {got}")]
    ComponentMismatch { expected: usize, got: usize },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("deviation bound is not valid (delta^2 >= s^2)")]
    InvalidBound,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
