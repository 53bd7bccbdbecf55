use thiserror::Error;

/// Errors produced by configuration and evaluation of samplers, costs and
/// projections.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step index {step} out of range 1..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("rejection sampling budget exhausted after {attempts} attempts")]
    EnvironmentTooCrowded { attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
