use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("genotype must be non-empty text")]
    EmptyGenotype,
    #[error("fitness must be finite, got {0}")]
    NonFiniteFitness(f64),
    #[error("behavior descriptor contains a non-finite coordinate")]
    NonFiniteDescriptor,
    #[error("{field}: {reason}")]
    InvalidConfig { field: String, reason: String },
}

impl CoreError {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        CoreError::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
