use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("embedding must have at least one row and one column (got {rows}x{cols})")]
    EmptyEmbedding { rows: usize, cols: usize },
    #[error("embedding holds a non-finite value at index {index}")]
    NonFiniteEmbedding { index: usize },
    #[error("every modality is masked out")]
    AllMasked,
    #[error("model dimension {d_model} is not divisible by {heads} heads")]
    HeadsDoNotDivide { d_model: usize, heads: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("dropout probability {0} outside [0, 1)")]
    DropoutRange(f64),
    #[error("schedule step {step} beyond horizon {horizon}")]
    StepBeyondHorizon { step: usize, horizon: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite loss ({component}) at epoch {epoch}, step {step}")]
    NonFiniteLoss { component: &'static str, epoch: usize, step: usize },
    #[error("non-finite loss during gradient check")]
    NonFiniteCheck,
    #[error("no labeled training samples")]
    EmptyTrainSplit,
    #[error("sample {0} has no label")]
    Unlabeled(String),
}

pub type Result<T, E = CoreError> = core::result::Result<T, E>;
