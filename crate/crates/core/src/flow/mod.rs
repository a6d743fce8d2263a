//! Invertible preprocessing and stacked affine coupling layers.

mod coupling;
mod dense;
mod preprocess;
mod stack;

pub use coupling::{CouplingCache, CouplingGrads, CouplingLayer};
pub use dense::{Dense, DenseGrads};
pub use preprocess::{dequantize, dequantize_with_noise, logit_forward, logit_inverse, PreprocessConfig};
pub use stack::{FlowCache, FlowStack, InitReport};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value {value} outside [0, {levels})")]
    RangeError { value: f64, levels: u32 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("weight normalization is disabled for this stack")]
    WeightnormDisabled,
}
