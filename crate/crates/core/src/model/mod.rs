//! The composed model: a coupling-layer flow followed by one independent
//! exchangeable process per latent dimension.

mod bruno;
mod optim;
mod raw;
mod train;

pub use bruno::{BrunoModel, ModelConfig, ModelGradients, SequenceLikelihood};
pub use optim::RmsProp;
pub use raw::{inverse_softplus, sigmoid, softplus, RawProcess, VARIANCE_FLOOR};
pub use train::{learning_rate_at, train, TrainConfig, Trainer, TrainerState};

use crate::data::DataError;
use crate::flow::FlowError;
use crate::process::ProcessError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize, trace: Vec<f64> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
