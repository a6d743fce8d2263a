//! Exchangeable Student-t and Gaussian processes over scalars.
//!
//! Every latent dimension of a model is an independent exchangeable process
//! whose covariance has a constant diagonal `v` and a constant off-diagonal
//! `rho`. That structure admits O(1) per-observation updates of the one-step
//! predictive distribution, implemented by [`ProcessParams::update_state`].
//! The [`oracle`] module holds closed-form and dense-matrix evaluations used
//! to cross-check the recurrences.

mod adjoint;
mod density;
pub mod oracle;
mod params;
mod sampler;
mod state;

pub use adjoint::{sequence_gradients, SequenceGradients};
pub use density::{gaussian_log_pdf, univariate_t_log_pdf};
pub use params::{ProcessMode, ProcessParams};
pub use sampler::sample_student_t;
pub use state::{PredictiveMoments, PredictiveState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("non-finite observation: {0}")]
    NonFinite(f64),
    #[error("domain error: {0}")]
    DomainError(String),
}
