//! Datasets, IDX ingestion, synthetic exchangeable data and sequence sampling.

mod dataset;
mod episodes;
pub mod idx;
mod synth;

pub use dataset::{DataKind, Dataset};
pub use episodes::{episode_stream, sample_batch, sample_sequence, EpisodeStream};
pub use idx::load_idx;
pub use synth::{synth_exchangeable, SynthConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad IDX magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
