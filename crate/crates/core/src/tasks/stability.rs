use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::model::{BrunoModel, ModelConfig, ModelError, TrainConfig, Trainer};
use crate::process::ProcessMode;

/// A loss trace, cut short if training diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutcome {
    pub trace: Vec<f64>,
    pub diverged_at: Option<usize>,
}

impl TraceOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in self.trace.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", i + 1));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.diverged_at.is_none() && self.trace.iter().all(|l| l.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub gp: TraceOutcome,
    pub tp: TraceOutcome,
}

fn run(config: ModelConfig, train: TrainConfig, dataset: &Dataset) -> Result<TraceOutcome, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let model = BrunoModel::new(config, &mut rng)?;
    let mut trainer = Trainer::new(model, train, dataset)?;
    match trainer.run(dataset, |_, _| {}) {
        Ok(()) => Ok(TraceOutcome {
            trace: trainer.into_state().trace,
            diverged_at: None,
        }),
        Err(ModelError::Diverged { iteration, trace }) => Ok(TraceOutcome {
            trace,
            diverged_at: Some(iteration),
        }),
        Err(e) => Err(e),
    }
}

/// Trains the same architecture from the same seed once with Gaussian and
/// once with Student-t processes. Outlier injection comes from `train`.
pub fn compare_modes(model: ModelConfig, train: TrainConfig, dataset: &Dataset) -> Result<ModeComparison, ModelError> {
    let gp = run(ModelConfig { mode: ProcessMode::Gaussian, ..model }, train, dataset)?;
    let tp = run(ModelConfig { mode: ProcessMode::StudentT, ..model }, train, dataset)?;
    Ok(ModeComparison { gp, tp })
}
