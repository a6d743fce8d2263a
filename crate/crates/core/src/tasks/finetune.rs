use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fewshot::{episode_sequences, sample_episode};
use crate::data::Dataset;
use crate::model::{learning_rate_at, BrunoModel, ModelError, ModelGradients, RawProcess, RmsProp, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub iterations: usize,
    pub episodes_per_step: usize,
    pub learning_rate: f64,
    pub process_lr_factor: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_step: 8,
            learning_rate: 1e-4,
            process_lr_factor: 0.1,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            seed: 0,
        }
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Softmax cross-entropy of `target` under `logits`.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    -log_softmax(logits)[target]
}

/// Cross-entropy and gradients for a group of episodes. `groups[g]` holds
/// the per-class sequences of episode `g` (support rows then the query) and
/// `targets[g]` its true class. The loss is the mean over episodes.
pub fn episode_loss(
    model: &BrunoModel,
    groups: &[Vec<Array2<f64>>],
    targets: &[usize],
) -> Result<(f64, ModelGradients), ModelError> {
    assert_eq!(groups.len(), targets.len());
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let sequences: Vec<Array2<f64>> = groups.iter().flatten().cloned().collect();
    let len = sequences
        .first()
        .ok_or_else(|| ModelError::ShapeMismatch("no episodes".into()))?
        .nrows();
    let mut weights = vec![0.0; len];
    weights[len - 1] = 1.0;
    let mut loss = 0.0;
    let count = groups.len() as f64;
    let (_, grads) = model.weighted_gradients(&sequences, &weights, |values| {
        let mut coeffs = Vec::with_capacity(values.len());
        let mut at = 0;
        for (&size, &target) in sizes.iter().zip(targets) {
            let logits = &values[at..at + size];
            let logp = log_softmax(logits);
            loss -= logp[target] / count;
            for (i, lp) in logp.iter().enumerate() {
                let delta = if i == target { 1.0 } else { 0.0 };
                coeffs.push((lp.exp() - delta) / count);
            }
            at += size;
        }
        coeffs
    })?;
    Ok((loss, grads))
}

/// Minimizes episode cross-entropy with fixed `n` and `k`. Returns the tuned
/// model and the per-step loss trace.
pub fn discriminative_finetune(
    model: &BrunoModel,
    dataset: &Dataset,
    n: usize,
    k: usize,
    config: &FinetuneConfig,
) -> Result<(BrunoModel, Vec<f64>), ModelError> {
    if config.episodes_per_step == 0 {
        return Err(ModelError::InvalidConfig("episodes_per_step must be positive".into()));
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut flow_opt = RmsProp::new(model.flow().num_params(), config.rms_decay, config.rms_eps);
    let mut process_opt = RmsProp::new(3 * model.dim(), config.rms_decay, config.rms_eps);
    let schedule = TrainConfig {
        learning_rate: config.learning_rate,
        iterations: config.iterations,
        ..TrainConfig::default()
    };
    let mut trace = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut groups = Vec::with_capacity(config.episodes_per_step);
        let mut targets = Vec::with_capacity(config.episodes_per_step);
        for _ in 0..config.episodes_per_step {
            let episode = sample_episode(dataset, n, k, &mut rng)?;
            groups.push(episode_sequences(&model, dataset, &episode, &mut rng)?);
            targets.push(episode.target);
        }
        let diverged = |trace: &Vec<f64>, loss| {
            let mut trace = trace.clone();
            trace.push(loss);
            ModelError::Diverged { iteration: it, trace }
        };
        let (loss, grads) = match episode_loss(&model, &groups, &targets) {
            Ok(r) => r,
            Err(ModelError::Flow(_)) | Err(ModelError::Process(_)) => return Err(diverged(&trace, f64::NAN)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grads.flow.iter().chain(&grads.process).any(|g| !g.is_finite()) {
            return Err(diverged(&trace, loss));
        }
        let lr = learning_rate_at(&schedule, it);
        let mut flow_params = model.flow().params();
        flow_opt.step(&mut flow_params, &grads.flow, lr);
        model.flow_mut().set_params(&flow_params)?;
        let mut raw = model.raw_process().flatten();
        process_opt.step(&mut raw, &grads.process, lr * config.process_lr_factor);
        model.set_raw_process(RawProcess::from_flat(&raw).expect("three blocks"))?;
        trace.push(loss);
    }
    Ok((model, trace))
}
