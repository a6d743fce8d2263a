use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BrunoModel, ModelError, RawProcess, RmsProp};
use crate::data::{sample_batch, DataKind, Dataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub process_lr_factor: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub iterations: usize,
    /// Halve the learning rate every this many steps; 0 means
    /// `ceil(iterations / 3)`.
    pub lr_decay_every: usize,
    pub seed: u64,
    /// Keep the degrees of freedom at their initial value.
    pub freeze_nu: bool,
    /// Items drawn for the data-dependent weight-norm initialization.
    pub init_items: usize,
    /// Every this many steps, the last item of each sequence is replaced by
    /// a constant outlier; 0 disables injection.
    pub outlier_every: usize,
    /// Outlier value for real-valued data; pixel data uses the top level.
    pub outlier_value: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            seq_len: 20,
            learning_rate: 1e-3,
            process_lr_factor: 0.1,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            iterations: 1000,
            lr_decay_every: 0,
            seed: 0,
            freeze_nu: false,
            init_items: 256,
            outlier_every: 0,
            outlier_value: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.seq_len < 2 {
            return fail("seq_len must be at least 2");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.process_lr_factor >= 0.0 && self.process_lr_factor.is_finite()) {
            return fail("process_lr_factor must be non-negative");
        }
        if !(0.0..1.0).contains(&self.rms_decay) || self.rms_eps < 0.0 {
            return fail("rms_decay must lie in [0, 1) and rms_eps must be non-negative");
        }
        Ok(())
    }
}

pub fn learning_rate_at(config: &TrainConfig, iteration: usize) -> f64 {
    let every = if config.lr_decay_every > 0 {
        config.lr_decay_every
    } else {
        config.iterations.div_ceil(3).max(1)
    };
    config.learning_rate * 0.5f64.powi((iteration / every) as i32)
}

/// Everything needed to resume training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub model: BrunoModel,
    pub flow_opt: RmsProp,
    pub process_opt: RmsProp,
    pub rng: ChaCha8Rng,
    pub iteration: usize,
    pub trace: Vec<f64>,
}

pub struct Trainer {
    state: TrainerState,
    config: TrainConfig,
}

impl Trainer {
    /// Fresh run: seeds the generator and, for weight-normalized flows, runs
    /// the data-dependent initialization on a random batch.
    pub fn new(mut model: BrunoModel, config: TrainConfig, dataset: &Dataset) -> Result<Self, ModelError> {
        config.validate()?;
        check_dataset(&model, dataset)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        if model.flow().weightnorm() && config.init_items > 0 {
            let picks = rand::seq::index::sample(&mut rng, dataset.len(), config.init_items.min(dataset.len())).into_vec();
            let batch = dataset.prepare(&picks, model.flow().preprocess(), &mut rng)?;
            model.flow_mut().weightnorm_init(&batch)?;
        }
        let flow_opt = RmsProp::new(model.flow().num_params(), config.rms_decay, config.rms_eps);
        let process_opt = RmsProp::new(3 * model.dim(), config.rms_decay, config.rms_eps);
        Ok(Self {
            state: TrainerState {
                model,
                flow_opt,
                process_opt,
                rng,
                iteration: 0,
                trace: Vec::new(),
            },
            config,
        })
    }

    pub fn resume(state: TrainerState, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        if state.flow_opt.mean_square.len() != state.model.flow().num_params()
            || state.process_opt.mean_square.len() != 3 * state.model.dim()
        {
            return Err(ModelError::ShapeMismatch("optimizer state does not match the model".into()));
        }
        Ok(Self { state, config })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn into_state(self) -> TrainerState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn inject_outliers(&self, dataset: &Dataset, sequences: &mut [Array2<f64>]) {
        let every = self.config.outlier_every;
        if every == 0 || !(self.state.iteration + 1).is_multiple_of(every) {
            return;
        }
        let value = match dataset.kind() {
            DataKind::Pixels { levels } => (levels as f64 - 0.5) / levels as f64,
            DataKind::Real => self.config.outlier_value,
        };
        for seq in sequences {
            let last = seq.nrows() - 1;
            seq.row_mut(last).fill(value);
        }
    }

    /// One optimizer step; returns the batch loss in nats per dimension per
    /// step.
    pub fn step(&mut self, dataset: &Dataset) -> Result<f64, ModelError> {
        let cfg = self.config;
        let lr = learning_rate_at(&cfg, self.state.iteration);
        let batch = sample_batch(dataset, cfg.seq_len, cfg.batch_size, &mut self.state.rng)?;
        let preprocess = *self.state.model.flow().preprocess();
        let mut sequences = batch
            .iter()
            .map(|idx| dataset.prepare(idx, &preprocess, &mut self.state.rng))
            .collect::<Result<Vec<_>, _>>()?;
        self.inject_outliers(dataset, &mut sequences);

        let dim = self.state.model.dim();
        let scale = (cfg.batch_size * cfg.seq_len * dim) as f64;
        let weights = vec![1.0; cfg.seq_len];
        let result = self
            .state
            .model
            .weighted_gradients(&sequences, &weights, |v| vec![-1.0 / scale; v.len()]);
        let (values, mut grads) = match result {
            Ok(r) => r,
            Err(ModelError::Flow(_)) | Err(ModelError::Process(_)) => return Err(self.diverged(f64::NAN)),
            Err(e) => return Err(e),
        };
        let loss = -values.iter().sum::<f64>() / scale;
        if !loss.is_finite() || grads.flow.iter().chain(&grads.process).any(|g| !g.is_finite()) {
            return Err(self.diverged(loss));
        }
        if cfg.freeze_nu {
            grads.process[..dim].fill(0.0);
        }

        let model = &mut self.state.model;
        let mut flow_params = model.flow().params();
        self.state.flow_opt.step(&mut flow_params, &grads.flow, lr);
        model.flow_mut().set_params(&flow_params)?;
        let mut raw = model.raw_process().flatten();
        self.state
            .process_opt
            .step(&mut raw, &grads.process, lr * cfg.process_lr_factor);
        model.set_raw_process(RawProcess::from_flat(&raw).expect("three blocks"))?;

        self.state.trace.push(loss);
        self.state.iteration += 1;
        Ok(loss)
    }

    fn diverged(&self, loss: f64) -> ModelError {
        let mut trace = self.state.trace.clone();
        trace.push(loss);
        ModelError::Diverged {
            iteration: self.state.iteration,
            trace,
        }
    }

    /// Steps until `config.iterations` is reached, calling `on_step(iteration,
    /// loss)` after each step.
    pub fn run<F: FnMut(usize, f64)>(&mut self, dataset: &Dataset, mut on_step: F) -> Result<(), ModelError> {
        while self.state.iteration < self.config.iterations {
            let loss = self.step(dataset)?;
            on_step(self.state.iteration, loss);
        }
        Ok(())
    }
}

fn check_dataset(model: &BrunoModel, dataset: &Dataset) -> Result<(), ModelError> {
    if dataset.dim() != model.dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "dataset dim {} vs model dim {}",
            dataset.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Trains for `config.iterations` steps; returns the model and loss trace.
pub fn train(model: BrunoModel, dataset: &Dataset, config: TrainConfig) -> Result<(BrunoModel, Vec<f64>), ModelError> {
    let mut trainer = Trainer::new(model, config, dataset)?;
    trainer.run(dataset, |_, _| {})?;
    let state = trainer.into_state();
    Ok((state.model, state.trace))
}
