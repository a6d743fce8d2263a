use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::raw::RawProcess;
use super::ModelError;
use crate::flow::{FlowStack, PreprocessConfig};
use crate::process::{self, oracle, PredictiveState, ProcessMode, ProcessParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub depth: usize,
    pub hidden: usize,
    pub weightnorm: bool,
    pub mode: ProcessMode,
    pub preprocess: PreprocessConfig,
    pub init_nu: f64,
    pub init_v: f64,
    pub init_rho: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 784,
            depth: 6,
            hidden: 128,
            weightnorm: true,
            mode: ProcessMode::StudentT,
            preprocess: PreprocessConfig::default(),
            init_nu: 1000.0,
            init_v: 1.0,
            init_rho: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrunoModel {
    config: ModelConfig,
    flow: FlowStack,
    raw: RawProcess,
}

/// Per-step `log p(x_n | x_{<n})` including the flow's log-det term.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLikelihood {
    pub per_step: Vec<f64>,
    pub total: f64,
}

/// Gradients with respect to the flat flow parameters and the flattened raw
/// process parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub flow: Vec<f64>,
    pub process: Vec<f64>,
}

struct SequencePass {
    value: f64,
    dz: Array2<f64>,
    process: Vec<f64>,
}

impl BrunoModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        let flow = FlowStack::new(
            config.dim,
            config.depth,
            config.hidden,
            config.weightnorm,
            config.preprocess,
            rng,
        )?;
        let raw = RawProcess::constant(config.dim, config.init_nu, config.init_v, config.init_rho)?;
        Ok(Self { config, flow, raw })
    }

    pub fn from_parts(config: ModelConfig, flow: FlowStack, raw: RawProcess) -> Result<Self, ModelError> {
        if flow.dim() != config.dim || raw.dim() != config.dim {
            return Err(ModelError::ShapeMismatch(format!(
                "config dim {}, flow dim {}, process dim {}",
                config.dim,
                flow.dim(),
                raw.dim()
            )));
        }
        Ok(Self { config, flow, raw })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn mode(&self) -> ProcessMode {
        self.config.mode
    }

    pub fn flow(&self) -> &FlowStack {
        &self.flow
    }

    pub fn flow_mut(&mut self) -> &mut FlowStack {
        &mut self.flow
    }

    pub fn raw_process(&self) -> &RawProcess {
        &self.raw
    }

    /// Replaces the raw process parameters and re-projects them.
    pub fn set_raw_process(&mut self, mut raw: RawProcess) -> Result<(), ModelError> {
        if raw.dim() != self.dim() {
            return Err(ModelError::ShapeMismatch(format!("{} process dims for a {}-dim model", raw.dim(), self.dim())));
        }
        raw.clamp();
        self.raw = raw;
        Ok(())
    }

    pub fn process(&self, d: usize) -> ProcessParams {
        self.raw.decode(d, self.config.mode)
    }

    pub fn processes(&self) -> Vec<ProcessParams> {
        (0..self.dim()).map(|d| self.process(d)).collect()
    }

    /// Latent codes and per-row log-det Jacobians.
    pub fn latents(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>), ModelError> {
        Ok(self.flow.forward(x)?)
    }

    pub fn sequence_log_likelihood(&self, x: &Array2<f64>) -> Result<SequenceLikelihood, ModelError> {
        let (z, logdet) = self.latents(x)?;
        let mut per_step = logdet.to_vec();
        for (d, p) in self.processes().iter().enumerate() {
            let mut state = p.prior_state();
            for (n, &zn) in z.column(d).iter().enumerate() {
                per_step[n] += p.predictive_log_density(&state, zn)?;
                state = p.update_state(&state, zn)?;
            }
        }
        let total = per_step.iter().sum();
        Ok(SequenceLikelihood { per_step, total })
    }

    /// Joint log-likelihood from the closed-form multivariate density of each
    /// latent dimension; quadratic in the sequence length.
    pub fn joint_log_likelihood_naive(&self, x: &Array2<f64>) -> Result<f64, ModelError> {
        let (z, logdet) = self.latents(x)?;
        let mut total = logdet.sum();
        for (d, p) in self.processes().iter().enumerate() {
            total += oracle::mvt_log_pdf(p, &z.column(d).to_vec())?;
        }
        Ok(total)
    }

    /// Process states after conditioning on the rows of `x_obs`.
    pub fn condition(&self, x_obs: &Array2<f64>) -> Result<Vec<PredictiveState>, ModelError> {
        let params = self.processes();
        if x_obs.nrows() == 0 {
            return Ok(params.iter().map(|p| p.prior_state()).collect());
        }
        let (z, _) = self.latents(x_obs)?;
        params
            .iter()
            .enumerate()
            .map(|(d, p)| Ok(p.condition_on(&z.column(d).to_vec())?))
            .collect()
    }

    /// Draws `count` items from the predictive distribution given `x_obs`
    /// and maps them back through the flow.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        x_obs: &Array2<f64>,
        count: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>, ModelError> {
        let z = self.sample_latents(&self.condition(x_obs)?, count, rng);
        Ok(self.flow.inverse(&z)?)
    }

    pub fn sample_latents<R: Rng + ?Sized>(&self, states: &[PredictiveState], count: usize, rng: &mut R) -> Array2<f64> {
        let params = self.processes();
        let mut z = Array2::zeros((count, self.dim()));
        for mut row in z.axis_iter_mut(Axis(0)) {
            for (d, (p, s)) in params.iter().zip(states).enumerate() {
                row[d] = p.sample_predictive(s, rng);
            }
        }
        z
    }

    /// Values and gradients of `Σ_s c_s v_s`, where
    /// `v_s = Σ_n w_n log p(x_{s,n} | x_{s,<n})` and `c = coefficients(v)`.
    ///
    /// All sequences must have `step_weights.len()` rows.
    pub fn weighted_gradients<F>(
        &self,
        sequences: &[Array2<f64>],
        step_weights: &[f64],
        coefficients: F,
    ) -> Result<(Vec<f64>, ModelGradients), ModelError>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        let len = step_weights.len();
        if sequences.is_empty() {
            return Err(ModelError::ShapeMismatch("no sequences".into()));
        }
        if let Some(bad) = sequences.iter().find(|s| s.nrows() != len || s.ncols() != self.dim()) {
            return Err(ModelError::ShapeMismatch(format!(
                "sequence of shape {:?}, expected ({len}, {})",
                bad.shape(),
                self.dim()
            )));
        }
        let views: Vec<_> = sequences.iter().map(|s| s.view()).collect();
        let stacked = ndarray::concatenate(Axis(0), &views).map_err(|e| ModelError::ShapeMismatch(e.to_string()))?;
        let (z, logdet, cache) = self.flow.forward_cached(&stacked)?;
        let params = self.processes();
        let weights = step_weights;

        let passes: Vec<SequencePass> = (0..sequences.len())
            .into_par_iter()
            .map(|s| {
                let block = z.slice(ndarray::s![s * len..(s + 1) * len, ..]);
                let mut value: f64 = (0..len).map(|n| weights[n] * logdet[s * len + n]).sum();
                let mut dz = Array2::zeros((len, self.dim()));
                let mut grads = vec![0.0; 3 * self.dim()];
                let dim = self.dim();
                for (d, p) in params.iter().enumerate() {
                    let g = process::sequence_gradients(p, &block.column(d).to_vec(), weights)?;
                    value += g.objective;
                    dz.column_mut(d).assign(&Array1::from(g.dz));
                    let (gn, gv, gr) = self.raw.raw_gradient(d, g.dnu, g.dv, g.drho);
                    grads[d] = gn;
                    grads[dim + d] = gv;
                    grads[2 * dim + d] = gr;
                }
                Ok(SequencePass { value, dz, process: grads })
            })
            .collect::<Result<_, ModelError>>()?;

        let values: Vec<f64> = passes.iter().map(|p| p.value).collect();
        let coeffs = coefficients(&values);
        assert_eq!(coeffs.len(), values.len(), "one coefficient per sequence");

        let mut grad_z = Array2::zeros(z.raw_dim());
        let mut grad_logdet = Array1::zeros(z.nrows());
        let mut process_grad = vec![0.0; 3 * self.dim()];
        for (s, (pass, &c)) in passes.iter().zip(&coeffs).enumerate() {
            grad_z
                .slice_mut(ndarray::s![s * len..(s + 1) * len, ..])
                .assign(&(&pass.dz * c));
            for n in 0..len {
                grad_logdet[s * len + n] = c * weights[n];
            }
            for (acc, g) in process_grad.iter_mut().zip(&pass.process) {
                *acc += c * g;
            }
        }
        let flow_grad = self.flow.backward(&cache, &grad_z, &grad_logdet)?;
        Ok((
            values,
            ModelGradients {
                flow: flow_grad,
                process: process_grad,
            },
        ))
    }
}
