use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::coupling::{CouplingCache, CouplingLayer};
use super::preprocess::{logit_forward, logit_inverse, PreprocessConfig};
use super::FlowError;

/// Logit preprocessing followed by coupling layers whose masks alternate
/// between odd and even coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    preprocess: PreprocessConfig,
    layers: Vec<CouplingLayer>,
    dim: usize,
}

#[derive(Debug, Clone)]
pub struct FlowCache {
    layers: Vec<CouplingCache>,
}

/// Outcome of the data-dependent initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitReport {
    pub units: usize,
    /// Units whose pre-activation had zero variance on the batch; they keep
    /// magnitude 1.
    pub degenerate_units: usize,
}

impl FlowStack {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        depth: usize,
        hidden: usize,
        weightnorm: bool,
        preprocess: PreprocessConfig,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        if dim < 2 {
            return Err(FlowError::InvalidConfig(format!("coupling needs dim >= 2, got {dim}")));
        }
        if hidden == 0 {
            return Err(FlowError::InvalidConfig("hidden width must be positive".into()));
        }
        preprocess.validate()?;
        let layers = (0..depth)
            .map(|l| CouplingLayer::new(dim, hidden, l % 2 == 0, weightnorm, rng))
            .collect();
        Ok(Self { preprocess, layers, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden(&self) -> usize {
        self.layers.first().map_or(0, CouplingLayer::hidden)
    }

    pub fn weightnorm(&self) -> bool {
        self.layers.first().is_some_and(|l| l.trunk[0].weightnorm())
    }

    pub fn preprocess(&self) -> &PreprocessConfig {
        &self.preprocess
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CouplingLayer] {
        &mut self.layers
    }

    fn check(&self, x: &Array2<f64>) -> Result<(), FlowError> {
        if x.ncols() != self.dim {
            return Err(FlowError::ShapeMismatch(format!("expected {} columns, got {}", self.dim, x.ncols())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite("flow input"));
        }
        Ok(())
    }

    fn preprocess_rows(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        if !self.preprocess.logit {
            return (x.clone(), Array1::zeros(x.nrows()));
        }
        let mut y = Array2::zeros(x.raw_dim());
        let mut logdet = Array1::zeros(x.nrows());
        for (r, row) in x.axis_iter(Axis(0)).enumerate() {
            let (yr, ld) = logit_forward(self.preprocess.alpha, row.as_slice().unwrap_or(&row.to_vec()));
            y.row_mut(r).assign(&Array1::from(yr));
            logdet[r] = ld;
        }
        (y, logdet)
    }

    /// Maps rows of `x` to latents; returns per-row log-det Jacobians.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>), FlowError> {
        let (z, logdet, _) = self.forward_cached(x)?;
        Ok((z, logdet))
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, FlowCache), FlowError> {
        self.check(x)?;
        let (mut h, mut logdet) = self.preprocess_rows(x);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, ld, cache) = layer.forward(&h);
            logdet += &ld;
            caches.push(cache);
            h = y;
        }
        if h.iter().any(|v| !v.is_finite()) || logdet.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite("flow output"));
        }
        Ok((h, logdet, FlowCache { layers: caches }))
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        let m = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| FlowError::ShapeMismatch(e.to_string()))?;
        let (z, ld) = self.forward(&m)?;
        Ok((z.into_raw_vec_and_offset().0, ld[0]))
    }

    pub fn inverse(&self, z: &Array2<f64>) -> Result<Array2<f64>, FlowError> {
        if z.ncols() != self.dim {
            return Err(FlowError::ShapeMismatch(format!("expected {} columns, got {}", self.dim, z.ncols())));
        }
        let mut h = z.clone();
        for layer in self.layers.iter().rev() {
            h = layer.inverse(&h);
        }
        if self.preprocess.logit {
            for mut row in h.axis_iter_mut(Axis(0)) {
                let x = logit_inverse(self.preprocess.alpha, &row.to_vec());
                row.assign(&Array1::from(x));
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite("flow inverse"));
        }
        Ok(h)
    }

    /// Gradients of `Σ grad_z ⊙ z + Σ grad_logdet ⊙ logdet` with respect to
    /// every parameter, flattened in [`FlowStack::params`] order.
    pub fn backward(
        &self,
        cache: &FlowCache,
        grad_z: &Array2<f64>,
        grad_logdet: &Array1<f64>,
    ) -> Result<Vec<f64>, FlowError> {
        if cache.layers.len() != self.layers.len() {
            return Err(FlowError::ShapeMismatch(format!(
                "cache holds {} layers, stack has {}",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        if grad_z.ncols() != self.dim || grad_logdet.len() != grad_z.nrows() {
            return Err(FlowError::ShapeMismatch("upstream gradient shape".into()));
        }
        if let Some(first) = cache.layers.first() {
            if first.rows() != grad_z.nrows() {
                return Err(FlowError::ShapeMismatch(format!(
                    "cache holds {} rows, gradient has {}",
                    first.rows(),
                    grad_z.nrows()
                )));
            }
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = grad_z.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (gx, grads) = layer.backward(c, &g, grad_logdet);
            per_layer.push(grads);
            g = gx;
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for grads in per_layer.iter().rev() {
            grads.write(&mut flat);
        }
        Ok(flat)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.dense_layers())
            .map(|d| d.num_params())
            .sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for d in self.layers.iter().flat_map(|l| l.dense_layers()) {
            d.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), FlowError> {
        if params.len() != self.num_params() {
            return Err(FlowError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            for d in layer.dense_layers_mut() {
                at += d.read_params(&params[at..]);
            }
        }
        Ok(())
    }

    /// Data-dependent weight-norm initialization: every trunk unit gets the
    /// magnitude and bias that standardize its pre-activation over `batch`.
    /// Output heads keep their zero magnitude, so the stack stays the
    /// identity after preprocessing.
    pub fn weightnorm_init(&mut self, batch: &Array2<f64>) -> Result<InitReport, FlowError> {
        if !self.weightnorm() {
            return Err(FlowError::WeightnormDisabled);
        }
        if batch.nrows() == 0 {
            return Err(FlowError::ShapeMismatch("empty initialization batch".into()));
        }
        self.check(batch)?;
        let (mut h, _) = self.preprocess_rows(batch);
        let mut report = InitReport {
            units: 0,
            degenerate_units: 0,
        };
        for layer in &mut self.layers {
            let mut input = h.select(Axis(1), layer.pass_indices());
            for dense in layer.trunk.iter_mut() {
                let pre = dense.normalized_projection(&input);
                let mean = pre.mean_axis(Axis(0)).expect("non-empty batch");
                let var = pre.var_axis(Axis(0), 0.0);
                for i in 0..dense.outputs() {
                    report.units += 1;
                    let std = var[i].sqrt();
                    if std > 1e-8 * (1.0 + mean[i].abs()) {
                        dense.magnitude[i] = 1.0 / std;
                        dense.bias[i] = -mean[i] / std;
                    } else {
                        report.degenerate_units += 1;
                        dense.magnitude[i] = 1.0;
                        dense.bias[i] = -mean[i];
                    }
                }
                input = dense.forward(&input).mapv(|a| if a > 0.0 { a } else { a.exp_m1() });
            }
            let (y, _, _) = layer.forward(&h);
            h = y;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn elu(a: f64) -> f64 {
        if a > 0.0 {
            a
        } else {
            a.exp_m1()
        }
    }

    fn batch(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, dim), |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn identity_layer_is_the_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack = FlowStack::new(5, 1, 4, true, PreprocessConfig::default(), &mut rng).unwrap();
        let x = batch(&mut rng, 3, 5);
        let (z, logdet) = stack.forward(&x).unwrap();
        for r in 0..3 {
            let (y, ld) = logit_forward(1e-6, &x.row(r).to_vec());
            assert_eq!(z.row(r).to_vec(), y);
            assert_eq!(logdet[r], ld);
        }
    }

    #[test]
    fn init_standardizes_trunk_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut stack = FlowStack::new(6, 3, 10, true, PreprocessConfig::default(), &mut rng).unwrap();
        let x = batch(&mut rng, 200, 6);
        let report = stack.weightnorm_init(&x).unwrap();
        assert_eq!(report.units, 3 * 2 * 10);
        assert_eq!(report.degenerate_units, 0);
        let (mut h, _) = stack.preprocess_rows(&x);
        for layer in stack.layers() {
            let mut input = h.select(Axis(1), layer.pass_indices());
            for dense in &layer.trunk {
                let pre = dense.forward(&input);
                for (m, v) in pre.mean_axis(Axis(0)).unwrap().iter().zip(pre.var_axis(Axis(0), 0.0).iter()) {
                    assert!(m.abs() < 1e-6);
                    assert!((v.sqrt() - 1.0).abs() < 1e-6);
                }
                input = pre.mapv(elu);
            }
            h = layer.forward(&h).0;
        }
        // heads stay zero, so the stack is still the preprocessing map
        let (z, _) = stack.forward(&x).unwrap();
        assert_eq!(z, stack.preprocess_rows(&x).0);
    }

    #[test]
    fn init_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stack = FlowStack::new(4, 2, 8, true, PreprocessConfig::default(), &mut rng).unwrap();
        let x = batch(&mut rng, 100, 4);
        stack.weightnorm_init(&x).unwrap();
        let once = stack.params();
        stack.weightnorm_init(&x).unwrap();
        for (a, b) in once.iter().zip(stack.params()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_batch_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut stack = FlowStack::new(4, 2, 8, true, PreprocessConfig::default(), &mut rng).unwrap();
        let x = Array2::from_elem((16, 4), 0.3);
        let report = stack.weightnorm_init(&x).unwrap();
        assert_eq!(report.degenerate_units, report.units);
        assert!(stack.params().iter().all(|p| p.is_finite()));
        assert!(stack.forward(&x).unwrap().0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn init_requires_weightnorm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stack = FlowStack::new(4, 2, 8, false, PreprocessConfig::default(), &mut rng).unwrap();
        let x = batch(&mut rng, 8, 4);
        assert!(matches!(stack.weightnorm_init(&x), Err(FlowError::WeightnormDisabled)));
    }

    #[test]
    fn backward_checks_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stack = FlowStack::new(4, 2, 8, true, PreprocessConfig::default(), &mut rng).unwrap();
        let x = batch(&mut rng, 3, 4);
        let (_, _, cache) = stack.forward_cached(&x).unwrap();
        let g = Array2::zeros((2, 4));
        assert!(matches!(stack.backward(&cache, &g, &Array1::zeros(2)), Err(FlowError::ShapeMismatch(_))));
        let other = FlowStack::new(4, 3, 8, true, PreprocessConfig::default(), &mut rng).unwrap();
        let g = Array2::zeros((3, 4));
        assert!(matches!(other.backward(&cache, &g, &Array1::zeros(3)), Err(FlowError::ShapeMismatch(_))));
    }
}
