use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Fully connected layer `y = x Wᵀ + b`.
///
/// With weight normalization each row of `W` is `g_i · v_i / ‖v_i‖`, where
/// `direction` holds `v` and `magnitude` holds `g`. Without it `direction`
/// is `W` itself and `magnitude` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub(crate) direction: Array2<f64>,
    pub(crate) magnitude: Array1<f64>,
    pub(crate) bias: Array1<f64>,
    weightnorm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub direction: Array2<f64>,
    pub magnitude: Array1<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, weightnorm: bool, rng: &mut R) -> Self {
        let std = if weightnorm { 0.05 } else { 1.0 / (inputs.max(1) as f64).sqrt() };
        let direction = Array2::from_shape_simple_fn((outputs, inputs), || std * rng.sample::<f64, _>(StandardNormal));
        let magnitude = if weightnorm { Array1::ones(outputs) } else { Array1::zeros(0) };
        Self {
            direction,
            magnitude,
            bias: Array1::zeros(outputs),
            weightnorm,
        }
    }

    /// A layer whose effective weight and bias are exactly zero.
    pub fn zeroed<R: Rng + ?Sized>(inputs: usize, outputs: usize, weightnorm: bool, rng: &mut R) -> Self {
        let mut layer = Self::random(inputs, outputs, weightnorm, rng);
        if weightnorm {
            layer.magnitude.fill(0.0);
        } else {
            layer.direction.fill(0.0);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.direction.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.direction.nrows()
    }

    pub fn weightnorm(&self) -> bool {
        self.weightnorm
    }

    fn row_norms(&self) -> Array1<f64> {
        self.direction
            .map_axis(Axis(1), |row| row.dot(&row).sqrt().max(f64::MIN_POSITIVE))
    }

    pub fn weight(&self) -> Array2<f64> {
        if !self.weightnorm {
            return self.direction.clone();
        }
        let scale = &self.magnitude / &self.row_norms();
        &self.direction * &scale.insert_axis(Axis(1))
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight().t()) + &self.bias
    }

    /// Pre-activations computed with unit magnitude and zero bias, used by
    /// the data-dependent initialization.
    pub(crate) fn normalized_projection(&self, x: &Array2<f64>) -> Array2<f64> {
        let unit = &self.direction / &self.row_norms().insert_axis(Axis(1));
        x.dot(&unit.t())
    }

    /// Returns the gradient with respect to `x` and the parameter gradients.
    pub fn backward(&self, x: &Array2<f64>, grad_out: &Array2<f64>) -> (Array2<f64>, DenseGrads) {
        let weight = self.weight();
        let grad_in = grad_out.dot(&weight);
        let grad_weight = grad_out.t().dot(x);
        let bias = grad_out.sum_axis(Axis(0));
        if !self.weightnorm {
            return (
                grad_in,
                DenseGrads {
                    direction: grad_weight,
                    magnitude: Array1::zeros(0),
                    bias,
                },
            );
        }
        let norms = self.row_norms();
        let mut direction = Array2::zeros(self.direction.raw_dim());
        let mut magnitude = Array1::zeros(self.outputs());
        for i in 0..self.outputs() {
            let v = self.direction.row(i);
            let gw = grad_weight.row(i);
            let n = norms[i];
            let gg = gw.dot(&v) / n;
            magnitude[i] = gg;
            let scale = self.magnitude[i] / n;
            direction
                .row_mut(i)
                .assign(&((&gw - &(&v * (gg / n))) * scale));
        }
        (grad_in, DenseGrads { direction, magnitude, bias })
    }

    pub fn num_params(&self) -> usize {
        self.direction.len() + self.magnitude.len() + self.bias.len()
    }

    pub(crate) fn write_params(&self, out: &mut Vec<f64>) {
        out.extend(self.direction.iter());
        out.extend(self.magnitude.iter());
        out.extend(self.bias.iter());
    }

    pub(crate) fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for dst in self
            .direction
            .iter_mut()
            .chain(self.magnitude.iter_mut())
            .chain(self.bias.iter_mut())
        {
            *dst = src[at];
            at += 1;
        }
        at
    }
}

impl DenseGrads {
    pub(crate) fn write(&self, out: &mut Vec<f64>) {
        out.extend(self.direction.iter());
        out.extend(self.magnitude.iter());
        out.extend(self.bias.iter());
    }
}
