use rand::Rng;

use super::FlowError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Logit stabilizer, `0 < alpha < 0.5`.
    pub alpha: f64,
    pub num_levels: u32,
    /// Integer inputs get uniform noise before rescaling.
    pub dequantize: bool,
    /// Apply `logit(alpha + (1 - 2 alpha) x)` as the first bijection. Off for
    /// real-valued data.
    pub logit: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-6,
            num_levels: 256,
            dequantize: true,
            logit: true,
        }
    }
}

impl PreprocessConfig {
    /// Identity preprocessing for real-valued observations.
    pub fn real() -> Self {
        Self {
            dequantize: false,
            logit: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(FlowError::InvalidConfig(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.num_levels == 0 {
            return Err(FlowError::InvalidConfig("num_levels must be positive".into()));
        }
        Ok(())
    }

    /// Interval that inverse-mapped samples always land in.
    pub fn output_range(&self) -> (f64, f64) {
        let a = self.alpha;
        (-a / (1.0 - 2.0 * a), (1.0 - a) / (1.0 - 2.0 * a))
    }

    pub fn logit_forward(&self, x: &[f64]) -> (Vec<f64>, f64) {
        logit_forward(self.alpha, x)
    }

    pub fn logit_inverse(&self, y: &[f64]) -> Vec<f64> {
        logit_inverse(self.alpha, y)
    }
}

/// Elementwise `logit(alpha + (1 - 2 alpha) x)` and its log-det Jacobian.
pub fn logit_forward(alpha: f64, x: &[f64]) -> (Vec<f64>, f64) {
    let scale = 1.0 - 2.0 * alpha;
    let mut logdet = 0.0;
    let y = x
        .iter()
        .map(|&xi| {
            let p = alpha + scale * xi;
            logdet += scale.ln() - p.ln() - (1.0 - p).ln();
            p.ln() - (1.0 - p).ln()
        })
        .collect();
    (y, logdet)
}

pub fn logit_inverse(alpha: f64, y: &[f64]) -> Vec<f64> {
    let scale = 1.0 - 2.0 * alpha;
    y.iter()
        .map(|&yi| (sigmoid(yi) - alpha) / scale)
        .collect()
}

pub(crate) fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

fn check_levels(x: &[f64], levels: u32) -> Result<(), FlowError> {
    match x.iter().find(|&&v| !(v >= 0.0 && v < levels as f64)) {
        Some(&value) => Err(FlowError::RangeError { value, levels }),
        None => Ok(()),
    }
}

/// `(x + u) / levels` with `u ~ U[0, 1)` per component.
pub fn dequantize<R: Rng + ?Sized>(x: &[f64], levels: u32, rng: &mut R) -> Result<Vec<f64>, FlowError> {
    check_levels(x, levels)?;
    let l = levels as f64;
    Ok(x.iter().map(|&xi| (xi + rng.random::<f64>()) / l).collect())
}

pub fn dequantize_with_noise(x: &[f64], levels: u32, noise: &[f64]) -> Result<Vec<f64>, FlowError> {
    if x.len() != noise.len() {
        return Err(FlowError::ShapeMismatch(format!("{} values, {} noise draws", x.len(), noise.len())));
    }
    check_levels(x, levels)?;
    let l = levels as f64;
    Ok(x.iter().zip(noise).map(|(xi, u)| (xi + u) / l).collect())
}
