/// RMSProp: `ms ← decay·ms + (1 − decay)·g²`, `θ ← θ − lr·g / sqrt(ms + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    pub mean_square: Vec<f64>,
}

impl RmsProp {
    pub fn new(len: usize, decay: f64, eps: f64) -> Self {
        Self {
            decay,
            eps,
            mean_square: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.mean_square.len());
        for ((p, &g), ms) in params.iter_mut().zip(grads).zip(&mut self.mean_square) {
            *ms = self.decay * *ms + (1.0 - self.decay) * g * g;
            *p -= lr * g / (*ms + self.eps).sqrt();
        }
    }
}
