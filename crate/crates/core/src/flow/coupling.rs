use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use super::dense::{Dense, DenseGrads};

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Affine coupling: the `pass` coordinates are copied and the `transform`
/// coordinates become `x·exp(s) + t`, with `s = tanh(·)` and `t` produced by
/// two heads on a shared two-layer ELU trunk fed only the copied half.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pass: Vec<usize>,
    transform: Vec<usize>,
    pub(crate) trunk: [Dense; 2],
    pub(crate) scale: Dense,
    pub(crate) shift: Dense,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CouplingCache {
    input: Array2<f64>,
    h0: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    s: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct CouplingGrads {
    pub trunk: [DenseGrads; 2],
    pub scale: DenseGrads,
    pub shift: DenseGrads,
}

impl CouplingLayer {
    /// `odd = true` transforms the odd coordinates and copies the even ones.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, odd: bool, weightnorm: bool, rng: &mut R) -> Self {
        let (transform, pass): (Vec<usize>, Vec<usize>) = (0..dim).partition(|i| (i % 2 == 1) == odd);
        let trunk = [
            Dense::random(pass.len(), hidden, weightnorm, rng),
            Dense::random(hidden, hidden, weightnorm, rng),
        ];
        let scale = Dense::zeroed(hidden, transform.len(), weightnorm, rng);
        let shift = Dense::zeroed(hidden, transform.len(), weightnorm, rng);
        Self {
            pass,
            transform,
            trunk,
            scale,
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        self.pass.len() + self.transform.len()
    }

    pub fn pass_indices(&self) -> &[usize] {
        &self.pass
    }

    pub fn transform_indices(&self) -> &[usize] {
        &self.transform
    }

    pub fn hidden(&self) -> usize {
        self.trunk[0].outputs()
    }

    pub(crate) fn dense_layers(&self) -> [&Dense; 4] {
        [&self.trunk[0], &self.trunk[1], &self.scale, &self.shift]
    }

    pub(crate) fn dense_layers_mut(&mut self) -> [&mut Dense; 4] {
        let [t0, t1] = &mut self.trunk;
        [t0, t1, &mut self.scale, &mut self.shift]
    }

    /// Scale and shift produced from the copied half of each row.
    pub fn scale_shift(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let c = self.conditioner(x);
        (c.s, self.shift.forward(&c.h2))
    }

    fn conditioner(&self, x: &Array2<f64>) -> CouplingCache {
        let h0 = x.select(Axis(1), &self.pass);
        let a1 = self.trunk[0].forward(&h0);
        let h1 = a1.mapv(elu);
        let a2 = self.trunk[1].forward(&h1);
        let h2 = a2.mapv(elu);
        let s = self.scale.forward(&h2).mapv(f64::tanh);
        CouplingCache {
            input: x.clone(),
            h0,
            a1,
            h1,
            a2,
            h2,
            s,
        }
    }

    /// Maps each row of `x`; returns outputs, per-row log-det and the cache.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>, CouplingCache) {
        let cache = self.conditioner(x);
        let t = self.shift.forward(&cache.h2);
        let mut y = x.clone();
        for (j, &col) in self.transform.iter().enumerate() {
            Zip::from(y.column_mut(col))
                .and(x.column(col))
                .and(cache.s.column(j))
                .and(t.column(j))
                .for_each(|y, &x, &s, &t| *y = x * s.exp() + t);
        }
        let logdet = cache.s.sum_axis(Axis(1));
        (y, logdet, cache)
    }

    pub fn inverse(&self, y: &Array2<f64>) -> Array2<f64> {
        // the copied half of y equals that of x
        let (s, t) = self.scale_shift(y);
        let mut x = y.clone();
        for (j, &col) in self.transform.iter().enumerate() {
            Zip::from(x.column_mut(col))
                .and(y.column(col))
                .and(s.column(j))
                .and(t.column(j))
                .for_each(|x, &y, &s, &t| *x = (y - t) * (-s).exp());
        }
        x
    }

    /// Back-propagates `grad_y` (per output) and `grad_logdet` (per row).
    pub fn backward(
        &self,
        cache: &CouplingCache,
        grad_y: &Array2<f64>,
        grad_logdet: &Array1<f64>,
    ) -> (Array2<f64>, CouplingGrads) {
        let rows = grad_y.nrows();
        let width = self.transform.len();
        let mut grad_x = grad_y.clone();
        let mut grad_s = Array2::zeros((rows, width));
        let mut grad_t = Array2::zeros((rows, width));
        for (j, &col) in self.transform.iter().enumerate() {
            for r in 0..rows {
                let gy = grad_y[[r, col]];
                let es = cache.s[[r, j]].exp();
                grad_x[[r, col]] = gy * es;
                grad_s[[r, j]] = gy * cache.input[[r, col]] * es + grad_logdet[r];
                grad_t[[r, j]] = gy;
            }
        }
        // through tanh
        let grad_us = &grad_s * &cache.s.mapv(|s| 1.0 - s * s);
        let (gh2_s, scale) = self.scale.backward(&cache.h2, &grad_us);
        let (gh2_t, shift) = self.shift.backward(&cache.h2, &grad_t);
        let ga2 = (gh2_s + gh2_t) * &cache.a2.mapv(elu_grad);
        let (gh1, trunk1) = self.trunk[1].backward(&cache.h1, &ga2);
        let ga1 = gh1 * &cache.a1.mapv(elu_grad);
        let (gh0, trunk0) = self.trunk[0].backward(&cache.h0, &ga1);
        for (j, &col) in self.pass.iter().enumerate() {
            let mut c = grad_x.column_mut(col);
            c += &gh0.column(j);
        }
        (
            grad_x,
            CouplingGrads {
                trunk: [trunk0, trunk1],
                scale,
                shift,
            },
        )
    }
}

impl CouplingCache {
    pub(crate) fn rows(&self) -> usize {
        self.h0.nrows()
    }
}

impl CouplingGrads {
    pub(crate) fn write(&self, out: &mut Vec<f64>) {
        self.trunk[0].write(out);
        self.trunk[1].write(out);
        self.scale.write(out);
        self.shift.write(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randomize_heads(layer: &mut CouplingLayer, rng: &mut ChaCha8Rng) {
        let hidden = layer.hidden();
        let width = layer.transform.len();
        layer.scale = Dense::random(hidden, width, false, rng);
        layer.shift = Dense::random(hidden, width, false, rng);
    }

    #[test]
    fn zero_heads_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = CouplingLayer::new(5, 8, true, false, &mut rng);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i as f64) - 0.3 * j as f64);
        let (y, ld, _) = layer.forward(&x);
        assert_eq!(y, x);
        assert!(ld.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masks_partition_and_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let odd = CouplingLayer::new(7, 4, true, false, &mut rng);
        let even = CouplingLayer::new(7, 4, false, false, &mut rng);
        assert_eq!(odd.transform_indices(), &[1, 3, 5]);
        assert_eq!(odd.pass_indices(), &[0, 2, 4, 6]);
        assert_eq!(even.transform_indices(), odd.pass_indices());
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut layer = CouplingLayer::new(6, 16, false, false, &mut rng);
        randomize_heads(&mut layer, &mut rng);
        let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 6 + j) as f64 * 0.9).sin() * 2.0);
        let (y, _, _) = layer.forward(&x);
        let back = layer.inverse(&y);
        assert!((&back - &x).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn logdet_bounded_by_transformed_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut layer = CouplingLayer::new(9, 8, true, false, &mut rng);
        randomize_heads(&mut layer, &mut rng);
        layer.scale.bias.fill(50.0);
        let x = Array2::from_shape_fn((3, 9), |(i, j)| (i + j) as f64);
        let (_, ld, _) = layer.forward(&x);
        assert!(ld.iter().all(|v| v.abs() <= 4.0));
    }

    #[test]
    fn conditioner_ignores_transformed_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer = CouplingLayer::new(6, 8, true, false, &mut rng);
        randomize_heads(&mut layer, &mut rng);
        let x = Array2::from_shape_fn((1, 6), |(_, j)| j as f64 * 0.2);
        let (s0, t0) = layer.scale_shift(&x);
        let mut moved = x.clone();
        for &c in layer.transform_indices() {
            moved[[0, c]] += 3.7;
        }
        let (s1, t1) = layer.scale_shift(&moved);
        assert_eq!(s0, s1);
        assert_eq!(t0, t1);
    }
}
