use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{PredictiveState, ProcessMode, ProcessParams};

/// Polar draw from a variance-parameterized Student-t.
///
/// Two uniforms give a point uniform in the unit disk: `r = max(a, b)` is
/// its radius and `2π·min(a, b)/r` its angle. The projected t-variate is
/// `r·cos(angle)·sqrt((dof/r²)(r^(-4/dof) - 1))`.
pub fn sample_student_t<R: Rng + ?Sized>(rng: &mut R, dof: f64, mean: f64, variance: f64) -> f64 {
    let (c, r) = loop {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let r = a.max(b);
        if r > 0.0 {
            break (a.min(b), r);
        }
    };
    let angle = 2.0 * PI * c / r;
    // r^(-4/dof) - 1 without cancellation at large dof
    let tail = ((-4.0 / dof) * r.ln()).exp_m1();
    let t = angle.cos() * (dof * tail).sqrt();
    let sigma = (variance * (dof - 2.0) / dof).sqrt();
    mean + sigma * t
}

impl ProcessParams {
    pub fn sample_predictive<R: Rng + ?Sized>(&self, state: &PredictiveState, rng: &mut R) -> f64 {
        let m = self.predictive_moments(state);
        match self.mode() {
            ProcessMode::StudentT => sample_student_t(rng, m.dof, m.mean, m.variance),
            ProcessMode::Gaussian => {
                let e: f64 = rng.sample(StandardNormal);
                m.mean + m.variance.sqrt() * e
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_under_seed() {
        let p = ProcessParams::new(5.0, 0.0, 1.0, 0.2, ProcessMode::StudentT).unwrap();
        let s = p.update_state(&p.prior_state(), 0.7).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| p.sample_predictive(&s, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn moments_at_high_dof() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_student_t(&mut rng, 100.0, 0.0, 1.0);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn gaussian_mode_moments() {
        let p = ProcessParams::new(5.0, 1.5, 2.0, 0.0, ProcessMode::Gaussian).unwrap();
        let s = p.prior_state();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| p.sample_predictive(&s, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 0.02);
        assert!((var - 2.0).abs() < 0.04);
    }
}
