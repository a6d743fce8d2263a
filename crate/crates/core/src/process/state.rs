use super::density::{gaussian_log_pdf, univariate_t_log_pdf};
use super::{ProcessError, ProcessMode, ProcessParams};

/// Running sufficient statistics of one process after `n` observations.
///
/// `var` is the unscaled predictive variance; the Student-t predictive scales
/// it by `(nu + beta - 2) / (nu + n - 2)`. `sum` is the centered running sum
/// `Σ (z_i - mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveState {
    n: usize,
    mean: f64,
    var: f64,
    beta: f64,
    sum: f64,
}

impl PredictiveState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn unscaled_variance(&self) -> f64 {
        self.var
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn centered_sum(&self) -> f64 {
        self.sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMoments {
    pub dof: f64,
    pub mean: f64,
    pub variance: f64,
}

impl ProcessParams {
    pub fn prior_state(&self) -> PredictiveState {
        PredictiveState {
            n: 0,
            mean: self.mu(),
            var: self.v(),
            beta: 0.0,
            sum: 0.0,
        }
    }

    /// Conditions the predictive distribution on one more observation.
    ///
    /// The Hotelling statistic is carried in both modes; Gaussian moments
    /// ignore it.
    pub fn update_state(&self, state: &PredictiveState, z: f64) -> Result<PredictiveState, ProcessError> {
        if !z.is_finite() {
            return Err(ProcessError::NonFinite(z));
        }
        let count = state.n + 1;
        let d = self.shrinkage(count);
        let centered = z - self.mu();
        let sum = state.sum + centered;
        let beta = state.beta
            + centered * centered / self.gap()
            + self.inverse_off_diagonal(count) * sum * sum
            - self.inverse_off_diagonal(count - 1) * state.sum * state.sum;
        Ok(PredictiveState {
            n: count,
            mean: (1.0 - d) * state.mean + d * z,
            var: (1.0 - d) * state.var + d * (self.v() - self.rho()),
            beta: beta.max(0.0),
            sum,
        })
    }

    /// Folds a whole sequence into the prior state.
    pub fn condition_on(&self, zs: &[f64]) -> Result<PredictiveState, ProcessError> {
        zs.iter()
            .try_fold(self.prior_state(), |state, &z| self.update_state(&state, z))
    }

    pub fn predictive_moments(&self, state: &PredictiveState) -> PredictiveMoments {
        let n = state.n as f64;
        let variance = match self.mode() {
            ProcessMode::StudentT => {
                state.var * (self.nu() + state.beta - 2.0) / (self.nu() + n - 2.0)
            }
            ProcessMode::Gaussian => state.var,
        };
        PredictiveMoments {
            dof: self.nu() + n,
            mean: state.mean,
            variance,
        }
    }

    /// Log-density of `z` under the one-step predictive distribution.
    pub fn predictive_log_density(&self, state: &PredictiveState, z: f64) -> Result<f64, ProcessError> {
        let m = self.predictive_moments(state);
        match self.mode() {
            ProcessMode::StudentT => univariate_t_log_pdf(m.dof, m.mean, m.variance, z),
            ProcessMode::Gaussian => gaussian_log_pdf(m.mean, m.variance, z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(nu: f64, mu: f64, v: f64, rho: f64) -> ProcessParams {
        ProcessParams::new(nu, mu, v, rho, ProcessMode::StudentT).unwrap()
    }

    #[test]
    fn prior_state_matches_params() {
        let s = tp(1000.0, 0.0, 1.0, 0.1).prior_state();
        assert_eq!((s.n(), s.mean(), s.unscaled_variance(), s.beta(), s.centered_sum()), (0, 0.0, 1.0, 0.0, 0.0));
        let p = tp(3.0, 2.0, 4.0, 1.0);
        let s = p.prior_state();
        assert_eq!((s.n(), s.mean(), s.unscaled_variance(), s.beta(), s.centered_sum()), (0, 2.0, 4.0, 0.0, 0.0));
        let m = p.predictive_moments(&s);
        assert_eq!((m.dof, m.mean, m.variance), (3.0, 2.0, 4.0));
    }

    #[test]
    fn single_update_hand_values() {
        // K_ba K_aa^-1 (z - mu) = 0.5 * 2, v~ = 1 - 0.25, beta = z^2 / v
        let p = tp(10.0, 0.0, 1.0, 0.5);
        let s = p.update_state(&p.prior_state(), 2.0).unwrap();
        assert_eq!(s.n(), 1);
        assert!((s.mean() - 1.0).abs() < 1e-15);
        assert!((s.unscaled_variance() - 0.75).abs() < 1e-15);
        assert!((s.beta() - 4.0).abs() < 1e-14);
        assert_eq!(s.centered_sum(), 2.0);

        let m = p.predictive_moments(&s);
        assert_eq!(m.dof, 11.0);
        assert!((m.mean - 1.0).abs() < 1e-15);
        // 0.75 * (10 + 4 - 2) / (10 + 1 - 2)
        assert!((m.variance - 1.0).abs() < 1e-14);

        let g = ProcessParams::new(10.0, 0.0, 1.0, 0.5, ProcessMode::Gaussian).unwrap();
        let sg = g.update_state(&g.prior_state(), 2.0).unwrap();
        assert!((g.predictive_moments(&sg).variance - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rho_zero_leaves_location_and_variance() {
        let p = tp(7.0, 0.3, 2.0, 0.0);
        let mut s = p.prior_state();
        for z in [1.0, -4.0, 0.25, 9.0] {
            s = p.update_state(&s, z).unwrap();
            assert_eq!(s.mean(), 0.3);
            assert_eq!(s.unscaled_variance(), 2.0);
        }
    }

    #[test]
    fn rejects_non_finite_observation() {
        let p = tp(7.0, 0.0, 1.0, 0.2);
        let s = p.prior_state();
        assert!(matches!(p.update_state(&s, f64::NAN), Err(ProcessError::NonFinite(_))));
        assert!(matches!(p.update_state(&s, f64::INFINITY), Err(ProcessError::NonFinite(_))));
    }

    #[test]
    fn unscaled_variance_never_increases() {
        let p = tp(5.0, 0.0, 1.5, 0.9);
        let mut s = p.prior_state();
        for i in 0..200 {
            let next = p.update_state(&s, (i as f64 * 0.37).sin() * 3.0).unwrap();
            assert!(next.unscaled_variance() <= s.unscaled_variance());
            assert!(next.unscaled_variance() > 0.0);
            s = next;
        }
    }

    #[test]
    fn centered_observation_shrinks_scale_factor() {
        let p = tp(6.0, 1.0, 1.0, 0.3);
        let s = p.update_state(&p.prior_state(), 1.0).unwrap();
        assert_eq!(s.beta(), 0.0);
        let m = p.predictive_moments(&s);
        let factor = m.variance / s.unscaled_variance();
        assert!((factor - 4.0 / 5.0).abs() < 1e-15);
        assert!(factor < 1.0);
    }
}
