use statrs::function::gamma::digamma;

use super::{PredictiveState, ProcessError, ProcessMode, ProcessParams};

/// Value and reverse-mode gradients of a weighted sum of one-step predictive
/// log-densities `Σ_n w_n log p(z_n | z_{<n})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGradients {
    pub log_densities: Vec<f64>,
    pub objective: f64,
    pub dz: Vec<f64>,
    pub dnu: f64,
    pub dv: f64,
    pub drho: f64,
}

struct StepPartials {
    z: f64,
    mean: f64,
    var: f64,
    beta: f64,
    dof: f64,
}

fn step_partials(params: &ProcessParams, state: &PredictiveState, z: f64) -> StepPartials {
    let m = params.predictive_moments(state);
    let e = z - m.mean;
    match params.mode() {
        ProcessMode::Gaussian => {
            let dvar = -0.5 / m.variance + 0.5 * e * e / (m.variance * m.variance);
            StepPartials {
                z: -e / m.variance,
                mean: e / m.variance,
                var: dvar,
                beta: 0.0,
                dof: 0.0,
            }
        }
        ProcessMode::StudentT => {
            let nu = params.nu();
            let n = state.n() as f64;
            let dof = m.dof;
            let w = (dof - 2.0) * m.variance;
            let q = e * e / w;
            let dz = -(dof + 1.0) * e / (w + e * e);
            let d_variance = 0.5 / m.variance * ((dof + 1.0) * q / (1.0 + q) - 1.0);
            let d_dof = 0.5 * digamma(0.5 * (dof + 1.0)) - 0.5 * digamma(0.5 * dof)
                - 0.5 / (dof - 2.0)
                - 0.5 * q.ln_1p()
                + 0.5 * (dof + 1.0) * q / ((dof - 2.0) * (1.0 + q));
            let denom = nu + n - 2.0;
            let factor = (nu + state.beta() - 2.0) / denom;
            let unscaled = state.unscaled_variance();
            StepPartials {
                z: dz,
                mean: -dz,
                var: d_variance * factor,
                beta: d_variance * unscaled / denom,
                dof: d_dof + d_variance * unscaled * (n - state.beta()) / (denom * denom),
            }
        }
    }
}

/// Partial derivatives of the inverse off-diagonal coefficient for `count`
/// observations with respect to `(v, rho)`.
fn off_diagonal_partials(v: f64, rho: f64, gap: f64, count: f64) -> (f64, f64) {
    let e = v + rho * (count - 1.0);
    let p = gap * e;
    let dp_dv = e + gap;
    let dp_drho = -e + gap * (count - 1.0);
    (rho * dp_dv / (p * p), -1.0 / p + rho * dp_drho / (p * p))
}

/// Runs the recurrence forward over `zs`, then back-propagates the weighted
/// objective through every predictive density and every state update.
///
/// `weights[n]` multiplies the log-density of `zs[n]` given `zs[..n]`.
pub fn sequence_gradients(
    params: &ProcessParams,
    zs: &[f64],
    weights: &[f64],
) -> Result<SequenceGradients, ProcessError> {
    assert_eq!(zs.len(), weights.len(), "one weight per observation");
    let len = zs.len();
    let mut states = Vec::with_capacity(len + 1);
    let mut log_densities = Vec::with_capacity(len);
    let mut state = params.prior_state();
    for &z in zs {
        log_densities.push(params.predictive_log_density(&state, z)?);
        states.push(state);
        state = params.update_state(&state, z)?;
    }
    let objective = log_densities.iter().zip(weights).map(|(l, w)| l * w).sum();

    let (v, rho, mu) = (params.v(), params.rho(), params.mu());
    let gap = params.gap();
    let mut dz = vec![0.0; len];
    let (mut dnu, mut dv, mut drho) = (0.0, 0.0, 0.0);
    // adjoints of (mean, unscaled variance, beta, centered sum) of the state after step n
    let (mut g_mean, mut g_var, mut g_beta, mut g_sum) = (0.0, 0.0, 0.0, 0.0);

    for n in (0..len).rev() {
        let prev = &states[n];
        let z = zs[n];
        let count = (n + 1) as f64;
        let denom = v + rho * n as f64;
        let d = rho / denom;
        let centered = z - mu;
        let sum_new = prev.centered_sum() + centered;
        let sum_old = prev.centered_sum();

        // mean' = (1 - d) mean + d z
        let mut g_d = g_mean * (z - prev.mean());
        dz[n] += g_mean * d;
        let mut g_mean_prev = g_mean * (1.0 - d);

        // var' = (1 - d) var + d (v - rho)
        g_d += g_var * (v - rho - prev.unscaled_variance());
        dv += g_var * d;
        drho -= g_var * d;
        let mut g_var_prev = g_var * (1.0 - d);

        // beta' = beta + c^2/gap + B(count) s'^2 - B(count - 1) s^2
        let b_new = params.inverse_off_diagonal(n + 1);
        let b_old = params.inverse_off_diagonal(n);
        let mut g_beta_prev = g_beta;
        dz[n] += g_beta * 2.0 * centered / gap;
        let g_sum_new = g_sum + g_beta * 2.0 * b_new * sum_new;
        let mut g_sum_prev = g_sum_new - g_beta * 2.0 * b_old * sum_old;
        dz[n] += g_sum_new;
        let (bn_dv, bn_drho) = off_diagonal_partials(v, rho, gap, count);
        let (bo_dv, bo_drho) = off_diagonal_partials(v, rho, gap, count - 1.0);
        let c2 = centered * centered / (gap * gap);
        dv += g_beta * (-c2 + sum_new * sum_new * bn_dv - sum_old * sum_old * bo_dv);
        drho += g_beta * (c2 + sum_new * sum_new * bn_drho - sum_old * sum_old * bo_drho);

        // d = rho / (v + rho n)
        dv += g_d * (-rho / (denom * denom));
        drho += g_d * (v / (denom * denom));

        let w = weights[n];
        if w != 0.0 {
            let p = step_partials(params, prev, z);
            dz[n] += w * p.z;
            g_mean_prev += w * p.mean;
            g_var_prev += w * p.var;
            g_beta_prev += w * p.beta;
            dnu += w * p.dof;
        }
        if params.mode() == ProcessMode::Gaussian {
            g_beta_prev = 0.0;
            g_sum_prev = 0.0;
        }
        g_mean = g_mean_prev;
        g_var = g_var_prev;
        g_beta = g_beta_prev;
        g_sum = g_sum_prev;
    }
    // the prior state has var = v; its mean is the fixed mu
    dv += g_var;

    Ok(SequenceGradients {
        log_densities,
        objective,
        dz,
        dnu,
        dv,
        drho,
    })
}
