//! Reference evaluations of exchangeable-process densities.
//!
//! These do not use the recurrences and exist to cross-check them:
//! [`mvt_log_pdf`] evaluates the joint density from the closed-form inverse
//! and determinant of the exchangeable covariance, and [`conditional`]
//! builds the covariance blocks explicitly and inverts them densely.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::{PredictiveMoments, ProcessError, ProcessMode, ProcessParams};

/// Joint log-density of `zs` under the n-dimensional exchangeable process.
pub fn mvt_log_pdf(params: &ProcessParams, zs: &[f64]) -> Result<f64, ProcessError> {
    if zs.is_empty() {
        return Err(ProcessError::DomainError("empty sequence".into()));
    }
    let n = zs.len();
    let nf = n as f64;
    let (v, rho, mu) = (params.v(), params.rho(), params.mu());
    let gap = v - rho;
    if !(gap > 0.0) {
        return Err(ProcessError::DomainError(format!("singular covariance: v={v}, rho={rho}")));
    }
    let a = params.inverse_diagonal(n);
    let b = params.inverse_off_diagonal(n);
    let (mut sq, mut sum) = (0.0, 0.0);
    for &z in zs {
        let c = z - mu;
        sq += c * c;
        sum += c;
    }
    let quad = (a - b) * sq + b * sum * sum;
    let log_det = (nf - 1.0) * gap.ln() + (v + (nf - 1.0) * rho).ln();
    match params.mode() {
        ProcessMode::StudentT => {
            let nu = params.nu();
            Ok(ln_gamma(0.5 * (nu + nf)) - ln_gamma(0.5 * nu)
                - 0.5 * nf * ((nu - 2.0) * PI).ln()
                - 0.5 * log_det
                - 0.5 * (nu + nf) * (quad / (nu - 2.0)).ln_1p())
        }
        ProcessMode::Gaussian => Ok(-0.5 * nf * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * quad),
    }
}

/// Predictive quantities for the next observation computed from the
/// partitioned covariance with a dense inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalOracle {
    pub moments: PredictiveMoments,
    pub beta: f64,
    pub unscaled_variance: f64,
}

pub fn conditional(params: &ProcessParams, observed: &[f64]) -> Result<ConditionalOracle, ProcessError> {
    let n = observed.len();
    if n == 0 {
        return Err(ProcessError::DomainError("empty conditioning set".into()));
    }
    let (v, rho, mu) = (params.v(), params.rho(), params.mu());
    let k_aa = DMatrix::from_fn(n, n, |i, j| if i == j { v } else { rho });
    let k_ba = DVector::from_element(n, rho);
    let inv = k_aa
        .try_inverse()
        .ok_or_else(|| ProcessError::DomainError("singular covariance".into()))?;
    let centered = DVector::from_iterator(n, observed.iter().map(|z| z - mu));
    let weights = &inv * &k_ba;
    let mean = weights.dot(&centered) + mu;
    let beta = centered.dot(&(&inv * &centered));
    let unscaled_variance = v - k_ba.dot(&weights);
    let nf = n as f64;
    let variance = match params.mode() {
        ProcessMode::StudentT => (params.nu() + beta - 2.0) / (params.nu() + nf - 2.0) * unscaled_variance,
        ProcessMode::Gaussian => unscaled_variance,
    };
    Ok(ConditionalOracle {
        moments: PredictiveMoments {
            dof: params.nu() + nf,
            mean,
            variance,
        },
        beta,
        unscaled_variance,
    })
}
