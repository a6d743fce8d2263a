use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::ProcessError;

/// Log-density of the variance-parameterized univariate Student-t.
///
/// `variance` is the actual variance of the distribution, so the usual
/// squared scale is `variance * (dof - 2) / dof`.
pub fn univariate_t_log_pdf(dof: f64, mean: f64, variance: f64, z: f64) -> Result<f64, ProcessError> {
    if !(dof > 2.0) || !(variance > 0.0) {
        return Err(ProcessError::DomainError(format!(
            "Student-t needs dof > 2 and variance > 0, got dof={dof}, variance={variance}"
        )));
    }
    let scale = (dof - 2.0) * variance;
    let e = z - mean;
    Ok(ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof)
        - 0.5 * (PI * scale).ln()
        - 0.5 * (dof + 1.0) * (e * e / scale).ln_1p())
}

pub fn gaussian_log_pdf(mean: f64, variance: f64, z: f64) -> Result<f64, ProcessError> {
    if !(variance > 0.0) {
        return Err(ProcessError::DomainError(format!(
            "Gaussian needs variance > 0, got {variance}"
        )));
    }
    let e = z - mean;
    Ok(-0.5 * (2.0 * PI * variance).ln() - 0.5 * e * e / variance)
}
