//! Reference implementations shared by the integration tests. None of them
//! reuse the library's recurrences or closed-form inverses.
#![allow(dead_code)]

use std::f64::consts::PI;

use bruno::process::{ProcessMode, ProcessParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

pub fn covariance(p: &ProcessParams, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { p.v() } else { p.rho() })
}

/// Joint log-density via a Cholesky factorization of the dense covariance.
pub fn dense_log_pdf(p: &ProcessParams, zs: &[f64]) -> f64 {
    let n = zs.len();
    let chol = covariance(p, n).cholesky().expect("positive definite");
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let c = DVector::from_iterator(n, zs.iter().map(|z| z - p.mu()));
    let quad = c.dot(&chol.solve(&c));
    let nf = n as f64;
    match p.mode() {
        ProcessMode::StudentT => {
            let nu = p.nu();
            ln_gamma(0.5 * (nu + nf)) - ln_gamma(0.5 * nu) - 0.5 * nf * ((nu - 2.0) * PI).ln() - 0.5 * log_det
                - 0.5 * (nu + nf) * (1.0 + quad / (nu - 2.0)).ln()
        }
        ProcessMode::Gaussian => -0.5 * nf * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * quad,
    }
}

/// `(dof, mean, variance, beta)` of the next observation from the
/// partitioned covariance, by LU solves.
pub fn dense_conditional(p: &ProcessParams, zs: &[f64]) -> (f64, f64, f64, f64) {
    let n = zs.len();
    let lu = covariance(p, n).lu();
    let k_ba = DVector::from_element(n, p.rho());
    let c = DVector::from_iterator(n, zs.iter().map(|z| z - p.mu()));
    let w = lu.solve(&k_ba).expect("invertible");
    let beta = c.dot(&lu.solve(&c).expect("invertible"));
    let mean = p.mu() + w.dot(&c);
    let unscaled = p.v() - k_ba.dot(&w);
    let nf = n as f64;
    let variance = match p.mode() {
        ProcessMode::StudentT => unscaled * (p.nu() + beta - 2.0) / (p.nu() + nf - 2.0),
        ProcessMode::Gaussian => unscaled,
    };
    (p.nu() + nf, mean, variance, beta)
}

/// CDF of the variance-parameterized t: a standard t with scale
/// `sqrt(variance (dof - 2) / dof)`.
pub fn t_cdf(dof: f64, mean: f64, variance: f64, x: f64) -> f64 {
    let scale = (variance * (dof - 2.0) / dof).sqrt();
    StudentsT::new(mean, scale, dof).expect("valid").cdf(x)
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha` for `n` samples.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn random_params<R: Rng>(rng: &mut R, mode: ProcessMode) -> ProcessParams {
    let v = rng.random_range(0.1..4.0);
    ProcessParams::new(
        rng.random_range(2.2..100.0),
        rng.random_range(-2.0..2.0),
        v,
        v * rng.random_range(0.0..0.95),
        mode,
    )
    .unwrap()
}

/// Draws from the matched exchangeable Gaussian: `θ ~ N(μ, ρ)`, then
/// `z_i ~ N(θ, v − ρ)`.
pub fn exchangeable_gaussian<R: Rng>(rng: &mut R, p: &ProcessParams, n: usize) -> Vec<f64> {
    let theta = p.mu() + p.rho().sqrt() * rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| theta + (p.v() - p.rho()).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Log-absolute-determinant of a numerically differentiated Jacobian.
pub fn numeric_log_det(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[j] += h;
        down[j] -= h;
        let (fu, fd) = (f(&up), f(&down));
        for i in 0..d {
            jac[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}
