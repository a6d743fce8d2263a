//! Quick consistency checks of a build: recurrences against dense
//! references, flow inverses and Jacobians, analytic gradients against
//! central differences, sampler moments and checkpoint round trips.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::{decode, encode, Checkpoint};
use crate::flow::{FlowStack, PreprocessConfig};
use crate::model::{BrunoModel, ModelConfig};
use crate::process::{oracle, sample_student_t, sequence_gradients, ProcessMode, ProcessParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error, or another summary figure.
    pub detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn random_params<R: Rng>(rng: &mut R, mode: ProcessMode) -> ProcessParams {
    let v = rng.random_range(0.2..3.0);
    ProcessParams::new(
        rng.random_range(2.5..50.0),
        rng.random_range(-1.0..1.0),
        v,
        v * rng.random_range(0.0..0.95),
        mode,
    )
    .expect("in range")
}

fn random_sequence<R: Rng>(rng: &mut R, p: &ProcessParams, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| p.mu() + p.v().sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn recurrence_check(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let mode = if case % 4 == 0 { ProcessMode::Gaussian } else { ProcessMode::StudentT };
        let p = random_params(rng, mode);
        let n = rng.random_range(1..=64);
        let zs = random_sequence(rng, &p, n);
        let state = p.condition_on(&zs).expect("finite");
        let m = p.predictive_moments(&state);
        let o = oracle::conditional(&p, &zs).expect("valid");
        worst = worst
            .max(rel(m.mean, o.moments.mean))
            .max(rel(m.variance, o.moments.variance))
            .max(rel(m.dof, o.moments.dof));
        if mode == ProcessMode::StudentT {
            worst = worst.max(rel(state.beta(), o.beta));
        }
    }
    Check {
        name: "recurrence matches dense conditional",
        passed: worst < 1e-9,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn telescoping_check(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let mode = if case % 2 == 0 { ProcessMode::Gaussian } else { ProcessMode::StudentT };
        let p = random_params(rng, mode);
        let n = rng.random_range(1..=32);
        let zs = random_sequence(rng, &p, n);
        let mut state = p.prior_state();
        let mut sum = 0.0;
        for &z in &zs {
            sum += p.predictive_log_density(&state, z).expect("valid");
            state = p.update_state(&state, z).expect("finite");
        }
        worst = worst.max((sum - oracle::mvt_log_pdf(&p, &zs).expect("valid")).abs());
    }
    Check {
        name: "per-step densities sum to the joint",
        passed: worst < 1e-8,
        detail: format!("max abs error {worst:.2e}"),
    }
}

fn random_stack(rng: &mut ChaCha8Rng, dim: usize, depth: usize, hidden: usize, preprocess: PreprocessConfig) -> FlowStack {
    let mut stack = FlowStack::new(dim, depth, hidden, true, preprocess, rng).expect("valid shape");
    let params: Vec<f64> = stack.params().iter().map(|p| p + rng.random_range(-0.2..0.2)).collect();
    stack.set_params(&params).expect("same length");
    stack
}

fn random_inputs(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |_| rng.random_range(0.05..0.95))
}

fn flow_round_trip_check(rng: &mut ChaCha8Rng) -> Check {
    let stack = random_stack(rng, 64, 6, 32, PreprocessConfig::default());
    let x = random_inputs(rng, 8, 64);
    let (z, _) = stack.forward(&x).expect("finite");
    let back = stack.inverse(&z).expect("finite");
    let err = (&back - &x).iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Check {
        name: "flow inverse undoes forward",
        passed: err < 1e-6,
        detail: format!("max abs error {err:.2e}"),
    }
}

fn flow_logdet_check(rng: &mut ChaCha8Rng) -> Check {
    let dim = 6;
    let stack = random_stack(rng, dim, 4, 8, PreprocessConfig::default());
    let x = random_inputs(rng, 1, dim);
    let (_, logdet) = stack.forward(&x).expect("finite");
    let h = 1e-6;
    let jac = nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[[0, j]] += h;
        b[[0, j]] -= h;
        let (za, _) = stack.forward(&a).expect("finite");
        let (zb, _) = stack.forward(&b).expect("finite");
        (za[[0, i]] - zb[[0, i]]) / (2.0 * h)
    });
    let numeric = jac.determinant().abs().ln();
    let err = (numeric - logdet[0]).abs();
    Check {
        name: "flow log-det matches numerical Jacobian",
        passed: err < 1e-4,
        detail: format!("abs error {err:.2e}"),
    }
}

fn flow_gradient_check(rng: &mut ChaCha8Rng) -> Check {
    let dim = 8;
    let mut stack = random_stack(rng, dim, 2, 6, PreprocessConfig::default());
    let x = random_inputs(rng, 3, dim);
    let a = Array2::from_shape_fn((3, dim), |_| rng.random_range(-1.0..1.0));
    let b = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
    let objective = |s: &FlowStack| {
        let (z, ld) = s.forward(&x).expect("finite");
        (&z * &a).sum() + (&ld * &b).sum()
    };
    let (_, _, cache) = stack.forward_cached(&x).expect("finite");
    let analytic = stack.backward(&cache, &a, &b).expect("matching cache");
    let base = stack.params();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += 1e-4;
        stack.set_params(&p).expect("same length");
        let up = objective(&stack);
        p[i] -= 2e-4;
        stack.set_params(&p).expect("same length");
        let down = objective(&stack);
        let numeric = (up - down) / 2e-4;
        worst = worst.max((numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-3));
    }
    Check {
        name: "flow gradients match central differences",
        passed: worst < 1e-3,
        detail: format!("max relative error {worst:.2e} over {} parameters", base.len()),
    }
}

fn process_gradient_check(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for mode in [ProcessMode::StudentT, ProcessMode::Gaussian] {
        let p = random_params(rng, mode);
        let zs = random_sequence(rng, &p, 10);
        let w: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
        let g = sequence_gradients(&p, &zs, &w).expect("valid");
        let f = |nu: f64, v: f64, rho: f64, zs: &[f64]| {
            let q = ProcessParams::new(nu, p.mu(), v, rho, mode).expect("valid");
            sequence_gradients(&q, zs, &w).expect("valid").objective
        };
        let h = 1e-6;
        let mut check = |analytic: f64, numeric: f64| {
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3));
        };
        if mode == ProcessMode::StudentT {
            check(g.dnu, (f(p.nu() + h, p.v(), p.rho(), &zs) - f(p.nu() - h, p.v(), p.rho(), &zs)) / (2.0 * h));
        }
        check(g.dv, (f(p.nu(), p.v() + h, p.rho(), &zs) - f(p.nu(), p.v() - h, p.rho(), &zs)) / (2.0 * h));
        check(g.drho, (f(p.nu(), p.v(), p.rho() + h, &zs) - f(p.nu(), p.v(), p.rho() - h, &zs)) / (2.0 * h));
        for i in 0..zs.len() {
            let mut up = zs.clone();
            let mut down = zs.clone();
            up[i] += h;
            down[i] -= h;
            check(g.dz[i], (f(p.nu(), p.v(), p.rho(), &up) - f(p.nu(), p.v(), p.rho(), &down)) / (2.0 * h));
        }
    }
    Check {
        name: "process gradients match central differences",
        passed: worst < 1e-5,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn sampler_check(rng: &mut ChaCha8Rng) -> Check {
    let count = 200_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..count {
        let x = sample_student_t(rng, 8.0, 0.0, 1.0);
        sum += x;
        sq += x * x;
    }
    let mean = sum / count as f64;
    let var = sq / count as f64 - mean * mean;
    Check {
        name: "Student-t sampler moments",
        passed: mean.abs() < 0.01 && (var - 1.0).abs() < 0.03,
        detail: format!("mean {mean:.4}, variance {var:.4}"),
    }
}

fn checkpoint_check(rng: &mut ChaCha8Rng) -> Check {
    let config = ModelConfig {
        dim: 8,
        depth: 2,
        hidden: 6,
        ..ModelConfig::default()
    };
    let model = BrunoModel::new(config, rng).expect("valid config");
    let x = random_inputs(rng, 4, 8);
    let before = model.sequence_log_likelihood(&x).expect("finite").total;
    let passed = match decode(&encode(&Checkpoint::from_model(model))) {
        Ok(c) => c
            .model
            .sequence_log_likelihood(&x)
            .is_ok_and(|l| l.total.to_bits() == before.to_bits()),
        Err(_) => false,
    };
    Check {
        name: "checkpoint round trip is bitwise",
        passed,
        detail: format!("log-likelihood {before:.6}"),
    }
}

pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        recurrence_check(&mut rng),
        telescoping_check(&mut rng),
        flow_round_trip_check(&mut rng),
        flow_logdet_check(&mut rng),
        flow_gradient_check(&mut rng),
        process_gradient_check(&mut rng),
        sampler_check(&mut rng),
        checkpoint_check(&mut rng),
    ]
}
