use crate::process::{ProcessError, ProcessMode, ProcessParams};

/// Floor added to the decoded prior variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const NU_RANGE: (f64, f64) = (-20.0, 1e12);
const V_RANGE: (f64, f64) = (-30.0, 50.0);
/// Above this `sigmoid` rounds to 1 and `rho` would reach `v`.
const RHO_MAX: f64 = 25.0;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unconstrained per-dimension process parameters:
/// `nu = 2 + softplus(nu_raw)`, `v = softplus(v_raw) + 1e-6`,
/// `rho = v * sigmoid(rho_raw)`. The prior mean is fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RawProcess {
    pub nu: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
}

impl RawProcess {
    /// Same constrained values in every dimension. `rho = 0` encodes to
    /// `-inf`, which decodes back to exactly zero.
    pub fn constant(dim: usize, nu: f64, v: f64, rho: f64) -> Result<Self, ProcessError> {
        ProcessParams::new(nu, 0.0, v, rho, ProcessMode::StudentT)?;
        if v <= VARIANCE_FLOOR {
            return Err(ProcessError::ConstraintViolation(format!("v must exceed {VARIANCE_FLOOR}, got {v}")));
        }
        let ratio = rho / v;
        let mut raw = Self {
            nu: vec![inverse_softplus(nu - 2.0); dim],
            v: vec![inverse_softplus(v - VARIANCE_FLOOR); dim],
            rho: vec![(ratio / (1.0 - ratio)).ln(); dim],
        };
        raw.clamp();
        Ok(raw)
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn decode(&self, d: usize, mode: ProcessMode) -> ProcessParams {
        let nu = 2.0 + softplus(self.nu[d]);
        let v = softplus(self.v[d]) + VARIANCE_FLOOR;
        let rho = v * sigmoid(self.rho[d]);
        ProcessParams::new(nu, 0.0, v, rho, mode).expect("decoded parameters satisfy their constraints")
    }

    /// Projects raw values back into the range where decoding is exact.
    pub fn clamp(&mut self) {
        for x in &mut self.nu {
            *x = x.clamp(NU_RANGE.0, NU_RANGE.1);
        }
        for x in &mut self.v {
            *x = x.clamp(V_RANGE.0, V_RANGE.1);
        }
        for x in &mut self.rho {
            *x = x.min(RHO_MAX);
        }
    }

    /// Flattened as `[nu; D] ++ [v; D] ++ [rho; D]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.dim());
        out.extend(&self.nu);
        out.extend(&self.v);
        out.extend(&self.rho);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Option<Self> {
        if !flat.len().is_multiple_of(3) {
            return None;
        }
        let d = flat.len() / 3;
        Some(Self {
            nu: flat[..d].to_vec(),
            v: flat[d..2 * d].to_vec(),
            rho: flat[2 * d..].to_vec(),
        })
    }

    /// Chain rule from constrained gradients `(dnu, dv, drho)` of dimension
    /// `d` to raw gradients.
    pub fn raw_gradient(&self, d: usize, dnu: f64, dv: f64, drho: f64) -> (f64, f64, f64) {
        let s_rho = sigmoid(self.rho[d]);
        let v = softplus(self.v[d]) + VARIANCE_FLOOR;
        (
            dnu * sigmoid(self.nu[d]),
            (dv + drho * s_rho) * sigmoid(self.v[d]),
            drho * v * s_rho * (1.0 - s_rho),
        )
    }
}
