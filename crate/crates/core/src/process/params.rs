use super::ProcessError;

/// Smallest value `v - rho` is allowed to take inside the inverse-covariance
/// coefficients.
pub(crate) const MIN_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcessMode {
    StudentT,
    Gaussian,
}

impl ProcessMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessMode::StudentT => "studentt",
            ProcessMode::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for ProcessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "studentt" | "student-t" | "tp" => Ok(ProcessMode::StudentT),
            "gaussian" | "gp" => Ok(ProcessMode::Gaussian),
            other => Err(format!("unknown process mode '{other}'")),
        }
    }
}

/// Parameters of one exchangeable process: degrees of freedom `nu`, prior
/// mean `mu`, prior variance `v` and the shared covariance `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessParams {
    nu: f64,
    mu: f64,
    v: f64,
    rho: f64,
    mode: ProcessMode,
}

impl ProcessParams {
    pub fn new(nu: f64, mu: f64, v: f64, rho: f64, mode: ProcessMode) -> Result<Self, ProcessError> {
        if !(nu.is_finite() && mu.is_finite() && v.is_finite() && rho.is_finite()) {
            return Err(ProcessError::ConstraintViolation(format!(
                "non-finite parameters (nu={nu}, mu={mu}, v={v}, rho={rho})"
            )));
        }
        if mode == ProcessMode::StudentT && nu <= 2.0 {
            return Err(ProcessError::ConstraintViolation(format!(
                "degrees of freedom must exceed 2, got {nu}"
            )));
        }
        if v <= 0.0 {
            return Err(ProcessError::ConstraintViolation(format!(
                "variance must be positive, got {v}"
            )));
        }
        if rho < 0.0 || rho >= v {
            return Err(ProcessError::ConstraintViolation(format!(
                "covariance must satisfy 0 <= rho < v, got rho={rho}, v={v}"
            )));
        }
        Ok(Self { nu, mu, v, rho, mode })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mode(&self) -> ProcessMode {
        self.mode
    }

    /// Correlation `rho / v` between any two observations.
    pub fn correlation(&self) -> f64 {
        self.rho / self.v
    }

    pub(crate) fn gap(&self) -> f64 {
        (self.v - self.rho).max(MIN_GAP)
    }

    /// Shrinkage weight `d` applied when the `count`-th observation arrives.
    pub(crate) fn shrinkage(&self, count: usize) -> f64 {
        self.rho / (self.v + self.rho * (count as f64 - 1.0))
    }

    /// Diagonal entry of the inverse covariance of `count` observations.
    pub fn inverse_diagonal(&self, count: usize) -> f64 {
        let n = count as f64;
        (self.v + self.rho * (n - 2.0)) / (self.gap() * (self.v + self.rho * (n - 1.0)))
    }

    /// Off-diagonal entry of the inverse covariance of `count` observations.
    pub fn inverse_off_diagonal(&self, count: usize) -> f64 {
        let n = count as f64;
        -self.rho / (self.gap() * (self.v + self.rho * (n - 1.0)))
    }
}
