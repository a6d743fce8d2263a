use crate::model::BrunoModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentRow {
    pub dim: usize,
    pub correlation: f64,
    pub nu: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentReport {
    pub rows: Vec<LatentRow>,
    /// `(eps, number of dimensions with rho/v > eps)` on a log grid.
    pub exceedance: Vec<(f64, usize)>,
}

/// Thresholds `10^0, 10^-0.5, ..., 10^-6`.
pub fn epsilon_grid() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(-0.5 * i as f64)).collect()
}

pub fn latent_analysis(model: &BrunoModel) -> LatentReport {
    let rows: Vec<LatentRow> = model
        .processes()
        .iter()
        .enumerate()
        .map(|(dim, p)| LatentRow {
            dim,
            correlation: p.correlation(),
            nu: p.nu(),
            v: p.v(),
        })
        .collect();
    let exceedance = epsilon_grid()
        .into_iter()
        .map(|eps| (eps, rows.iter().filter(|r| r.correlation > eps).count()))
        .collect();
    LatentReport { rows, exceedance }
}

impl LatentReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("dim,rho_over_v,nu,v\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.dim, r.correlation, r.nu, r.v));
        }
        out
    }

    pub fn exceedance_csv(&self) -> String {
        let mut out = String::from("eps,count\n");
        for (eps, count) in &self.exceedance {
            out.push_str(&format!("{eps},{count}\n"));
        }
        out
    }

    /// Dimension with the largest correlation.
    pub fn most_correlated(&self) -> Option<usize> {
        self.rows
            .iter()
            .max_by(|a, b| a.correlation.total_cmp(&b.correlation))
            .map(|r| r.dim)
    }
}
