use ndarray::{s, Array2};

use crate::model::{BrunoModel, ModelError};

/// Per-item `log p(x_n | x_{<n}) − log p(x_n)` over a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub scores: Vec<f64>,
    pub threshold: Option<f64>,
    /// `true` where the score falls below the threshold.
    pub flags: Vec<bool>,
}

impl ScoreTrace {
    pub fn new(scores: Vec<f64>) -> Self {
        let flags = vec![false; scores.len()];
        Self {
            scores,
            threshold: None,
            flags,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.flags = self.scores.iter().map(|&s| s < threshold).collect();
        self.threshold = Some(threshold);
        self
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Position of the lowest score among items `from..`.
    pub fn argmin_from(&self, from: usize) -> Option<usize> {
        (from..self.scores.len()).min_by(|&a, &b| self.scores[a].total_cmp(&self.scores[b]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,score,flag\n");
        for (i, (s, f)) in self.scores.iter().zip(&self.flags).enumerate() {
            out.push_str(&format!("{i},{s},{}\n", u8::from(*f)));
        }
        out
    }
}

/// Scores each item against the items before it, then adds it to the
/// conditioning set. The flow Jacobian cancels, so only latents are used.
pub fn anomaly_score(model: &BrunoModel, stream: &Array2<f64>) -> Result<ScoreTrace, ModelError> {
    let (z, _) = model.latents(stream)?;
    let mut scores = vec![0.0; stream.nrows()];
    for (d, p) in model.processes().iter().enumerate() {
        let prior = p.prior_state();
        let mut state = prior;
        for (n, &zn) in z.column(d).iter().enumerate() {
            scores[n] += p.predictive_log_density(&state, zn)? - p.predictive_log_density(&prior, zn)?;
            state = p.update_state(&state, zn)?;
        }
    }
    Ok(ScoreTrace::new(scores))
}

/// The same score evaluated in input space with explicit Jacobian terms on
/// both densities.
pub fn anomaly_score_explicit(model: &BrunoModel, stream: &Array2<f64>) -> Result<ScoreTrace, ModelError> {
    let conditional = model.sequence_log_likelihood(stream)?.per_step;
    let scores = (0..stream.nrows())
        .map(|n| {
            let marginal = model.sequence_log_likelihood(&stream.slice(s![n..n + 1, ..]).to_owned())?.total;
            Ok(conditional[n] - marginal)
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(ScoreTrace::new(scores))
}
