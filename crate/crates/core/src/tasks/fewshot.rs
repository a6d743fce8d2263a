use ndarray::{concatenate, Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{DataError, Dataset};
use crate::model::{BrunoModel, ModelError};

/// `k` support sets of `n` items each plus one query drawn from the support
/// class at position `target`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub classes: Vec<usize>,
    pub support: Vec<Vec<usize>>,
    pub query: usize,
    pub target: usize,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.support.len()
    }

    pub fn shots(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }
}

/// Distinct classes per episode; the query never appears in its own
/// support set.
pub fn sample_episode<R: Rng + ?Sized>(dataset: &Dataset, n: usize, k: usize, rng: &mut R) -> Result<Episode, DataError> {
    if k == 0 || n == 0 {
        return Err(DataError::InsufficientData("episodes need n >= 1 and k >= 1".into()));
    }
    if dataset.num_classes() < k {
        return Err(DataError::InsufficientData(format!(
            "{k}-way episodes need {k} classes, dataset has {}",
            dataset.num_classes()
        )));
    }
    if dataset.min_class_size() < n + 1 {
        return Err(DataError::InsufficientData(format!(
            "{n}-shot episodes need {} items per class, smallest class has {}",
            n + 1,
            dataset.min_class_size()
        )));
    }
    let classes = index::sample(rng, dataset.num_classes(), k).into_vec();
    let target = rng.random_range(0..k);
    let mut support = Vec::with_capacity(k);
    let mut query = 0;
    for (i, &c) in classes.iter().enumerate() {
        let items = dataset.class_items(c);
        let take = if i == target { n + 1 } else { n };
        let mut picked: Vec<usize> = index::sample(rng, items.len(), take).into_iter().map(|j| items[j]).collect();
        if i == target {
            query = picked.pop().expect("n + 1 items");
        }
        support.push(picked);
    }
    Ok(Episode {
        classes,
        support,
        query,
        target,
    })
}

/// Per class, the support rows followed by the query row, in the flow's
/// input space.
pub fn episode_sequences<R: Rng + ?Sized>(
    model: &BrunoModel,
    dataset: &Dataset,
    episode: &Episode,
    rng: &mut R,
) -> Result<Vec<Array2<f64>>, ModelError> {
    let preprocess = model.flow().preprocess();
    let query = dataset.prepare(&[episode.query], preprocess, rng)?;
    episode
        .support
        .iter()
        .map(|s| {
            let rows = dataset.prepare(s, preprocess, rng)?;
            concatenate(Axis(0), &[rows.view(), query.view()]).map_err(|e| ModelError::ShapeMismatch(e.to_string()))
        })
        .collect()
}

/// `log p(query | support_i)` for every class `i`.
pub fn few_shot_scores<R: Rng + ?Sized>(
    model: &BrunoModel,
    dataset: &Dataset,
    episode: &Episode,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    let preprocess = model.flow().preprocess();
    let query = dataset.prepare(&[episode.query], preprocess, rng)?;
    let (zq, logdet) = model.latents(&query)?;
    let params = model.processes();
    episode
        .support
        .iter()
        .map(|s| {
            let rows = dataset.prepare(s, preprocess, rng)?;
            let states = model.condition(&rows)?;
            let mut score = logdet[0];
            for (d, (p, st)) in params.iter().zip(&states).enumerate() {
                score += p.predictive_log_density(st, zq[[0, d]])?;
            }
            Ok(score)
        })
        .collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn classify(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn few_shot_classify<R: Rng + ?Sized>(
    model: &BrunoModel,
    dataset: &Dataset,
    episode: &Episode,
    rng: &mut R,
) -> Result<usize, ModelError> {
    Ok(classify(&few_shot_scores(model, dataset, episode, rng)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FewShotResult {
    pub episodes: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

impl FewShotResult {
    fn new(correct: usize, episodes: usize) -> Self {
        let accuracy = correct as f64 / episodes as f64;
        Self {
            episodes,
            correct,
            accuracy,
            ci95: 1.96 * (accuracy * (1.0 - accuracy) / episodes as f64).sqrt(),
        }
    }
}

/// Generator for episode `index` of a run seeded with `seed`.
pub(crate) fn episode_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean accuracy over `episodes` independent `n`-shot `k`-way episodes.
/// Each episode has its own generator, so the result does not depend on
/// the thread count.
pub fn few_shot_eval(
    model: &BrunoModel,
    dataset: &Dataset,
    n: usize,
    k: usize,
    episodes: usize,
    seed: u64,
) -> Result<FewShotResult, ModelError> {
    if episodes == 0 {
        return Err(ModelError::InvalidConfig("at least one episode is required".into()));
    }
    let hits = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = episode_rng(seed, e);
            let episode = sample_episode(dataset, n, k, &mut rng)?;
            Ok(few_shot_classify(model, dataset, &episode, &mut rng)? == episode.target)
        })
        .collect::<Result<Vec<bool>, ModelError>>()?;
    Ok(FewShotResult::new(hits.iter().filter(|&&h| h).count(), episodes))
}
