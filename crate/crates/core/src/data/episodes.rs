use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

fn check_sizes(dataset: &Dataset, needed: usize) -> Result<(), DataError> {
    if dataset.num_classes() == 0 {
        return Err(DataError::InsufficientData("dataset has no classes".into()));
    }
    let smallest = dataset.min_class_size();
    if smallest < needed {
        return Err(DataError::InsufficientData(format!(
            "a class has {smallest} items, {needed} are needed"
        )));
    }
    Ok(())
}

/// One same-class sequence: a uniformly drawn class and `seq_len` of its
/// items without replacement, in random order.
pub fn sample_sequence<R: Rng + ?Sized>(
    dataset: &Dataset,
    seq_len: usize,
    rng: &mut R,
) -> Result<(usize, Vec<usize>), DataError> {
    check_sizes(dataset, seq_len)?;
    let class = rng.random_range(0..dataset.num_classes());
    let items = dataset.class_items(class);
    let picked = index::sample(rng, items.len(), seq_len)
        .into_iter()
        .map(|i| items[i])
        .collect();
    Ok((class, picked))
}

pub fn sample_batch<R: Rng + ?Sized>(
    dataset: &Dataset,
    seq_len: usize,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, DataError> {
    (0..batch)
        .map(|_| sample_sequence(dataset, seq_len, rng).map(|(_, s)| s))
        .collect()
}

/// Endless, seed-reproducible stream of training batches.
pub struct EpisodeStream<'a> {
    dataset: &'a Dataset,
    seq_len: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

pub fn episode_stream(dataset: &Dataset, seq_len: usize, batch: usize, seed: u64) -> Result<EpisodeStream<'_>, DataError> {
    check_sizes(dataset, seq_len)?;
    Ok(EpisodeStream {
        dataset,
        seq_len,
        batch,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl Iterator for EpisodeStream<'_> {
    type Item = Vec<Vec<usize>>;

    fn next(&mut self) -> Option<Self::Item> {
        sample_batch(self.dataset, self.seq_len, self.batch, &mut self.rng).ok()
    }
}
