use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

fn permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Seeded random split; the test part holds `round(N · test_fraction)` samples.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Contract(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = ds.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Contract(format!("a {test_fraction} split of {n} samples leaves one side empty")));
    }
    let perm = permutation(n, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Split { test: ds.subset(&perm[..n_test]), train: ds.subset(&perm[n_test..]) })
}

/// One epoch of minibatch index lists covering `0..n` exactly once in shuffled order.
pub fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let perm = permutation(n, rng);
    perm.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Split, then the first epoch of training batches from the same seed.
pub fn split_and_batch(
    ds: &Dataset,
    test_fraction: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(Split, Vec<Vec<usize>>)> {
    if batch_size == 0 {
        return Err(Error::Contract("batch size must be at least 1".into()));
    }
    let s = split(ds, test_fraction, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let b = batches(s.train.len(), batch_size, &mut rng);
    Ok((s, b))
}
