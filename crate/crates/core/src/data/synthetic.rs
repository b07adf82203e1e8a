use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Metadata, Targets};

/// `n` points from a standard 2D Gaussian; label 0 when both coordinates share a sign
/// (`x₁·x₂ ≥ 0`), label 1 otherwise.
pub fn gen_sign_product(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        inputs.push(a);
        inputs.push(b);
        labels.push(sign_product_label(a, b));
    }
    let mut ds = Dataset::new(inputs, 2, Targets::Labels { labels, num_classes: 2 })
        .expect("generated shapes are consistent");
    ds.meta = Metadata {
        feature_names: vec!["x1".into(), "x2".into()],
        target_names: vec!["A".into(), "B".into()],
        ..Metadata::default()
    };
    ds
}

pub(crate) fn sign_product_label(a: f64, b: f64) -> usize {
    if a * b >= 0.0 {
        0
    } else {
        1
    }
}

/// Distance from a point to the nearest coordinate axis.
pub fn distance_to_axes(x: &[f64]) -> f64 {
    x[0].abs().min(x[1].abs())
}
