use nalgebra::{DMatrix, DVector};

use super::{Dataset, Targets};

/// Column means and population standard deviations of a training split.
/// Constant columns keep mean 0 and std 1 so they pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl NormalizationStats {
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let n = (rows.len() / dim) as f64;
        let mut mean = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for j in 0..dim {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let mut std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let constant: Vec<bool> =
            std.iter().zip(&mean).map(|(&s, &m)| s <= 1e-12 * m.abs().max(1.0)).collect();
        for j in 0..dim {
            if constant[j] {
                mean[j] = 0.0;
                std[j] = 1.0;
            }
        }
        Self { mean, std, constant }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &mut [f64]) {
        for row in rows.chunks_exact_mut(self.dim()) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }

    pub fn invert(&self, rows: &mut [f64]) {
        for row in rows.chunks_exact_mut(self.dim()) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
    }

    /// Maps a Gaussian prediction in standardized units back to original units.
    pub fn invert_moments(&self, mu: &DVector<f64>, cov: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mu = DVector::from_fn(mu.len(), |j, _| mu[j] * self.std[j] + self.mean[j]);
        let cov = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] * self.std[i] * self.std[j]);
        (mu, cov)
    }
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub train: Dataset,
    pub others: Vec<Dataset>,
    pub input_stats: NormalizationStats,
    pub target_stats: Option<NormalizationStats>,
}

/// Fits column statistics on `train` (inputs, and real targets if present) and applies
/// them to `train` and every dataset in `others`.
pub fn standardize_fit_apply(train: &Dataset, others: &[&Dataset]) -> Standardized {
    let input_stats = NormalizationStats::fit(&train.inputs, train.dim);
    let target_stats = match &train.targets {
        Targets::Values { values, dim } => Some(NormalizationStats::fit(values, *dim)),
        Targets::Labels { .. } => None,
    };
    let transform = |ds: &Dataset| {
        let mut out = ds.clone();
        input_stats.apply(out.inputs_mut());
        if let (Some(ts), Targets::Values { values, .. }) = (&target_stats, out.targets_mut()) {
            ts.apply(values);
        }
        out.meta.input_stats = Some(input_stats.clone());
        out.meta.target_stats = target_stats.clone();
        out
    };
    Standardized {
        train: transform(train),
        others: others.iter().map(|d| transform(d)).collect(),
        input_stats: input_stats.clone(),
        target_stats: target_stats.clone(),
    }
}
