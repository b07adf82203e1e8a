//! Datasets: the synthetic sign-product task, IDX image files, CSV regression tables,
//! standardization and seeded splitting.

mod csv_table;
mod idx;
mod split;
mod standardize;
mod synthetic;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::smuc::Target;

pub use csv_table::{load_csv_regression, parse_csv_regression};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use split::{batches, split, split_and_batch, Split};
pub use standardize::{standardize_fit_apply, NormalizationStats};
pub use synthetic::{distance_to_axes, gen_sign_product};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels {
        labels: Vec<usize>,
        num_classes: usize,
    },
    /// Row-major `N × dim` real targets.
    Values {
        values: Vec<f64>,
        dim: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub input_stats: Option<NormalizationStats>,
    pub target_stats: Option<NormalizationStats>,
}

/// `N` samples of `dim` features stored row-major, with labels or real targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    dim: usize,
    targets: Targets,
    pub meta: Metadata,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, dim: usize, targets: Targets) -> Result<Self> {
        if dim == 0 || inputs.len() % dim != 0 {
            return Err(Error::Contract(format!(
                "{} input values do not form rows of width {dim}",
                inputs.len()
            )));
        }
        let n = inputs.len() / dim;
        match &targets {
            Targets::Labels { labels, num_classes } => {
                if labels.len() != n {
                    return Err(Error::Contract(format!("{n} inputs but {} labels", labels.len())));
                }
                if let Some(bad) = labels.iter().find(|&&l| l >= *num_classes) {
                    return Err(Error::Contract(format!("label {bad} is outside [0, {num_classes})")));
                }
            }
            Targets::Values { values, dim: d } => {
                if *d == 0 || values.len() != n * d {
                    return Err(Error::Contract(format!(
                        "{n} inputs but {} target values of width {d}",
                        values.len()
                    )));
                }
            }
        }
        Ok(Self { inputs, dim, targets, meta: Metadata::default() })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Labels { .. })
    }

    /// Number of classes, or the target width for regression.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Labels { num_classes, .. } => *num_classes,
            Targets::Values { dim, .. } => *dim,
        }
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.input(i))
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        match &self.targets {
            Targets::Labels { labels, .. } => Some(labels[i]),
            Targets::Values { .. } => None,
        }
    }

    pub fn target_values(&self, i: usize) -> Option<&[f64]> {
        match &self.targets {
            Targets::Values { values, dim } => Some(&values[i * dim..(i + 1) * dim]),
            Targets::Labels { .. } => None,
        }
    }

    pub fn target(&self, i: usize) -> Target {
        match &self.targets {
            Targets::Labels { labels, .. } => Target::Label(labels[i]),
            Targets::Values { values, dim } => {
                Target::Values(DVector::from_column_slice(&values[i * dim..(i + 1) * dim]))
            }
        }
    }

    /// Inputs of the given samples as the columns of a `dim × len` matrix.
    pub fn batch_inputs(&self, indices: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            m.column_mut(c).copy_from_slice(self.input(i));
        }
        m
    }

    /// All inputs as an `N × dim` matrix.
    pub fn inputs_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.inputs)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        let targets = match &self.targets {
            Targets::Labels { labels, num_classes } => Targets::Labels {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Values { values, dim } => {
                let mut v = Vec::with_capacity(indices.len() * dim);
                for &i in indices {
                    v.extend_from_slice(&values[i * dim..(i + 1) * dim]);
                }
                Targets::Values { values: v, dim: *dim }
            }
        };
        Dataset { inputs, dim: self.dim, targets, meta: self.meta.clone() }
    }

    pub(crate) fn inputs_mut(&mut self) -> &mut Vec<f64> {
        &mut self.inputs
    }

    pub(crate) fn targets_mut(&mut self) -> &mut Targets {
        &mut self.targets
    }
}
