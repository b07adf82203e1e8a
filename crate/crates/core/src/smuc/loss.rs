use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `−log softmax(μ_y)[label]`.
    CrossEntropy,
    /// `‖μ_y − y‖²`.
    Mse,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Mse => "mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Label(usize),
    Values(DVector<f64>),
}

fn log_sum_exp(z: &DVector<f64>) -> f64 {
    let m = z.max();
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn loss_value(loss: LossKind, mu_y: &DVector<f64>, target: &Target) -> Result<f64> {
    loss_gradient(loss, mu_y, target).map(|(v, _)| v)
}

/// Loss and its gradient with respect to `mu_y`.
pub fn loss_gradient(loss: LossKind, mu_y: &DVector<f64>, target: &Target) -> Result<(f64, DVector<f64>)> {
    match (loss, target) {
        (LossKind::CrossEntropy, Target::Label(label)) => {
            if *label >= mu_y.len() {
                return Err(Error::Contract(format!(
                    "label {label} out of range for {} outputs",
                    mu_y.len()
                )));
            }
            let lse = log_sum_exp(mu_y);
            let mut grad = mu_y.map(|v| (v - lse).exp());
            grad[*label] -= 1.0;
            Ok((lse - mu_y[*label], grad))
        }
        (LossKind::Mse, Target::Values(y)) => {
            if y.len() != mu_y.len() {
                return Err(Error::Contract(format!(
                    "target has {} entries, output has {}",
                    y.len(),
                    mu_y.len()
                )));
            }
            let r = mu_y - y;
            Ok((r.norm_squared(), r * 2.0))
        }
        (LossKind::Mse, Target::Label(_)) => {
            Err(Error::Contract("MSE loss needs real-valued targets".into()))
        }
        (LossKind::CrossEntropy, Target::Values(_)) => {
            Err(Error::Contract("cross-entropy loss needs a class label".into()))
        }
    }
}
