use nalgebra::{DMatrix, DVector};

use super::backward::GradientSet;
use crate::error::{Error, Result};
use crate::network::MnnModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer hyperparameters plus Adam's running moments.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Decoupled: applied to the parameters directly, never folded into Adam's moments.
    pub weight_decay: f64,
    step: u64,
    moments: Option<(GradientSet, GradientSet)>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Contract(format!(
                "learning rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Contract(format!("weight decay must be finite and >= 0, got {weight_decay}")));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = kind {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::Contract(format!("invalid Adam parameters {kind:?}")));
            }
        }
        Ok(Self { kind, learning_rate, weight_decay, step: 0, moments: None })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

fn update_matrix(p: &mut DMatrix<f64>, dir: &DMatrix<f64>, lr: f64, wd: f64) {
    p.zip_apply(dir, |w, d| *w -= lr * (d + wd * *w));
}

fn update_vector(p: &mut DVector<f64>, dir: &DVector<f64>, lr: f64, wd: f64) {
    p.zip_apply(dir, |w, d| *w -= lr * (d + wd * *w));
}

/// One parameter update. SGD: `θ ← θ − γ(g + λθ)`; Adam: bias-corrected moment ratio in
/// place of `g`.
pub fn optimizer_step(opt: &mut OptimizerState, model: &mut MnnModel, grads: &GradientSet) -> Result<()> {
    if !grads.matches(model) {
        return Err(Error::Contract("gradient shapes do not match the model".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient entry; aborting the update".into()));
    }
    opt.step += 1;
    let (lr, wd) = (opt.learning_rate, opt.weight_decay);
    match opt.kind {
        OptimizerKind::Sgd => {
            for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
                update_matrix(&mut layer.weight, &g.weight, lr, wd);
                update_vector(&mut layer.bias, &g.bias, lr, wd);
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let (m, v) = opt
                .moments
                .get_or_insert_with(|| (GradientSet::zeros_like(model), GradientSet::zeros_like(model)));
            let c1 = 1.0 - beta1.powi(opt.step as i32);
            let c2 = 1.0 - beta2.powi(opt.step as i32);
            let direction = |m: f64, v: f64| (m / c1) / ((v / c2).sqrt() + eps);
            for ((layer, g), (m, v)) in
                model.layers.iter_mut().zip(&grads.layers).zip(m.layers.iter_mut().zip(v.layers.iter_mut()))
            {
                m.weight.zip_apply(&g.weight, |a, b| *a = beta1 * *a + (1.0 - beta1) * b);
                v.weight.zip_apply(&g.weight, |a, b| *a = beta2 * *a + (1.0 - beta2) * b * b);
                m.bias.zip_apply(&g.bias, |a, b| *a = beta1 * *a + (1.0 - beta1) * b);
                v.bias.zip_apply(&g.bias, |a, b| *a = beta2 * *a + (1.0 - beta2) * b * b);
                let dw = m.weight.zip_map(&v.weight, direction);
                let db = m.bias.zip_map(&v.bias, direction);
                update_matrix(&mut layer.weight, &dw, lr, wd);
                update_vector(&mut layer.bias, &db, lr, wd);
            }
        }
    }
    Ok(())
}
