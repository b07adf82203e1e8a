use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_gradient, loss_value, LossKind, Target};
use crate::error::{Error, Result};
use crate::network::{forward, MnnModel, MomentState};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// One gradient per layer of a model, same shapes as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(model: &MnnModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weight: DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            g.weight *= s;
            g.bias *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().map(|g| g.weight.amax().max(g.bias.amax())).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn matches(&self, model: &MnnModel) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, l)| g.weight.shape() == l.weight.shape() && g.bias.len() == l.bias.len())
    }
}

fn check_state(model: &MnnModel, state: &MomentState) -> Result<()> {
    let hidden = model.hidden_layers();
    if state.hidden.len() != hidden.len() || state.input.len() != model.input_dim() {
        return Err(Error::Contract("state was not produced by this model".into()));
    }
    for (l, (s, layer)) in state.hidden.iter().zip(hidden).enumerate() {
        if s.pre_mean.len() != layer.spec.out_dim || s.pre_var.len() != layer.spec.out_dim {
            return Err(Error::Contract(format!("state layer {} does not match the model", l + 1)));
        }
    }
    if state.mu_y.len() != model.output_dim() {
        return Err(Error::Contract("state output does not match the model".into()));
    }
    Ok(())
}

/// Output mean of the surrogate network whose pre-activation variances are frozen at
/// `frozen` (one vector per hidden layer).
pub fn frozen_mean_forward(
    model: &MnnModel,
    x: &DVector<f64>,
    frozen: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let hidden = model.hidden_layers();
    if frozen.len() != hidden.len() || x.len() != model.input_dim() {
        return Err(Error::Contract("frozen variances or input do not match the model".into()));
    }
    let mut mean = x.clone();
    for (l, (layer, var)) in hidden.iter().zip(frozen).enumerate() {
        let kind = layer.spec.kind.expect("hidden layer has a kind");
        let pre = &layer.weight * &mean + &layer.bias;
        let mut out = DVector::zeros(pre.len());
        for i in 0..pre.len() {
            out[i] = kind
                .mean_and_derivative_or_deterministic(pre[i], var[i])
                .map_err(|e| e.context(format!("layer {}", l + 1)))?
                .0;
        }
        mean = out;
    }
    let r = model.readout();
    Ok(&r.weight * &mean + &r.bias)
}

pub fn frozen_loss(
    model: &MnnModel,
    x: &DVector<f64>,
    frozen: &[DVector<f64>],
    loss: LossKind,
    target: &Target,
) -> Result<f64> {
    loss_value(loss, &frozen_mean_forward(model, x, frozen)?, target)
}

/// Gradients of the loss with all covariances held at the values recorded in `state`,
/// together with the gradient with respect to the input.
pub(crate) fn backward_with_input(
    model: &MnnModel,
    state: &MomentState,
    loss: LossKind,
    target: &Target,
) -> Result<(GradientSet, DVector<f64>)> {
    check_state(model, state)?;
    let (_, g_out) = loss_gradient(loss, &state.mu_y, target)?;
    let hidden = model.hidden_layers();
    let n_hidden = hidden.len();
    let mut layers = Vec::with_capacity(model.layers.len());

    let readout = model.readout();
    layers
        .push(LayerGradient { weight: &g_out * state.layer_mean(n_hidden).transpose(), bias: g_out.clone() });
    let mut delta = readout.weight.tr_mul(&g_out);

    for l in (0..n_hidden).rev() {
        let layer = &hidden[l];
        let kind = layer.spec.kind.expect("hidden layer has a kind");
        let s = &state.hidden[l];
        let mut g_pre = delta;
        for i in 0..g_pre.len() {
            let d = kind
                .mean_and_derivative_or_deterministic(s.pre_mean[i], s.pre_var[i])
                .map_err(|e| e.context(format!("layer {}", l + 1)))?
                .1;
            g_pre[i] *= d;
        }
        layers.push(LayerGradient { weight: &g_pre * state.layer_mean(l).transpose(), bias: g_pre.clone() });
        delta = layer.weight.tr_mul(&g_pre);
    }
    layers.reverse();
    Ok((GradientSet { layers }, delta))
}

/// Parameter gradients of the loss on `state.mu_y`, treating every covariance as a constant.
pub fn modified_backward(
    model: &MnnModel,
    state: &MomentState,
    loss: LossKind,
    target: &Target,
) -> Result<GradientSet> {
    backward_with_input(model, state, loss, target).map(|(g, _)| g)
}

/// Gradient of the loss with respect to the network input along the mean path.
pub fn input_gradient(
    model: &MnnModel,
    state: &MomentState,
    loss: LossKind,
    target: &Target,
) -> Result<DVector<f64>> {
    backward_with_input(model, state, loss, target).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Check at most this many coordinates, chosen at random; `None` checks all.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Denominator floor of the relative error, so entries near zero are compared absolutely.
    /// The default sits above the rounding noise of a central difference at step 1e-5 on an
    /// O(1) loss, about 1e-11, with room for the quadrature noise of LIF kernels.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { max_coords: None, seed: 0, abs_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(layer, "weight" | "bias", flat index)` of the worst coordinate.
    pub worst: Option<(usize, &'static str, usize)>,
}

fn param_mut(m: &mut MnnModel, l: usize, is_weight: bool, k: usize) -> &mut f64 {
    if is_weight {
        &mut m.layers[l].weight.as_mut_slice()[k]
    } else {
        &mut m.layers[l].bias.as_mut_slice()[k]
    }
}

/// Compares [`modified_backward`] against central differences of the frozen-covariance loss.
pub fn gradcheck_frozen_cov(
    model: &MnnModel,
    x: &DVector<f64>,
    target: &Target,
    loss: LossKind,
    step: f64,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let state = forward(model, x)?;
    let frozen = state.frozen_variances();
    let grads = modified_backward(model, &state, loss, target)?;

    let mut coords: Vec<(usize, bool, usize)> = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        coords.extend((0..layer.weight.len()).map(|k| (l, true, k)));
        coords.extend((0..layer.bias.len()).map(|k| (l, false, k)));
    }
    if let Some(max) = opts.max_coords {
        if max < coords.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked: Vec<usize> = sample(&mut rng, coords.len(), max).into_vec();
            picked.sort_unstable();
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut work = model.clone();
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, max_abs_error: 0.0, worst: None };
    for (l, is_weight, k) in coords {
        let original = *param_mut(&mut work, l, is_weight, k);
        *param_mut(&mut work, l, is_weight, k) = original + step;
        let up = frozen_loss(&work, x, &frozen, loss, target)?;
        *param_mut(&mut work, l, is_weight, k) = original - step;
        let down = frozen_loss(&work, x, &frozen, loss, target)?;
        *param_mut(&mut work, l, is_weight, k) = original;

        let fd = (up - down) / (2.0 * step);
        let analytic =
            if is_weight { grads.layers[l].weight.as_slice()[k] } else { grads.layers[l].bias.as_slice()[k] };
        let abs = (analytic - fd).abs();
        let rel = abs / analytic.abs().max(fd.abs()).max(opts.abs_floor);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = Some((l, if is_weight { "weight" } else { "bias" }, k));
        }
    }
    Ok(report)
}
