//! Uncertainty metrics on network outputs and the covariance deviation-rate diagnostic.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::network::{forward, Covariance, MnnModel, MomentState};
use crate::smuc::{input_gradient, LossKind, Target};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMoments {
    pub mu_y: DVector<f64>,
    pub cov_y: DMatrix<f64>,
}

impl PredictionMoments {
    pub fn from_state(state: &MomentState) -> Self {
        Self { mu_y: state.mu_y.clone(), cov_y: state.cov_y.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyResult {
    /// Differential entropy in nats, on the subspace that was kept.
    pub entropy: f64,
    pub effective_dim: usize,
    pub dropped_eigenvalues: usize,
    /// Set when every eigenvalue was dropped and the entropy is reported as 0.
    pub degenerate: bool,
}

fn entropy_from_eigenvalues(eigs: impl Iterator<Item = f64> + Clone, rank_tol: f64) -> EntropyResult {
    let total = eigs.clone().count();
    let lmax = eigs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) {
        return EntropyResult {
            entropy: 0.0,
            effective_dim: 0,
            dropped_eigenvalues: total,
            degenerate: true,
        };
    }
    let cutoff = rank_tol * lmax;
    let (mut n, mut logdet) = (0usize, 0.0);
    for l in eigs.filter(|&l| l > cutoff) {
        n += 1;
        logdet += l.ln();
    }
    EntropyResult {
        entropy: 0.5 * n as f64 * (1.0 + (2.0 * PI).ln()) + 0.5 * logdet,
        effective_dim: n,
        dropped_eigenvalues: total - n,
        degenerate: false,
    }
}

/// Entropy of `N(·, cov)` restricted to the span of its non-negligible eigenvectors.
pub fn covariance_entropy(cov: &DMatrix<f64>, rank_tol: f64) -> Result<EntropyResult> {
    if !cov.is_square() {
        return Err(Error::Contract(format!("covariance is {:?}, not square", cov.shape())));
    }
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if (cov - cov.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Contract("covariance is not symmetric".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("covariance has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    Ok(entropy_from_eigenvalues(eig.iter().copied(), rank_tol))
}

pub fn gaussian_entropy(p: &PredictionMoments, rank_tol: f64) -> Result<EntropyResult> {
    covariance_entropy(&p.cov_y, rank_tol)
}

/// Entropy of signal layer `l` (0 is the input layer).
pub fn layer_entropy(state: &MomentState, l: usize, rank_tol: f64) -> Result<EntropyResult> {
    if l >= state.num_layers() {
        return Err(Error::Contract(format!("layer {l} does not exist")));
    }
    if l == 0 {
        let n = state.input.len();
        return match &state.input_cov {
            None => Err(Error::Contract("the input layer carries no covariance".into())),
            Some(Covariance::Isotropic(v)) => {
                Ok(entropy_from_eigenvalues(std::iter::repeat_n(*v, n), rank_tol))
            }
            Some(Covariance::Zero) => Ok(entropy_from_eigenvalues(std::iter::repeat_n(0.0, n), rank_tol)),
            Some(Covariance::Dense(c)) => covariance_entropy(c, rank_tol),
        };
    }
    match &state.hidden[l - 1].cov {
        Some(c) => covariance_entropy(c, rank_tol),
        None => Err(Error::Contract(format!("layer {l} has covariance disabled"))),
    }
}

pub fn output_entropy(state: &MomentState, rank_tol: f64) -> Result<EntropyResult> {
    covariance_entropy(&state.cov_y, rank_tol)
}

pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let m = z.max();
    let e = z.map(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Maximum softmax probability.
pub fn msp(mu_y: &DVector<f64>) -> f64 {
    softmax(mu_y).max()
}

/// Entropy of `softmax(mu_y)` in nats.
pub fn softmax_entropy(mu_y: &DVector<f64>) -> f64 {
    let m = mu_y.max();
    let shifted = mu_y.map(|v| v - m);
    let log_z = shifted.map(f64::exp).sum().ln();
    shifted
        .iter()
        .map(|&s| {
            let logp = s - log_z;
            let p = logp.exp();
            if p > 0.0 {
                -p * logp
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separability {
    pub value: f64,
    /// Both groups have zero variance and equal means.
    pub degenerate: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    // Shifting by the first sample makes a constant group give exactly that value and zero spread.
    let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `(μ₁ − μ₂) / √(σ₁² + σ₂²)` with unbiased variances. Group 1 is the one expected to be higher.
pub fn separability(group1: &[f64], group2: &[f64]) -> Result<Separability> {
    if group1.len() < 2 || group2.len() < 2 {
        return Err(Error::Contract(format!(
            "separability needs at least 2 samples per group, got {} and {}",
            group1.len(),
            group2.len()
        )));
    }
    let (m1, v1) = mean_var(group1);
    let (m2, v2) = mean_var(group2);
    let denom = (v1 + v2).sqrt();
    if denom == 0.0 {
        let value = if m1 == m2 { 0.0 } else { f64::INFINITY.copysign(m1 - m2) };
        return Ok(Separability { value, degenerate: m1 == m2 });
    }
    Ok(Separability { value: (m1 - m2) / denom, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub log_likelihood: f64,
}

/// Diagonal jitter added to every covariance when regularization is requested.
pub const LL_JITTER: f64 = 1e-8;

/// Mean squared error and mean Gaussian log-likelihood of targets under the predictions.
pub fn regression_metrics(
    preds: &[PredictionMoments],
    targets: &[DVector<f64>],
    jitter: bool,
) -> Result<RegressionMetrics> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Contract(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    let mut sse = 0.0;
    let mut ll = 0.0;
    for (k, (p, y)) in preds.iter().zip(targets).enumerate() {
        let d = y.len();
        if p.mu_y.len() != d || p.cov_y.shape() != (d, d) {
            return Err(Error::Contract(format!("sample {k}: prediction and target shapes differ")));
        }
        let r = y - &p.mu_y;
        sse += r.norm_squared();
        let mut c = p.cov_y.clone();
        if jitter {
            for i in 0..d {
                c[(i, i)] += LL_JITTER;
            }
        }
        let chol = Cholesky::new(c).ok_or_else(|| {
            Error::Numeric(format!("sample {k}: predictive covariance is not positive definite"))
        })?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let quad = r.dot(&chol.solve(&r));
        ll += -0.5 * (d as f64 * (2.0 * PI).ln() + logdet + quad);
    }
    let n = preds.len() as f64;
    Ok(RegressionMetrics { mse: sse / n, log_likelihood: ll / n })
}

/// Covariance deviation rate of the map from signal layer `l` (0 is the input) into hidden
/// layer `l + 1`: `n (max χ)² / √(λ_min² + 2 λ_min σ²)`, where χ is the linear response of
/// the receiving units at their recorded pre-activation moments and σ is the receiving layer's
/// noise scale.
pub fn deviation_rate(state: &MomentState, model: &MnnModel, l: usize) -> Result<f64> {
    let hidden = model.hidden_layers();
    if l >= hidden.len() || state.hidden.len() != hidden.len() {
        return Err(Error::Contract(format!(
            "deviation rate is defined for maps into hidden layers; layer {l} has none"
        )));
    }
    let layer = &hidden[l];
    let kind = layer.spec.kind.expect("hidden layer has a kind");
    let cov =
        state.layer_cov(l).ok_or_else(|| Error::Contract(format!("layer {l} has covariance disabled")))?;
    let lmin = SymmetricEigen::new(cov).eigenvalues.min();
    if !(lmin > 0.0) {
        return Err(Error::Contract(format!(
            "layer {l} covariance is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    let next = &state.hidden[l];
    let mut max_chi: f64 = 0.0;
    for i in 0..next.pre_mean.len() {
        let chi = kind.moments_or_deterministic(next.pre_mean[i], next.pre_var[i])?.chi;
        max_chi = max_chi.max(chi.abs());
    }
    let n = layer.spec.in_dim as f64;
    let s2 = layer.spec.sigma * layer.spec.sigma;
    Ok(n * max_chi * max_chi / (lmin * lmin + 2.0 * lmin * s2).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationProfile {
    pub rates: Vec<f64>,
    /// `Π_{q ≤ l} r^(q)`.
    pub partial_products: Vec<f64>,
    /// `−Σ log r^(l)`; large positive values indicate contraction.
    pub neg_log_sum: f64,
}

pub fn deviation_profile(state: &MomentState, model: &MnnModel) -> Result<DeviationProfile> {
    let mut rates = Vec::new();
    for l in 0..model.hidden_layers().len() {
        rates.push(deviation_rate(state, model, l)?);
    }
    let mut acc = 1.0;
    let partial_products = rates
        .iter()
        .map(|r| {
            acc *= r;
            acc
        })
        .collect();
    let neg_log_sum = -rates.iter().map(|r| r.ln()).sum::<f64>();
    Ok(DeviationProfile { rates, partial_products, neg_log_sum })
}

/// Fast gradient sign perturbation of `x` against the cross-entropy of `label`, using the
/// mean-path input gradient.
pub fn fgsm_attack(model: &MnnModel, x: &DVector<f64>, label: usize, eps: f64) -> Result<DVector<f64>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Contract(format!("eps must be finite and >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(x.clone());
    }
    let state = forward(model, x)?;
    let g = input_gradient(model, &state, LossKind::CrossEntropy, &Target::Label(label))?;
    Ok(DVector::from_fn(x.len(), |i, _| {
        let s = if g[i] > 0.0 {
            1.0
        } else if g[i] < 0.0 {
            -1.0
        } else {
            0.0
        };
        x[i] + eps * s
    }))
}

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// Linearized output entropy of a logistic unit `sigmoid(wᵀx + b)` under input covariance `C`.
pub fn logistic_entropy_approx(w: &DVector<f64>, b: f64, c: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    if c.shape() != (w.len(), w.len()) || x.len() != w.len() {
        return Err(Error::Contract("w, C and x must have matching dimensions".into()));
    }
    let spread = w.dot(&(c * w));
    if !(spread > 0.0) {
        return Err(Error::Domain(format!("wᵀCw must be positive, got {spread}")));
    }
    let p = sigmoid(w.dot(x) + b);
    let slope = p * (1.0 - p);
    Ok(0.5 * (1.0 + (2.0 * PI).ln() + (slope * slope * spread).ln()))
}
