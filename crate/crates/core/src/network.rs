//! Layered moment networks: parameters, the linear moment map and the forward passes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{covariance_from_moments, ActivationKind, ScalarMoments};
use crate::error::{Error, Result};

/// Shape and behaviour of one layer. `kind == None` marks the final linear readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kind: Option<ActivationKind>,
    /// Noise scale added to the pre-activation variance of this layer.
    pub sigma: f64,
    pub covariance_enabled: bool,
}

impl LayerSpec {
    pub fn hidden(in_dim: usize, out_dim: usize, kind: ActivationKind, sigma: f64) -> Self {
        Self { in_dim, out_dim, kind: Some(kind), sigma, covariance_enabled: true }
    }

    pub fn readout(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, kind: None, sigma: 0.0, covariance_enabled: true }
    }

    pub fn without_covariance(mut self) -> Self {
        self.covariance_enabled = false;
        self
    }

    pub fn is_readout(&self) -> bool {
        self.kind.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Hidden layers followed by one linear readout, plus the input noise scale σ₁.
#[derive(Debug, Clone, PartialEq)]
pub struct MnnModel {
    pub input_sigma: f64,
    pub layers: Vec<Layer>,
}

/// Checks a layer stack: dims chain, exactly one trailing readout, covariance flags form a
/// disabled prefix, and at most one activation kind among covariance-carrying layers.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    let Some(last) = specs.last() else {
        return Err(Error::Contract("a model needs at least a readout layer".into()));
    };
    if !last.is_readout() {
        return Err(Error::Contract("the last layer must be a linear readout".into()));
    }
    let mut seen_enabled = false;
    let mut cov_kind: Option<ActivationKind> = None;
    for (l, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Contract(format!("layer {l} has a zero dimension")));
        }
        if !(s.sigma.is_finite() && s.sigma >= 0.0) {
            return Err(Error::Contract(format!(
                "layer {l}: sigma must be finite and >= 0, got {}",
                s.sigma
            )));
        }
        if l > 0 && specs[l - 1].out_dim != s.in_dim {
            return Err(Error::Contract(format!(
                "layer {l} expects {} inputs but layer {} produces {}",
                s.in_dim,
                l - 1,
                specs[l - 1].out_dim
            )));
        }
        if s.is_readout() {
            if l + 1 != specs.len() {
                return Err(Error::Contract(format!("layer {l} is a readout but is not last")));
            }
            if s.sigma != 0.0 {
                return Err(Error::Contract("the readout carries no noise; set its sigma to 0".into()));
            }
            continue;
        }
        if let Some(ActivationKind::Lif(p)) = s.kind {
            p.validate()?;
        }
        if s.covariance_enabled {
            seen_enabled = true;
            match (cov_kind, s.kind) {
                (None, k) => cov_kind = k,
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::Contract(format!(
                        "layer {l} mixes activation {} with {} among covariance layers",
                        b.name(),
                        a.name()
                    )));
                }
                _ => {}
            }
        } else if seen_enabled {
            return Err(Error::Contract(format!(
                "layer {l} disables covariance after an enabled layer; only a prefix may be disabled"
            )));
        }
    }
    Ok(())
}

impl MnnModel {
    pub fn new(input_sigma: f64, layers: Vec<Layer>) -> Result<Self> {
        let model = Self { input_sigma, layers };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.input_sigma.is_finite() && self.input_sigma >= 0.0) {
            return Err(Error::Contract(format!(
                "input sigma must be finite and >= 0, got {}",
                self.input_sigma
            )));
        }
        let specs: Vec<LayerSpec> = self.layers.iter().map(|l| l.spec).collect();
        validate_specs(&specs)?;
        for (l, layer) in self.layers.iter().enumerate() {
            let s = layer.spec;
            if layer.weight.shape() != (s.out_dim, s.in_dim) || layer.bias.len() != s.out_dim {
                return Err(Error::Contract(format!(
                    "layer {l}: weight is {:?} and bias has {} entries, spec wants {}x{}",
                    layer.weight.shape(),
                    layer.bias.len(),
                    s.out_dim,
                    s.in_dim
                )));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_sigma: f64, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|&spec| {
                let a = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
                let weight = DMatrix::from_fn(spec.out_dim, spec.in_dim, |_, _| rng.random_range(-a..=a));
                Layer { spec, weight, bias: DVector::zeros(spec.out_dim) }
            })
            .collect();
        Self::new(input_sigma, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.spec.out_dim).unwrap_or(0)
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn readout(&self) -> &Layer {
        self.layers.last().expect("validated model has a readout")
    }

    /// Activation kind shared by the hidden layers (the first one found).
    pub fn kind(&self) -> Option<ActivationKind> {
        self.layers.iter().find_map(|l| l.spec.kind)
    }

    /// Whether the covariance path starts at the input (no disabled prefix).
    pub fn input_covariance_enabled(&self) -> bool {
        self.layers[0].spec.covariance_enabled
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// `init_params`: Glorot-uniform initialization of the given stack.
pub fn init_params(specs: &[LayerSpec], input_sigma: f64, seed: u64) -> Result<MnnModel> {
    MnnModel::init(input_sigma, specs, seed)
}

/// Covariance carried into a linear map: nothing, a multiple of the identity, or dense.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Zero,
    Isotropic(f64),
    Dense(DMatrix<f64>),
}

impl Covariance {
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            Covariance::Zero => DMatrix::zeros(n, n),
            Covariance::Isotropic(v) => DMatrix::from_diagonal_element(n, n, *v),
            Covariance::Dense(m) => m.clone(),
        }
    }

    /// `W C Wᵀ + σ² I`, symmetrized.
    pub(crate) fn project(&self, w: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
        let mut out = match self {
            Covariance::Zero => DMatrix::zeros(w.nrows(), w.nrows()),
            Covariance::Isotropic(v) => (w * w.transpose()) * *v,
            Covariance::Dense(c) => w * c * w.transpose(),
        };
        symmetrize(&mut out);
        let noise = sigma * sigma;
        if noise != 0.0 {
            for i in 0..out.nrows() {
                out[(i, i)] += noise;
            }
        }
        out
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `μ̄ = W μ + b`, `C̄ = W C Wᵀ + σ² I`.
pub fn linear_moment_map(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    sigma: f64,
    mu: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if w.ncols() != mu.len() || b.len() != w.nrows() || cov.shape() != (mu.len(), mu.len()) {
        return Err(Error::Contract(format!(
            "linear moment map: W is {:?}, b has {}, mu has {}, cov is {:?}",
            w.shape(),
            b.len(),
            mu.len(),
            cov.shape()
        )));
    }
    let mu_bar = w * mu + b;
    let c_bar = Covariance::Dense(cov.clone()).project(w, sigma);
    Ok((mu_bar, c_bar))
}

/// Per-hidden-layer record of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    /// Pre-activation mean μ̄.
    pub pre_mean: DVector<f64>,
    /// Diagonal of the pre-activation covariance C̄; zero where covariance is disabled.
    pub pre_var: DVector<f64>,
    /// Output mean μ.
    pub mean: DVector<f64>,
    /// Output covariance C, absent where covariance is disabled.
    pub cov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub input: DVector<f64>,
    /// Covariance of the input layer, `σ₁² I`, or `None` when the first layer is deterministic.
    pub input_cov: Option<Covariance>,
    pub hidden: Vec<LayerState>,
    pub mu_y: DVector<f64>,
    pub cov_y: DMatrix<f64>,
}

impl MomentState {
    /// Number of signal layers, counting the input layer as index 0.
    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Mean of signal layer `l` (0 is the input).
    pub fn layer_mean(&self, l: usize) -> &DVector<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.hidden[l - 1].mean
        }
    }

    /// Covariance of signal layer `l` (0 is the input), densified.
    pub fn layer_cov(&self, l: usize) -> Option<DMatrix<f64>> {
        if l == 0 {
            self.input_cov.as_ref().map(|c| c.to_dense(self.input.len()))
        } else {
            self.hidden[l - 1].cov.clone()
        }
    }

    /// Frozen pre-activation variances, one vector per hidden layer.
    pub fn frozen_variances(&self) -> Vec<DVector<f64>> {
        self.hidden.iter().map(|h| h.pre_var.clone()).collect()
    }
}

fn check_input(model: &MnnModel, x: &DVector<f64>) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::Contract(format!(
            "input has {} entries, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("input contains non-finite values".into()));
    }
    Ok(())
}

/// Applies the moment activation of `kind` coordinate-wise, routing zero-variance
/// coordinates to the plain nonlinearity.
pub(crate) fn activate(
    kind: ActivationKind,
    pre_mean: &DVector<f64>,
    c_bar: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = pre_mean.len();
    let mut moments: Vec<ScalarMoments> = Vec::with_capacity(n);
    for i in 0..n {
        let m = kind
            .moments_or_deterministic(pre_mean[i], c_bar[(i, i)])
            .map_err(|e| e.context(format!("unit {i}")))?;
        moments.push(m);
    }
    let mean = DVector::from_iterator(n, moments.iter().map(|m| m.mean));
    Ok((mean, covariance_from_moments(&moments, c_bar)))
}

fn deterministic_layer(kind: ActivationKind, pre_mean: &DVector<f64>) -> DVector<f64> {
    pre_mean.map(|v| kind.deterministic(v))
}

fn default_input_cov(model: &MnnModel) -> Option<Covariance> {
    if !model.input_covariance_enabled() {
        return None;
    }
    Some(if model.input_sigma > 0.0 {
        Covariance::Isotropic(model.input_sigma * model.input_sigma)
    } else {
        Covariance::Zero
    })
}

/// Forward passes of one model with the first layer's input-covariance projection, which
/// does not depend on the input, computed once.
#[derive(Debug, Clone)]
pub struct Propagator<'m> {
    model: &'m MnnModel,
    input_cov: Option<Covariance>,
    first_c_bar: Option<DMatrix<f64>>,
}

impl<'m> Propagator<'m> {
    pub fn new(model: &'m MnnModel) -> Self {
        let input_cov = default_input_cov(model);
        Self::build(model, input_cov)
    }

    /// Uses `cov` instead of `σ₁² I` as the input covariance.
    pub fn with_input_cov(model: &'m MnnModel, cov: DMatrix<f64>) -> Result<Self> {
        let n = model.input_dim();
        if cov.shape() != (n, n) {
            return Err(Error::Contract(format!("input covariance is {:?}, expected {n}x{n}", cov.shape())));
        }
        if !model.input_covariance_enabled() {
            return Err(Error::Contract("the first layer has covariance disabled".into()));
        }
        let mut cov = cov;
        symmetrize(&mut cov);
        Ok(Self::build(model, Some(Covariance::Dense(cov))))
    }

    fn build(model: &'m MnnModel, input_cov: Option<Covariance>) -> Self {
        let first = &model.layers[0];
        let first_c_bar = match (&input_cov, first.spec.is_readout()) {
            (Some(c), false) => Some(c.project(&first.weight, first.spec.sigma)),
            _ => None,
        };
        Self { model, input_cov, first_c_bar }
    }

    pub fn model(&self) -> &'m MnnModel {
        self.model
    }

    /// Full moment propagation of one input.
    pub fn forward(&self, x: &DVector<f64>) -> Result<MomentState> {
        let model = self.model;
        check_input(model, x)?;
        let mut hidden = Vec::with_capacity(model.layers.len() - 1);
        let mut mean = x.clone();
        let mut cov = self.input_cov.clone();
        for (l, layer) in model.hidden_layers().iter().enumerate() {
            let kind = layer.spec.kind.expect("hidden layer has a kind");
            let pre_mean = &layer.weight * &mean + &layer.bias;
            let state = if layer.spec.covariance_enabled {
                let incoming = cov.take().unwrap_or(Covariance::Zero);
                let c_bar = match (l, &self.first_c_bar) {
                    (0, Some(c)) => c.clone(),
                    _ => incoming.project(&layer.weight, layer.spec.sigma),
                };
                let (out_mean, out_cov) =
                    activate(kind, &pre_mean, &c_bar).map_err(|e| e.context(format!("layer {}", l + 1)))?;
                LayerState { pre_var: c_bar.diagonal(), pre_mean, mean: out_mean, cov: Some(out_cov) }
            } else {
                LayerState {
                    pre_var: DVector::zeros(pre_mean.len()),
                    mean: deterministic_layer(kind, &pre_mean),
                    pre_mean,
                    cov: None,
                }
            };
            mean = state.mean.clone();
            cov = state.cov.clone().map(Covariance::Dense);
            hidden.push(state);
        }

        let readout = model.readout();
        let mu_y = &readout.weight * &mean + &readout.bias;
        let cov_y = match cov {
            Some(c) => c.project(&readout.weight, 0.0),
            None => DMatrix::zeros(mu_y.len(), mu_y.len()),
        };
        Ok(MomentState { input: x.clone(), input_cov: self.input_cov.clone(), hidden, mu_y, cov_y })
    }
}

/// Full moment propagation of one input.
pub fn forward(model: &MnnModel, x: &DVector<f64>) -> Result<MomentState> {
    Propagator::new(model).forward(x)
}

/// Forward pass with an arbitrary input covariance in place of `σ₁² I`.
pub fn forward_with_input_cov(model: &MnnModel, x: &DVector<f64>, cov: DMatrix<f64>) -> Result<MomentState> {
    Propagator::with_input_cov(model, cov)?.forward(x)
}

/// Conventional network forward pass on the same weights: plain activations, no moments.
pub fn deterministic_forward(model: &MnnModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_input(model, x)?;
    let mut mean = x.clone();
    for layer in model.hidden_layers() {
        let kind = layer.spec.kind.expect("hidden layer has a kind");
        mean = deterministic_layer(kind, &(&layer.weight * &mean + &layer.bias));
    }
    let r = model.readout();
    Ok(&r.weight * &mean + &r.bias)
}

/// Shared covariance path of a batch-shared forward pass, one entry per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedLayer {
    /// Pre-activation mean along the batch-averaged path.
    pub pre_mean: DVector<f64>,
    pub pre_var: DVector<f64>,
    pub cov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMomentState {
    /// Per-sample states; their covariances are the shared ones.
    pub samples: Vec<MomentState>,
    pub shared: Vec<SharedLayer>,
    pub shared_cov_y: DMatrix<f64>,
}

fn average(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = vs[0].clone();
    for v in &vs[1..] {
        acc += v;
    }
    acc / vs.len() as f64
}

/// Forward pass where the covariance path is computed once per batch along the
/// batch-averaged mean path and shared by every sample.
pub fn forward_batch_shared(model: &MnnModel, xs: &[DVector<f64>]) -> Result<BatchMomentState> {
    if xs.is_empty() {
        return Err(Error::Contract("batch-shared forward needs a nonempty batch".into()));
    }
    for x in xs {
        check_input(model, x)?;
    }
    let input_cov = default_input_cov(model);

    let mut means: Vec<DVector<f64>> = xs.to_vec();
    let mut avg = average(&means);
    let mut cov = input_cov.clone();
    let mut per_sample: Vec<Vec<LayerState>> = vec![Vec::new(); xs.len()];
    let mut shared = Vec::new();

    for (l, layer) in model.hidden_layers().iter().enumerate() {
        let kind = layer.spec.kind.expect("hidden layer has a kind");
        let ctx = |e: Error| e.context(format!("layer {}", l + 1));
        let pre_means: Vec<DVector<f64>> = means.iter().map(|m| &layer.weight * m + &layer.bias).collect();
        let shared_pre = &layer.weight * &avg + &layer.bias;
        if layer.spec.covariance_enabled {
            let incoming = cov.take().unwrap_or(Covariance::Zero);
            let c_bar = incoming.project(&layer.weight, layer.spec.sigma);
            let pre_var = c_bar.diagonal();
            let mut new_means = Vec::with_capacity(xs.len());
            for pre in &pre_means {
                let mut m = DVector::zeros(pre.len());
                for i in 0..pre.len() {
                    m[i] = kind.moments_or_deterministic(pre[i], pre_var[i]).map_err(ctx)?.mean;
                }
                new_means.push(m);
            }
            let (_, shared_cov) = activate(kind, &shared_pre, &c_bar).map_err(ctx)?;
            for (k, pre) in pre_means.into_iter().enumerate() {
                per_sample[k].push(LayerState {
                    pre_mean: pre,
                    pre_var: pre_var.clone(),
                    mean: new_means[k].clone(),
                    cov: Some(shared_cov.clone()),
                });
            }
            avg = average(&new_means);
            means = new_means;
            cov = Some(Covariance::Dense(shared_cov.clone()));
            shared.push(SharedLayer { pre_mean: shared_pre, pre_var, cov: Some(shared_cov) });
        } else {
            let new_means: Vec<DVector<f64>> =
                pre_means.iter().map(|p| deterministic_layer(kind, p)).collect();
            for (k, pre) in pre_means.into_iter().enumerate() {
                per_sample[k].push(LayerState {
                    pre_var: DVector::zeros(pre.len()),
                    pre_mean: pre,
                    mean: new_means[k].clone(),
                    cov: None,
                });
            }
            avg = average(&new_means);
            means = new_means;
            shared.push(SharedLayer {
                pre_var: DVector::zeros(shared_pre.len()),
                pre_mean: shared_pre,
                cov: None,
            });
        }
    }

    let readout = model.readout();
    let shared_cov_y = match cov {
        Some(c) => c.project(&readout.weight, 0.0),
        None => DMatrix::zeros(readout.spec.out_dim, readout.spec.out_dim),
    };
    let samples = xs
        .iter()
        .zip(per_sample)
        .zip(means)
        .map(|((x, hidden), mean)| MomentState {
            input: x.clone(),
            input_cov: input_cov.clone(),
            hidden,
            mu_y: &readout.weight * &mean + &readout.bias,
            cov_y: shared_cov_y.clone(),
        })
        .collect();
    Ok(BatchMomentState { samples, shared, shared_cov_y })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_readout(n: usize, sigma: f64) -> MnnModel {
        MnnModel::new(
            sigma,
            vec![Layer {
                spec: LayerSpec::readout(n, n),
                weight: DMatrix::identity(n, n),
                bias: DVector::zeros(n),
            }],
        )
        .unwrap()
    }

    fn scalar_heaviside(sigma1: f64, sigma2: f64) -> MnnModel {
        MnnModel::new(
            sigma1,
            vec![
                Layer {
                    spec: LayerSpec::hidden(1, 1, ActivationKind::Heaviside, sigma2),
                    weight: DMatrix::from_element(1, 1, 1.0),
                    bias: DVector::zeros(1),
                },
                Layer {
                    spec: LayerSpec::readout(1, 1),
                    weight: DMatrix::from_element(1, 1, 1.0),
                    bias: DVector::zeros(1),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_map_examples() {
        let w = DMatrix::identity(2, 2);
        let b = DVector::zeros(2);
        let mu = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (m, c) = linear_moment_map(&w, &b, 0.0, &mu, &cov).unwrap();
        assert_eq!(m, mu);
        assert_eq!(c, cov);

        let (_, c) = linear_moment_map(&w, &b, 0.2, &mu, &DMatrix::zeros(2, 2)).unwrap();
        assert!((c - DMatrix::identity(2, 2) * 0.04).abs().max() < 1e-17);

        let w = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (m, c) = linear_moment_map(
            &w,
            &DVector::zeros(1),
            0.0,
            &DVector::from_vec(vec![1.0, 2.0]),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(m[0], 3.0);
        assert_eq!(c[(0, 0)], 2.0);
    }

    #[test]
    fn linear_map_rejects_bad_shapes() {
        let w = DMatrix::identity(2, 3);
        let r = linear_moment_map(&w, &DVector::zeros(2), 0.0, &DVector::zeros(2), &DMatrix::zeros(2, 2));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn readout_only_model() {
        let model = identity_readout(3, 0.3);
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let s = forward(&model, &x).unwrap();
        assert_eq!(s.mu_y, x);
        assert!((s.cov_y.clone() - DMatrix::identity(3, 3) * 0.09).abs().max() < 1e-16);
    }

    #[test]
    fn scalar_heaviside_network() {
        let s = forward(&scalar_heaviside(1.0, 0.0), &DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(s.hidden[0].mean[0], 0.5);
        assert_eq!(s.hidden[0].cov.as_ref().unwrap()[(0, 0)], 0.25);
        assert_eq!(s.mu_y[0], 0.5);
        assert_eq!(s.cov_y[(0, 0)], 0.25);
    }

    #[test]
    fn disabled_covariance_gives_conventional_network() {
        let specs = [
            LayerSpec::hidden(3, 4, ActivationKind::Relu, 0.0).without_covariance(),
            LayerSpec::hidden(4, 4, ActivationKind::Relu, 0.0).without_covariance(),
            LayerSpec::readout(4, 2),
        ];
        let model = MnnModel::init(0.0, &specs, 3).unwrap();
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let s = forward(&model, &x).unwrap();
        assert_eq!(s.mu_y, deterministic_forward(&model, &x).unwrap());
        assert!(s.hidden.iter().all(|h| h.cov.is_none()));
        assert!(s.input_cov.is_none());
        assert_eq!(s.cov_y, DMatrix::zeros(2, 2));
    }

    #[test]
    fn mixed_model_seeds_noise_at_boundary() {
        let specs = [
            LayerSpec::hidden(2, 3, ActivationKind::Relu, 0.2).without_covariance(),
            LayerSpec::hidden(3, 3, ActivationKind::Relu, 0.2),
            LayerSpec::readout(3, 1),
        ];
        let model = MnnModel::init(0.5, &specs, 1).unwrap();
        let s = forward(&model, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(s.hidden[1].pre_var.iter().all(|&v| (v - 0.04).abs() < 1e-17));
    }

    #[test]
    fn only_a_prefix_may_disable_covariance() {
        let specs = [
            LayerSpec::hidden(2, 3, ActivationKind::Relu, 0.2),
            LayerSpec::hidden(3, 3, ActivationKind::Relu, 0.2).without_covariance(),
            LayerSpec::readout(3, 1),
        ];
        assert!(MnnModel::init(0.5, &specs, 1).is_err());
    }

    #[test]
    fn mixing_kinds_is_rejected() {
        let specs = [
            LayerSpec::hidden(2, 3, ActivationKind::Relu, 0.2),
            LayerSpec::hidden(3, 3, ActivationKind::Heaviside, 0.2),
            LayerSpec::readout(3, 1),
        ];
        assert!(MnnModel::init(0.5, &specs, 1).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let specs = [LayerSpec::hidden(5, 7, ActivationKind::Relu, 0.2), LayerSpec::readout(7, 3)];
        let a = MnnModel::init(0.2, &specs, 11).unwrap();
        let b = MnnModel::init(0.2, &specs, 11).unwrap();
        let c = MnnModel::init(0.2, &specs, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for layer in &a.layers {
            let bound = (6.0 / (layer.spec.in_dim + layer.spec.out_dim) as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn batch_shared_uses_averaged_mean() {
        let model = MnnModel::new(
            1.0,
            vec![
                Layer {
                    spec: LayerSpec::hidden(2, 2, ActivationKind::Heaviside, 0.0),
                    weight: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 1.0]),
                    bias: DVector::zeros(2),
                },
                Layer {
                    spec: LayerSpec::readout(2, 2),
                    weight: DMatrix::identity(2, 2),
                    bias: DVector::zeros(2),
                },
            ],
        )
        .unwrap();
        let xs = [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0])];
        let batch = forward_batch_shared(&model, &xs).unwrap();
        let centre = forward(&model, &DVector::zeros(2)).unwrap();
        assert_eq!(batch.shared[0].cov, centre.hidden[0].cov);
        assert_eq!(batch.samples[0].cov_y, centre.cov_y);
        // Per-sample means still follow their own inputs.
        let own = forward(&model, &xs[0]).unwrap();
        assert_eq!(batch.samples[0].mu_y, own.mu_y);
    }

    #[test]
    fn batch_of_one_is_bitwise_forward() {
        let specs = [
            LayerSpec::hidden(4, 6, ActivationKind::Relu, 0.2),
            LayerSpec::hidden(6, 5, ActivationKind::Relu, 0.2),
            LayerSpec::readout(5, 3),
        ];
        let model = MnnModel::init(0.3, &specs, 5).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.0]);
        let batch = forward_batch_shared(&model, std::slice::from_ref(&x)).unwrap();
        assert_eq!(batch.samples[0], forward(&model, &x).unwrap());
        assert!(forward_batch_shared(&model, &[]).is_err());
    }
}
