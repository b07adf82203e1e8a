use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::{backward_with_input, GradientSet, LayerGradient};
use super::loss::{loss_gradient, loss_value, LossKind, Target};
use super::optim::{optimizer_step, OptimizerKind, OptimizerState};
use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::network::{activate, Covariance, MnnModel, Propagator};
use crate::uncertainty::{output_entropy, regression_metrics, PredictionMoments, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// Every sample carries its own covariance path.
    PerSample,
    /// One covariance path per minibatch, computed along the batch-averaged means.
    BatchShared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub covariance_mode: CovarianceMode,
    pub seed: u64,
    /// Evaluate on at most this many samples per split after each epoch.
    pub eval_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::CrossEntropy,
            optimizer: OptimizerKind::adam(),
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 64,
            epochs: 10,
            covariance_mode: CovarianceMode::BatchShared,
            seed: 0,
            eval_limit: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        OptimizerState::new(self.optimizer, self.learning_rate, self.weight_decay).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn push(&mut self, epoch: usize, phase: Phase, metric: &str, value: f64) {
        self.records.push(LogRecord { epoch, phase, metric: metric.to_string(), value });
    }

    pub fn push_metrics(&mut self, epoch: usize, phase: Phase, m: &EvalMetrics) {
        for (name, v) in m.named() {
            self.push(epoch, phase, name, v);
        }
    }

    /// Most recent value of a metric.
    pub fn last(&self, phase: Phase, metric: &str) -> Option<f64> {
        self.records.iter().rev().find(|r| r.phase == phase && r.metric == metric).map(|r| r.value)
    }

    /// Tab-separated `epoch split metric value` lines with a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tsplit\tmetric\tvalue\n");
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.phase.name(), r.metric, r.value);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalMetrics {
    pub samples: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
    /// Mean output entropy over correctly and incorrectly classified samples.
    pub entropy_correct: Option<f64>,
    pub entropy_incorrect: Option<f64>,
    /// In original target units when the dataset carries target statistics.
    pub mse: Option<f64>,
    pub log_likelihood: Option<f64>,
}

impl EvalMetrics {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![("loss", self.loss)];
        let opt = [
            ("accuracy", self.accuracy),
            ("entropy_correct", self.entropy_correct),
            ("entropy_incorrect", self.entropy_incorrect),
            ("mse", self.mse),
            ("log_likelihood", self.log_likelihood),
        ];
        v.extend(opt.into_iter().filter_map(|(n, x)| x.map(|x| (n, x))));
        v
    }
}

fn argmax(v: &DVector<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Full moment predictions for the first `limit` samples of `ds`.
pub fn predict(model: &MnnModel, ds: &Dataset, limit: Option<usize>) -> Result<Vec<PredictionMoments>> {
    let n = limit.map_or(ds.len(), |l| l.min(ds.len()));
    let prop = Propagator::new(model);
    (0..n)
        .map(|i| {
            prop.forward(&ds.input_vector(i))
                .map(|s| PredictionMoments::from_state(&s))
                .map_err(|e| e.context(format!("sample {i}")))
        })
        .collect()
}

/// Loss and task metrics of the full moment forward pass on the first `limit` samples.
pub fn evaluate(model: &MnnModel, ds: &Dataset, loss: LossKind, limit: Option<usize>) -> Result<EvalMetrics> {
    if ds.input_dim() != model.input_dim() {
        return Err(Error::Contract(format!(
            "dataset has {} features, model expects {}",
            ds.input_dim(),
            model.input_dim()
        )));
    }
    let preds = predict(model, ds, limit)?;
    if preds.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty dataset".into()));
    }
    let mut total = 0.0;
    for (i, p) in preds.iter().enumerate() {
        total += loss_value(loss, &p.mu_y, &ds.target(i))?;
    }
    let mut m = EvalMetrics { samples: preds.len(), loss: total / preds.len() as f64, ..Default::default() };
    if ds.is_classification() {
        let (mut correct, mut incorrect) = (Vec::new(), Vec::new());
        for (i, p) in preds.iter().enumerate() {
            let h = crate::uncertainty::covariance_entropy(&p.cov_y, DEFAULT_RANK_TOL)?.entropy;
            if Some(argmax(&p.mu_y)) == ds.label(i) {
                correct.push(h);
            } else {
                incorrect.push(h);
            }
        }
        m.accuracy = Some(correct.len() as f64 / preds.len() as f64);
        m.entropy_correct = mean_of(&correct);
        m.entropy_incorrect = mean_of(&incorrect);
    } else {
        let stats = ds.meta.target_stats.as_ref();
        let mut orig = Vec::with_capacity(preds.len());
        let mut targets = Vec::with_capacity(preds.len());
        for (i, p) in preds.iter().enumerate() {
            let mut y = ds.target_values(i).expect("regression targets").to_vec();
            match stats {
                Some(s) => {
                    let (mu, cov) = s.invert_moments(&p.mu_y, &p.cov_y);
                    s.invert(&mut y);
                    orig.push(PredictionMoments { mu_y: mu, cov_y: cov });
                }
                None => orig.push(p.clone()),
            }
            targets.push(DVector::from_vec(y));
        }
        let r = regression_metrics(&orig, &targets, true)?;
        m.mse = Some(r.mse);
        m.log_likelihood = Some(r.log_likelihood);
    }
    Ok(m)
}

/// Batch-averaged loss and gradients with covariances shared across the batch.
///
/// Means run as matrix products over the batch columns. The shared covariance path is
/// evaluated at the batch-averaged means and is not propagated past the last hidden layer,
/// since the loss never reads it.
pub(crate) fn batch_shared_step(
    model: &MnnModel,
    inputs: &DMatrix<f64>,
    targets: &[Target],
    loss: LossKind,
) -> Result<(f64, GradientSet)> {
    let b = inputs.ncols();
    if b == 0 || targets.len() != b || inputs.nrows() != model.input_dim() {
        return Err(Error::Contract("batch inputs and targets do not match the model".into()));
    }
    let hidden = model.hidden_layers();
    let mut cov = if model.input_covariance_enabled() {
        Some(if model.input_sigma > 0.0 {
            Covariance::Isotropic(model.input_sigma * model.input_sigma)
        } else {
            Covariance::Zero
        })
    } else {
        None
    };
    let mut acts = vec![inputs.clone()];
    let mut derivs: Vec<DMatrix<f64>> = Vec::with_capacity(hidden.len());
    let mut avg: DVector<f64> = inputs.column_mean();

    for (l, layer) in hidden.iter().enumerate() {
        let kind = layer.spec.kind.expect("hidden layer has a kind");
        let ctx = |e: Error| e.context(format!("layer {}", l + 1));
        let mut pre = &layer.weight * &acts[l];
        for mut col in pre.column_iter_mut() {
            col += &layer.bias;
        }
        let c_bar = if layer.spec.covariance_enabled {
            Some(cov.take().unwrap_or(Covariance::Zero).project(&layer.weight, layer.spec.sigma))
        } else {
            None
        };
        let var = c_bar.as_ref().map(|c| c.diagonal());
        let mut out = DMatrix::zeros(pre.nrows(), b);
        let mut d = DMatrix::zeros(pre.nrows(), b);
        for k in 0..b {
            for i in 0..pre.nrows() {
                let v = var.as_ref().map_or(0.0, |v| v[i]);
                let (m, g) = kind.mean_and_derivative_or_deterministic(pre[(i, k)], v).map_err(ctx)?;
                out[(i, k)] = m;
                d[(i, k)] = g;
            }
        }
        if let Some(c_bar) = c_bar {
            if l + 1 < hidden.len() {
                let shared_pre = &layer.weight * &avg + &layer.bias;
                let (_, c) = activate(kind, &shared_pre, &c_bar).map_err(ctx)?;
                cov = Some(Covariance::Dense(c));
            }
        }
        avg = out.column_mean();
        acts.push(out);
        derivs.push(d);
    }

    let readout = model.readout();
    let mut y = &readout.weight * &acts[hidden.len()];
    for mut col in y.column_iter_mut() {
        col += &readout.bias;
    }
    let mut g = DMatrix::zeros(y.nrows(), b);
    let mut total = 0.0;
    for (k, t) in targets.iter().enumerate() {
        let (lv, gk) = loss_gradient(loss, &y.column(k).into_owned(), t)?;
        total += lv;
        g.set_column(k, &gk);
    }
    let scale = 1.0 / b as f64;
    g *= scale;

    let mut layers = Vec::with_capacity(model.layers.len());
    layers.push(LayerGradient { weight: &g * acts[hidden.len()].transpose(), bias: g.column_sum() });
    let mut delta = readout.weight.tr_mul(&g);
    for l in (0..hidden.len()).rev() {
        delta.component_mul_assign(&derivs[l]);
        layers.push(LayerGradient { weight: &delta * acts[l].transpose(), bias: delta.column_sum() });
        delta = hidden[l].weight.tr_mul(&delta);
    }
    layers.reverse();
    Ok((total * scale, GradientSet { layers }))
}

/// Batch-averaged loss and gradients with every sample on its own covariance path.
pub(crate) fn per_sample_step(
    model: &MnnModel,
    inputs: &[DVector<f64>],
    targets: &[Target],
    loss: LossKind,
) -> Result<(f64, GradientSet)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Contract("batch inputs and targets do not match".into()));
    }
    let prop = Propagator::new(model);
    let mut grads = GradientSet::zeros_like(model);
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let state = prop.forward(x)?;
        total += loss_value(loss, &state.mu_y, t)?;
        let (g, _) = backward_with_input(model, &state, loss, t)?;
        grads.accumulate(&g);
    }
    let scale = 1.0 / inputs.len() as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

/// Mini-batch training. Returns the per-epoch log; `on_epoch` sees the model after each
/// epoch's evaluation.
pub fn train_with(
    model: &mut MnnModel,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &MnnModel, &TrainingLog),
) -> Result<TrainingLog> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    for ds in std::iter::once(train_ds).chain(test_ds) {
        if ds.input_dim() != model.input_dim() || ds.output_dim() != model.output_dim() {
            return Err(Error::Contract(format!(
                "dataset shape {}->{} does not match model {}->{}",
                ds.input_dim(),
                ds.output_dim(),
                model.input_dim(),
                model.output_dim()
            )));
        }
    }
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();

    for epoch in 1..=cfg.epochs {
        let mut batch_losses = Vec::new();
        for idx in batches(train_ds.len(), cfg.batch_size, &mut rng) {
            let targets: Vec<Target> = idx.iter().map(|&i| train_ds.target(i)).collect();
            let (l, grads) = match cfg.covariance_mode {
                CovarianceMode::BatchShared => {
                    batch_shared_step(model, &train_ds.batch_inputs(&idx), &targets, cfg.loss)?
                }
                CovarianceMode::PerSample => {
                    let xs: Vec<DVector<f64>> = idx.iter().map(|&i| train_ds.input_vector(i)).collect();
                    per_sample_step(model, &xs, &targets, cfg.loss)?
                }
            };
            optimizer_step(&mut opt, model, &grads).map_err(|e| e.context(format!("epoch {epoch}")))?;
            batch_losses.push(l);
        }
        log.push(epoch, Phase::Train, "batch_loss", mean_of(&batch_losses).unwrap_or(f64::NAN));
        let tm = evaluate(model, train_ds, cfg.loss, cfg.eval_limit)?;
        log.push_metrics(epoch, Phase::Train, &tm);
        if let Some(t) = test_ds {
            let m = evaluate(model, t, cfg.loss, cfg.eval_limit)?;
            log.push_metrics(epoch, Phase::Test, &m);
        }
        on_epoch(epoch, model, &log);
    }
    Ok(log)
}

pub fn train(
    model: &mut MnnModel,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    train_with(model, train_ds, test_ds, cfg, |_, _, _| {})
}

/// Output entropy of the full moment forward pass for one input.
pub fn sample_entropy(model: &MnnModel, x: &DVector<f64>) -> Result<f64> {
    let s = crate::network::forward(model, x)?;
    Ok(output_entropy(&s, DEFAULT_RANK_TOL)?.entropy)
}
