//! Monte-Carlo ground truth: Euler–Maruyama simulation of the stochastic network whose
//! stationary moments the moment network approximates, plus scalar and pair sampling
//! estimators for single activations.
//!
//! The simulated system, with unit leak and signals `v = h(x)`:
//!
//! ```text
//! dx⁽¹⁾ = (−x⁽¹⁾ + x) dt + √2 σ₁ dB,                 v⁽¹⁾ = x⁽¹⁾
//! dx⁽ˡ⁾ = (−x⁽ˡ⁾ + W v⁽ˡ⁻¹⁾ + b) dt + √2 σ_l dB,     v⁽ˡ⁾ = h(x⁽ˡ⁾)
//! dy    = (−y + W v⁽ᴸ⁾ + b) dt
//! ```

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::activation::{ActivationKind, GaussianInput};
use crate::error::{Error, Result};
use crate::network::{deterministic_forward, forward, MnnModel};
use crate::report::MomentReport;

/// Layers wider than this keep only variances, not full covariances.
pub const FULL_COVARIANCE_MAX_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub dt: f64,
    /// Simulated time discarded before recording.
    pub burn_in: f64,
    /// Simulated time recorded after burn-in.
    pub horizon: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Record every this many steps.
    pub record_stride: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { dt: 0.01, burn_in: 20.0, horizon: 100.0, n_trajectories: 100, seed: 0, record_stride: 10 }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return Err(Error::Contract(format!("dt must lie in (0, 0.05], got {}", self.dt)));
        }
        if !(self.burn_in >= 0.0
            && self.burn_in.is_finite()
            && self.horizon >= 0.0
            && self.horizon.is_finite())
        {
            return Err(Error::Contract("burn_in and horizon must be finite and >= 0".into()));
        }
        if self.n_trajectories < 2 {
            return Err(Error::Contract("standard errors need at least 2 trajectories".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Contract("record_stride must be at least 1".into()));
        }
        if self.recorded_samples() == 0 {
            return Err(Error::Contract("horizon is too short to record a single sample".into()));
        }
        Ok(())
    }

    fn burn_steps(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }

    fn record_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Samples recorded per trajectory.
    pub fn recorded_samples(&self) -> usize {
        self.record_steps().div_ceil(self.record_stride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McMomentEstimate {
    pub mean: DVector<f64>,
    /// Pooled over time and trajectories; diagonal only when `full_covariance` is false.
    pub cov: DMatrix<f64>,
    pub se_mean: DVector<f64>,
    pub se_cov: DMatrix<f64>,
    /// Number of independent replicates behind the standard errors.
    pub n_effective: f64,
    pub full_covariance: bool,
}

impl McMomentEstimate {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Signal layers: index 0 is the noisy input layer, then each hidden layer.
    pub layers: Vec<McMomentEstimate>,
    pub output: McMomentEstimate,
    pub steps: usize,
    pub samples_per_trajectory: usize,
    /// Output of trajectory 0 at roughly unit time intervals.
    pub output_trace: Vec<(f64, DVector<f64>)>,
}

/// Per-trajectory running sums of `v` and `v vᵀ` (or `v²`).
struct Accumulator {
    sum: DMatrix<f64>,
    full: Option<Vec<DMatrix<f64>>>,
    diag: DMatrix<f64>,
    count: usize,
}

impl Accumulator {
    fn new(dim: usize, k: usize) -> Self {
        let full = (dim <= FULL_COVARIANCE_MAX_DIM).then(|| vec![DMatrix::zeros(dim, dim); k]);
        Self { sum: DMatrix::zeros(dim, k), full, diag: DMatrix::zeros(dim, k), count: 0 }
    }

    fn record(&mut self, v: &DMatrix<f64>) {
        self.sum += v;
        match &mut self.full {
            Some(sq) => {
                for (k, s) in sq.iter_mut().enumerate() {
                    let c = v.column(k);
                    s.ger(1.0, &c, &c, 1.0);
                }
            }
            None => self.diag += v.component_mul(v),
        }
        self.count += 1;
    }

    fn finish(self) -> McMomentEstimate {
        let (dim, k) = self.sum.shape();
        let n = self.count as f64;
        let kf = k as f64;
        let means = &self.sum / n;
        let mean = means.column_mean();
        let mut se_mean = DVector::zeros(dim);
        for i in 0..dim {
            let row = means.row(i);
            let var = row.iter().map(|m| (m - mean[i]).powi(2)).sum::<f64>() / (kf - 1.0);
            se_mean[i] = (var / kf).sqrt();
        }

        // Per-trajectory covariances about their own means, then their spread.
        let mut second = DMatrix::zeros(dim, dim);
        let mut c_sum = DMatrix::zeros(dim, dim);
        let mut c_sq = DMatrix::zeros(dim, dim);
        for t in 0..k {
            let m = means.column(t);
            let mut s = match &self.full {
                Some(sq) => &sq[t] / n,
                None => DMatrix::from_diagonal(&(self.diag.column(t) / n)),
            };
            second += &s;
            match &self.full {
                Some(_) => s.ger(-1.0, &m, &m, 1.0),
                None => {
                    for i in 0..dim {
                        s[(i, i)] -= m[i] * m[i];
                    }
                }
            }
            c_sum += &s;
            c_sq += s.component_mul(&s);
        }
        let mut cov = second / kf;
        cov.ger(-1.0, &mean, &mean, 1.0);
        if self.full.is_none() {
            cov = DMatrix::from_diagonal(&cov.diagonal());
        }
        cov = (&cov + cov.transpose()) * 0.5;
        let c_mean = &c_sum / kf;
        let se_cov = DMatrix::from_fn(dim, dim, |i, j| {
            let var = ((c_sq[(i, j)] - kf * c_mean[(i, j)].powi(2)) / (kf - 1.0)).max(0.0);
            (var / kf).sqrt()
        });
        McMomentEstimate {
            mean,
            cov,
            se_mean,
            se_cov: (&se_cov + se_cov.transpose()) * 0.5,
            n_effective: kf,
            full_covariance: self.full.is_some(),
        }
    }
}

fn trajectory_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k as u64);
    r
}

fn check_simulable(model: &MnnModel) -> Result<()> {
    for (l, layer) in model.hidden_layers().iter().enumerate() {
        match layer.spec.kind {
            Some(ActivationKind::Heaviside | ActivationKind::Relu) => {}
            Some(other) => {
                return Err(Error::Contract(format!(
                    "layer {}: {} networks cannot be simulated",
                    l + 1,
                    other.name()
                )))
            }
            None => unreachable!("hidden layers have a kind"),
        }
        if !layer.spec.covariance_enabled {
            return Err(Error::Contract(format!(
                "layer {} has covariance disabled; the simulation has no deterministic counterpart",
                l + 1
            )));
        }
    }
    Ok(())
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut c in m.column_iter_mut() {
        c += b;
    }
}

/// Euler–Maruyama simulation of the stochastic network driven by input `x`, started at the
/// deterministic fixed point, with stationary moments estimated by pooling time samples
/// after burn-in across trajectories. Standard errors come from the spread between
/// trajectories only.
pub fn simulate_network(model: &MnnModel, x: &DVector<f64>, cfg: &SdeConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    check_simulable(model)?;
    let k = cfg.n_trajectories;
    let hidden = model.hidden_layers();
    let readout = model.readout();

    // Start every trajectory at the noiseless steady state.
    let mut states: Vec<DMatrix<f64>> = Vec::with_capacity(hidden.len() + 1);
    states.push(DMatrix::from_fn(x.len(), k, |i, _| x[i]));
    let mut v = x.clone();
    for layer in hidden {
        let kind = layer.spec.kind.expect("hidden layer has a kind");
        let pre = &layer.weight * &v + &layer.bias;
        states.push(DMatrix::from_fn(pre.len(), k, |i, _| pre[i]));
        v = pre.map(|p| kind.deterministic(p));
    }
    let y0 = deterministic_forward(model, x)?;
    let mut y = DMatrix::from_fn(y0.len(), k, |i, _| y0[i]);

    let sigmas: Vec<f64> =
        std::iter::once(model.input_sigma).chain(hidden.iter().map(|l| l.spec.sigma)).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|t| trajectory_rng(cfg.seed, t)).collect();
    let mut noise: Vec<DMatrix<f64>> = states.iter().map(|s| DMatrix::zeros(s.nrows(), k)).collect();
    let mut acc: Vec<Accumulator> = states.iter().map(|s| Accumulator::new(s.nrows(), k)).collect();
    let mut acc_y = Accumulator::new(y.nrows(), k);

    let burn = cfg.burn_steps();
    let total = burn + cfg.record_steps();
    let dt = cfg.dt;
    let sqrt_2dt = (2.0 * dt).sqrt();
    let trace_every = ((1.0 / dt).round() as usize).max(1);
    let mut trace = Vec::new();
    let mut signals: Vec<DMatrix<f64>> = states.clone();

    for step in 0..total {
        signals[0].copy_from(&states[0]);
        for (l, layer) in hidden.iter().enumerate() {
            let kind = layer.spec.kind.expect("hidden layer has a kind");
            let (src, dst) = (&states[l + 1], &mut signals[l + 1]);
            dst.zip_apply(src, |o, s| *o = kind.deterministic(s));
        }

        if step % 100 == 0 || step + 1 == total {
            let finite = states.iter().chain(std::iter::once(&y)).all(|s| s.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::Numeric(format!(
                    "non-finite state at step {step} (t = {})",
                    step as f64 * dt
                )));
            }
        }
        if step >= burn && (step - burn) % cfg.record_stride == 0 {
            for (a, s) in acc.iter_mut().zip(&signals) {
                a.record(s);
            }
            acc_y.record(&y);
        }
        if step % trace_every == 0 {
            trace.push((step as f64 * dt, y.column(0).into_owned()));
        }

        let mut drives = Vec::with_capacity(hidden.len());
        for (l, layer) in hidden.iter().enumerate() {
            let mut d = &layer.weight * &signals[l];
            add_bias(&mut d, &layer.bias);
            drives.push(d);
        }
        let mut dy = &readout.weight * &signals[hidden.len()];
        add_bias(&mut dy, &readout.bias);

        for (t, rng) in rngs.iter_mut().enumerate() {
            for (n, s) in noise.iter_mut().zip(&sigmas) {
                if *s > 0.0 {
                    for v in n.column_mut(t).iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                }
            }
        }

        // Input layer relaxes towards x.
        {
            let s0 = sigmas[0] * sqrt_2dt;
            let st = &mut states[0];
            for t in 0..k {
                for i in 0..x.len() {
                    let cur = st[(i, t)];
                    st[(i, t)] = cur + dt * (x[i] - cur) + s0 * noise[0][(i, t)];
                }
            }
        }
        for (l, d) in drives.into_iter().enumerate() {
            let s = sigmas[l + 1] * sqrt_2dt;
            let st = &mut states[l + 1];
            let nz = &noise[l + 1];
            for ((cur, drive), xi) in st.iter_mut().zip(d.iter()).zip(nz.iter()) {
                *cur += dt * (drive - *cur) + s * xi;
            }
        }
        y.zip_apply(&dy, |cur, drive| *cur += dt * (drive - *cur));
    }

    Ok(SimulationResult {
        layers: acc.into_iter().map(Accumulator::finish).collect(),
        output: acc_y.finish(),
        steps: total,
        samples_per_trajectory: cfg.recorded_samples(),
        output_trace: trace,
    })
}

fn compare_block(
    report: &mut MomentReport,
    group: &str,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    est: &McMomentEstimate,
) {
    for i in 0..mean.len() {
        report.push(group, "mean", i.to_string(), mean[i], est.mean[i], est.se_mean[i]);
    }
    for i in 0..mean.len() {
        report.push(group, "var", i.to_string(), cov[(i, i)], est.cov[(i, i)], est.se_cov[(i, i)]);
    }
    if est.full_covariance {
        for i in 0..mean.len() {
            for j in i + 1..mean.len() {
                report.push(
                    group,
                    "cov",
                    format!("{i},{j}"),
                    cov[(i, j)],
                    est.cov[(i, j)],
                    est.se_cov[(i, j)],
                );
            }
        }
    }
}

/// Moment network forward pass against simulation, layer by layer. Groups are
/// `layer 1` (the noisy input), `layer 2`, … for hidden layers, and `output`.
pub fn compare_mnn_vs_sde(model: &MnnModel, x: &DVector<f64>, cfg: &SdeConfig) -> Result<MomentReport> {
    let state = forward(model, x)?;
    let sim = simulate_network(model, x, cfg)?;
    let mut report = MomentReport::new("moment network vs Euler-Maruyama simulation");
    describe_config(&mut report, cfg);
    for l in 0..state.num_layers() {
        let cov = state.layer_cov(l).unwrap_or_else(|| DMatrix::zeros(x.len(), x.len()));
        compare_block(&mut report, &format!("layer {}", l + 1), state.layer_mean(l), &cov, &sim.layers[l]);
    }
    compare_block(&mut report, "output", &state.mu_y, &state.cov_y, &sim.output);
    Ok(report)
}

pub fn describe_config(report: &mut MomentReport, cfg: &SdeConfig) {
    report.meta("estimator", "time average within trajectories, pooled across trajectories");
    report.meta("standard_error", "spread of per-trajectory averages across trajectories");
    report.meta("dt", cfg.dt);
    report.meta("burn_in", cfg.burn_in);
    report.meta("horizon", cfg.horizon);
    report.meta("n_trajectories", cfg.n_trajectories);
    report.meta("record_stride", cfg.record_stride);
    report.meta("seed", cfg.seed);
}

fn pointwise(kind: ActivationKind) -> Result<fn(f64) -> f64> {
    kind.pointwise()
        .map(|(h, _)| h)
        .ok_or_else(|| Error::Contract(format!("{} has no pointwise nonlinearity to sample", kind.name())))
}

/// Sample mean and variance of `h(x)` for `x ~ N(μ̄, C̄)` with standard errors.
pub fn mc_scalar_ma(
    kind: ActivationKind,
    inp: GaussianInput,
    n: usize,
    seed: u64,
) -> Result<McMomentEstimate> {
    if n < 1000 {
        return Err(Error::Contract(format!("need at least 1000 samples, got {n}")));
    }
    let h = pointwise(kind)?;
    let s = inp.c_bar.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| h(inp.mu_bar + s * rng.sample::<f64, _>(StandardNormal))).collect();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in &xs {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    let var = m2 / (nf - 1.0);
    let m4 = m4 / nf;
    let se_var = ((m4 - (m2 / nf).powi(2)).max(0.0) / nf).sqrt();
    Ok(McMomentEstimate {
        mean: DVector::from_element(1, mean),
        cov: DMatrix::from_element(1, 1, var),
        se_mean: DVector::from_element(1, (var / nf).sqrt()),
        se_cov: DMatrix::from_element(1, 1, se_var),
        n_effective: nf,
        full_covariance: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCovariance {
    pub cov: f64,
    pub se: f64,
    pub n: usize,
}

/// Sample covariance of `(h(x_i), h(x_j))` for a bivariate Gaussian with correlation `rho`.
///
/// Two passes over the same random stream: means first, then centered products, so that
/// no samples are stored.
#[allow(clippy::too_many_arguments)]
pub fn mc_pair_covariance(
    kind: ActivationKind,
    mu_i: f64,
    mu_j: f64,
    c_i: f64,
    c_j: f64,
    rho: f64,
    n: usize,
    seed: u64,
) -> Result<PairCovariance> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    if !(c_i > 0.0 && c_j > 0.0) {
        return Err(Error::Domain(format!("variances must be positive, got {c_i}, {c_j}")));
    }
    if n < 2 {
        return Err(Error::Contract("need at least 2 samples".into()));
    }
    let h = pointwise(kind)?;
    let (si, sj) = (c_i.sqrt(), c_j.sqrt());
    let ortho = (1.0 - rho * rho).sqrt();
    let draw = |rng: &mut ChaCha8Rng| {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        (h(mu_i + si * z1), h(mu_j + sj * (rho * z1 + ortho * z2)))
    };
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sa, mut sb) = (0.0, 0.0);
    for _ in 0..n {
        let (a, b) = draw(&mut rng);
        sa += a;
        sb += b;
    }
    let (ma, mb) = (sa / nf, sb / nf);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sp, mut sp2) = (0.0, 0.0);
    for _ in 0..n {
        let (a, b) = draw(&mut rng);
        let p = (a - ma) * (b - mb);
        sp += p;
        sp2 += p * p;
    }
    let mean_p = sp / nf;
    let var_p = ((sp2 - nf * mean_p * mean_p) / (nf - 1.0)).max(0.0);
    Ok(PairCovariance { cov: sp / (nf - 1.0), se: (var_p / nf).sqrt(), n })
}
