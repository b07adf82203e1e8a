//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The process exits 0 even when criteria fail so that the rest of the workspace tests still
//! run; set `ACCEPTANCE_STRICT=1` to turn failures into a nonzero exit. `ACCEPTANCE_ONLY=1,4,9`
//! runs a subset. Criteria 5, 7, 8 and 10 need the datasets fetched by `scripts/fetch_data.sh`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use moment_nn::activation::{
    assemble_covariance, lif_ma, quadrature_ma_piecewise, ActivationKind, GaussianInput, LifParams,
};
use moment_nn::data::{
    distance_to_axes, gen_sign_product, load_csv_regression, load_idx, split, standardize_fit_apply, Dataset,
};
use moment_nn::network::{forward, forward_with_input_cov, LayerSpec, MnnModel, Propagator};
use moment_nn::sde::{compare_mnn_vs_sde, mc_pair_covariance, mc_scalar_ma, SdeConfig};
use moment_nn::smuc::{
    evaluate, gradcheck_frozen_cov, train, train_with, CovarianceMode, GradCheckOptions, LossKind,
    OptimizerKind, Phase, Target, TrainConfig,
};
use moment_nn::uncertainty::{
    deviation_rate, fgsm_attack, layer_entropy, output_entropy, separability, DEFAULT_RANK_TOL,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MU_GRID: [f64; 5] = [-3.0, -1.0, 0.0, 1.0, 3.0];
const C_GRID: [f64; 3] = [0.25, 1.0, 4.0];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self::new(false, detail)
    }
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn grid() -> impl Iterator<Item = GaussianInput> {
    MU_GRID.into_iter().flat_map(|mu| C_GRID.into_iter().map(move |c| GaussianInput::new(mu, c).unwrap()))
}

fn within_budget(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

// ---------------------------------------------------------------------------------------
// Independent LIF oracle. g and h solve g' = 1 + 2xg and h' = 2xh + g², both decaying to 0 as
// x → -∞; RK4 integrates them together with their running integrals, without erfc.

/// State `(g, h, ∫g, ∫h)`.
type LifState = [f64; 4];

fn lif_rhs(x: f64, y: &LifState) -> LifState {
    [1.0 + 2.0 * x * y[0], 2.0 * x * y[1] + y[0] * y[0], y[0], y[1]]
}

/// Advances `y` from `a` to `b` with RK4 steps of at most `max_step`.
fn rk4(y: &mut LifState, a: f64, b: f64, max_step: f64) {
    let n = ((b - a) / max_step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let axpy = |y: &LifState, k: &LifState, c: f64| -> LifState { std::array::from_fn(|i| y[i] + c * k[i]) };
    for s in 0..n {
        let x = a + h * s as f64;
        let k1 = lif_rhs(x, y);
        let k2 = lif_rhs(x + 0.5 * h, &axpy(y, &k1, 0.5 * h));
        let k3 = lif_rhs(x + 0.5 * h, &axpy(y, &k2, 0.5 * h));
        let k4 = lif_rhs(x + h, &axpy(y, &k3, h));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// `(mean, variance)` of the LIF kernel from its integral formulas.
fn oracle_lif(inp: GaussianInput, p: LifParams) -> (f64, f64) {
    let scale = (p.leak * inp.c_bar).sqrt();
    let lb = (p.v_res * p.leak - inp.mu_bar) / scale;
    let ub = (p.v_th * p.leak - inp.mu_bar) / scale;
    // Above these bounds the rate is below e^{-600} and the variance below e^{-300}.
    if ub > 26.0 {
        return (0.0, 0.0);
    }
    // Far below, g ≈ -1/(2x) and h ≈ 0; starting errors decay like e^{x² - x0²}.
    let x0 = lb.min(0.0) - 20.0;
    let mut y: LifState = [-0.5 / x0, 0.0, 0.0, 0.0];
    rk4(&mut y, x0, lb, 1e-3);
    let at_lb = y;
    rk4(&mut y, lb, ub, 1e-4);
    let int_g = y[2] - at_lb[2];
    let mean = 1.0 / (p.t_ref + 2.0 / p.leak * int_g);
    if ub > 18.0 {
        return (mean, 0.0);
    }
    let int_h = y[3] - at_lb[3];
    (mean, 8.0 / (p.leak * p.leak) * mean.powi(3) * int_h)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for kind in [ActivationKind::Heaviside, ActivationKind::Relu] {
        let (h, breaks) = kind.pointwise().unwrap();
        for inp in grid() {
            let a = kind.moments(inp).unwrap();
            let q = quadrature_ma_piecewise(h, breaks, inp).unwrap();
            for (w, e) in worst.iter_mut().zip([a.mean - q.mean, a.variance - q.variance, a.chi - q.chi]) {
                *w = w.max(e.abs());
            }
        }
    }
    let p = LifParams::default();
    let (mut lif_mean, mut lif_var) = (0.0f64, 0.0f64);
    for inp in grid() {
        let a = lif_ma(inp, p).unwrap();
        let (m, v) = oracle_lif(inp, p);
        lif_mean = lif_mean.max((a.mean - m).abs());
        lif_var = lif_var.max((a.variance - v).abs());
    }
    let t = start.elapsed();
    let pass =
        worst.iter().all(|&w| w <= 1e-7) && lif_mean <= 1e-6 && lif_var <= 1e-6 && within_budget(t, 10);
    Outcome::new(
        pass,
        format!(
            "Heaviside/ReLU max |err| mean {:.1e} var {:.1e} chi {:.1e} (tol 1e-7); LIF mean {:.1e} var {:.1e} (tol 1e-6); {:.1}s",
            worst[0],
            worst[1],
            worst[2],
            lif_mean,
            lif_var,
            t.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let n = 1_000_000;
    let (mut worst, mut worst_sample) = (0.0f64, 0.0f64);
    let mut seed = 100;
    for kind in [ActivationKind::Heaviside, ActivationKind::Relu] {
        let (h, breaks) = kind.pointwise().unwrap();
        for inp in grid() {
            let a = kind.moments(inp).unwrap();
            let est = mc_scalar_ma(kind, inp, n, seed).unwrap();
            seed += 1;
            // Standard errors under the analytic law: the variance of (h - m)² gives the
            // spread of the sample variance, plus the (x̄ - m)² term from estimating the mean,
            // which dominates when (h - m)² is constant (Heaviside at mu = 0).
            let m = a.mean;
            let m4 = quadrature_ma_piecewise(|x| (h(x) - m).powi(4), breaks, inp).unwrap().mean;
            let fourth = (m4 - a.variance * a.variance).max(0.0);
            let se_mean = (a.variance / n as f64).sqrt();
            let nf = n as f64;
            let se_var = (fourth / nf + 2.0 * (a.variance / nf).powi(2)).sqrt();
            for (err, se, se_sample) in [
                (est.mean[0] - a.mean, se_mean, est.se_mean[0]),
                (est.cov[(0, 0)] - a.variance, se_var, est.se_cov[(0, 0)]),
            ] {
                let z = if se > 0.0 {
                    err.abs() / se
                } else if err == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
                if se_sample > 0.0 {
                    worst_sample = worst_sample.max(err.abs() / se_sample);
                }
            }
        }
    }
    let t = start.elapsed();
    Outcome::new(
        worst <= 4.0 && within_budget(t, 60),
        format!(
            "max err/SE {worst:.2} (limit 4; {worst_sample:.2} with sample SE where nonzero), n = 1e6, 30 points; {:.1}s",
            t.as_secs_f64()
        ),
    )
}

const PAIR_POINTS: [(f64, f64, f64, f64); 3] =
    [(0.0, 0.0, 1.0, 1.0), (1.0, -1.0, 1.0, 4.0), (0.5, 0.5, 0.25, 1.0)];

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let n = 10_000_000;
    let mut pass = true;
    let mut lines = Vec::new();
    let mut seed = 500;
    for kind in [ActivationKind::Heaviside, ActivationKind::Relu] {
        let (mut small, mut large, mut worst_z) = (0.0f64, 0.0f64, 0.0f64);
        for &(mi, mj, ci, cj) in &PAIR_POINTS {
            for rho in [0.01, 0.2] {
                let off = rho * (ci * cj).sqrt();
                let mu = DVector::from_vec(vec![mi, mj]);
                let cov = DMatrix::from_row_slice(2, 2, &[ci, off, off, cj]);
                let analytic = assemble_covariance(&mu, &cov, kind).unwrap()[(0, 1)];
                let mc = mc_pair_covariance(kind, mi, mj, ci, cj, rho, n, seed).unwrap();
                seed += 1;
                let err = (analytic - mc.cov).abs();
                if rho < 0.1 {
                    worst_z = worst_z.max(err / mc.se);
                    // Error in units of the allowance SE + 10%.
                    let r = err / (mc.se + 0.1 * mc.cov.abs());
                    small = small.max(r);
                    pass &= r <= 1.0;
                } else {
                    let r = err / mc.cov.abs();
                    large = large.max(r);
                    pass &= r <= 0.25;
                }
            }
        }
        lines.push(format!(
            "{}: rho=0.01 err/(SE+10%) {small:.2} (max err/SE {worst_z:.2}), rho=0.2 rel err {large:.3}",
            kind.name()
        ));
    }
    let t = start.elapsed();
    Outcome::new(pass && within_budget(t, 120), format!("{}; {:.1}s", lines.join("; "), t.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut which = String::new();
    let lif = ActivationKind::Lif(LifParams::default());
    for kind in [ActivationKind::Heaviside, ActivationKind::Relu, lif] {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (i, h1, h2, o) = (
                rng.random_range(2..6),
                rng.random_range(3..8),
                rng.random_range(3..8),
                rng.random_range(2..5),
            );
            let specs = [
                LayerSpec::hidden(i, h1, kind, rng.random_range(0.1..0.6)),
                LayerSpec::hidden(h1, h2, kind, rng.random_range(0.1..0.6)),
                LayerSpec::readout(h2, o),
            ];
            let mut model = MnnModel::init(rng.random_range(0.1..0.6), &specs, seed).unwrap();
            if matches!(kind, ActivationKind::Lif(_)) {
                // Rates are O(0.05): downstream gains bring currents back to the threshold range.
                for (l, gain) in model.layers.iter_mut().zip([2.0, 20.0, 20.0]) {
                    l.weight *= gain;
                    l.bias.fill(1.0);
                }
            }
            let x = DVector::from_fn(i, |_, _| rng.random_range(-1.5..1.5));
            let target = Target::Label(rng.random_range(0..o));
            let r = gradcheck_frozen_cov(
                &model,
                &x,
                &target,
                LossKind::CrossEntropy,
                1e-5,
                GradCheckOptions::default(),
            )
            .unwrap();
            worst_abs = worst_abs.max(r.max_abs_error);
            if r.max_rel_error > worst {
                worst = r.max_rel_error;
                which = format!("{} seed {seed}", kind.name());
            }
        }
    }
    let t = start.elapsed();
    Outcome::new(
        worst < 1e-4 && within_budget(t, 60),
        format!(
            "max rel err {worst:.2e} ({which}), max abs err {worst_abs:.2e}, 15 models; {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Pearson correlation of bin means after sorting by `b` into `bins` equal-count bins.
fn binned_pearson(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let mut idx: Vec<usize> = (0..b.len()).collect();
    idx.sort_by(|&i, &j| b[i].total_cmp(&b[j]));
    let (mut ma, mut mb) = (Vec::new(), Vec::new());
    for chunk in idx.chunks(idx.len().div_ceil(bins)) {
        let k = chunk.len() as f64;
        ma.push(chunk.iter().map(|&i| a[i]).sum::<f64>() / k);
        mb.push(chunk.iter().map(|&i| b[i]).sum::<f64>() / k);
    }
    pearson(&ma, &mb)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let train_ds = gen_sign_product(10_000, 1);
    let test_ds = gen_sign_product(2_000, 2);
    let relu = ActivationKind::Relu;
    let widths = [2, 64, 32, 16, 8];
    let mut specs: Vec<LayerSpec> =
        widths.windows(2).map(|w| LayerSpec::hidden(w[0], w[1], relu, 0.5)).collect();
    specs.push(LayerSpec::readout(8, 2));
    let mut model = MnnModel::init(0.5, &specs, 0).unwrap();
    let cfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        optimizer: OptimizerKind::adam(),
        learning_rate: 5e-4,
        weight_decay: 1e-5,
        batch_size: 128,
        epochs: 20,
        covariance_mode: CovarianceMode::PerSample,
        seed: 0,
        eval_limit: Some(2_000),
    };
    let log = match train(&mut model, &train_ds, Some(&test_ds), &cfg) {
        Ok(l) => l,
        Err(e) => return Outcome::fail(format!("training aborted: {e}")),
    };
    let acc = log.last(Phase::Test, "accuracy").unwrap_or(0.0);
    let prop = Propagator::new(&model);
    let (mut ent, mut dist) = (Vec::new(), Vec::new());
    for i in 0..test_ds.len() {
        let s = prop.forward(&test_ds.input_vector(i)).unwrap();
        ent.push(output_entropy(&s, DEFAULT_RANK_TOL).unwrap().entropy);
        dist.push(distance_to_axes(test_ds.input(i)));
    }
    let r = pearson(&ent, &dist);
    let binned = binned_pearson(&ent, &dist, 20);
    let t = start.elapsed();
    Outcome::new(
        acc >= 0.97 && r <= -0.6 && within_budget(t, 300),
        format!(
            "test accuracy {acc:.4} (>= 0.97), Pearson(entropy, distance) {r:.3} (<= -0.6; info: 20-bin averaged {binned:.3}); {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn mnist() -> Result<(Dataset, Dataset), String> {
    let d = data_dir().join("mnist");
    let files = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    if let Some(f) = files.iter().find(|f| !d.join(f).exists()) {
        return Err(format!("data missing: {} (run scripts/fetch_data.sh)", d.join(f).display()));
    }
    let train = load_idx(d.join(files[0]), d.join(files[1])).map_err(|e| e.to_string())?;
    let test = load_idx(d.join(files[2]), d.join(files[3])).map_err(|e| e.to_string())?;
    Ok((train, test))
}

/// 784-128-64-10 trained with batch-shared covariance; returns the model, the per-epoch test
/// accuracies and the training time.
fn train_mnist(
    kind: ActivationKind,
    weight_decay: f64,
    data: &(Dataset, Dataset),
) -> Result<(MnnModel, Vec<f64>, Duration), String> {
    let start = Instant::now();
    let specs = [
        LayerSpec::hidden(784, 128, kind, 0.2),
        LayerSpec::hidden(128, 64, kind, 0.2),
        LayerSpec::readout(64, 10),
    ];
    let mut model = MnnModel::init(0.2, &specs, 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        optimizer: OptimizerKind::adam(),
        learning_rate: 5e-4,
        weight_decay,
        batch_size: 128,
        epochs: 10,
        covariance_mode: CovarianceMode::BatchShared,
        seed: 0,
        eval_limit: Some(10_000),
    };
    let mut accs = Vec::new();
    train_with(&mut model, &data.0, Some(&data.1), &cfg, |epoch, _, log| {
        let a = log.last(Phase::Test, "accuracy").unwrap_or(f64::NAN);
        eprintln!(
            "  [{} epoch {epoch}] test accuracy {a:.4} ({:.0}s)",
            kind.name(),
            start.elapsed().as_secs_f64()
        );
        accs.push(a);
    })
    .map_err(|e| format!("training aborted: {e}"))?;
    Ok((model, accs, start.elapsed()))
}

fn criterion_7(
    relu: &Result<(MnnModel, Vec<f64>, Duration), String>,
    data: &Result<(Dataset, Dataset), String>,
) -> Outcome {
    let (model, accs, train_time) = match relu {
        Ok(v) => v,
        Err(e) => return Outcome::fail(e.clone()),
    };
    let test = &data.as_ref().unwrap().1;
    let start = Instant::now();
    let prop = Propagator::new(model);
    let layers = model.hidden_layers().len() + 1;
    let mut correct = vec![Vec::new(); layers + 1];
    let mut wrong = vec![Vec::new(); layers + 1];
    for i in 0..test.len() {
        let s = prop.forward(&test.input_vector(i)).unwrap();
        let hit = s.mu_y.argmax().0 == test.label(i).unwrap();
        let bucket = if hit { &mut correct } else { &mut wrong };
        for (l, b) in bucket.iter_mut().enumerate().take(layers) {
            b.push(layer_entropy(&s, l, DEFAULT_RANK_TOL).unwrap().entropy);
        }
        bucket[layers].push(output_entropy(&s, DEFAULT_RANK_TOL).unwrap().entropy);
    }
    let seps: Vec<f64> =
        (0..=layers).map(|l| separability(&wrong[l], &correct[l]).map_or(f64::NAN, |s| s.value)).collect();
    let acc = correct[0].len() as f64 / test.len() as f64;
    let (last_hidden, out) = (seps[layers - 1], seps[layers]);
    let t = *train_time + start.elapsed();
    Outcome::new(
        acc >= 0.95 && out > 0.0 && out >= last_hidden && within_budget(t, 1800),
        format!(
            "final test accuracy {acc:.4} (>= 0.95; per epoch {}); entropy separability by layer {} (output > 0 and >= last hidden); {:.0}s",
            accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" "),
            seps.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(" "),
            t.as_secs_f64()
        ),
    )
}

fn criterion_5(
    relu: &Result<(MnnModel, Vec<f64>, Duration), String>,
    data: &Result<(Dataset, Dataset), String>,
) -> Outcome {
    let model = match relu {
        Ok(v) => &v.0,
        Err(e) => return Outcome::fail(e.clone()),
    };
    let test = &data.as_ref().unwrap().1;
    let start = Instant::now();
    let (mut mean_z, mut var_z, mut cov_z) = (0.0f64, 0.0f64, 0.0f64);
    let mut hidden_z = 0.0f64;
    let mut ratios = Vec::new();
    for i in 0..10 {
        let cfg = SdeConfig { seed: i as u64, ..SdeConfig::default() };
        let r = match compare_mnn_vs_sde(model, &test.input_vector(i), &cfg) {
            Ok(r) => r,
            Err(e) => return Outcome::fail(format!("simulation aborted on input {i}: {e}")),
        };
        mean_z = mean_z.max(r.max_normalized(Some("output"), Some("mean")));
        var_z = var_z.max(r.max_normalized(Some("output"), Some("var")));
        cov_z = cov_z.max(r.max_normalized(Some("output"), Some("cov")));
        hidden_z = hidden_z.max(r.max_normalized(Some("layer 1"), None));
        for row in r.rows_where(Some("output"), Some("var")) {
            ratios.push(row.estimate / row.analytic);
        }
        eprintln!(
            "  [sde input {i}] output mean/var/cov max err/SE {mean_z:.1}/{var_z:.1}/{cov_z:.1} ({:.0}s)",
            start.elapsed().as_secs_f64()
        );
    }
    ratios.sort_by(f64::total_cmp);
    let t = start.elapsed();
    Outcome::new(
        mean_z <= 5.0 && var_z <= 5.0 && cov_z <= 6.0 && within_budget(t, 1800),
        format!(
            "output max err/SE mean {mean_z:.1} var {var_z:.1} (limit 5), cov {cov_z:.1} (limit 6); layer 1 max err/SE {hidden_z:.1}; median simulated/analytic output variance {:.3}; {:.0}s",
            ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN),
            t.as_secs_f64()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn attack_sweep(model: &MnnModel, test: &Dataset, eps: &[f64]) -> Vec<(f64, f64)> {
    eps.iter()
        .map(|&e| {
            let mut hits = 0usize;
            let mut ent = Vec::with_capacity(test.len());
            for i in 0..test.len() {
                let label = test.label(i).unwrap();
                let adv = fgsm_attack(model, &test.input_vector(i), label, e).unwrap();
                let s = forward(model, &adv).unwrap();
                hits += (s.mu_y.argmax().0 == label) as usize;
                ent.push(output_entropy(&s, DEFAULT_RANK_TOL).unwrap().entropy);
            }
            (hits as f64 / test.len() as f64, median(ent))
        })
        .collect()
}

fn criterion_8(data: &Result<(Dataset, Dataset), String>) -> Outcome {
    let data = match data {
        Ok(d) => d,
        Err(e) => return Outcome::fail(e.clone()),
    };
    let (model, _, train_time) = match train_mnist(ActivationKind::Heaviside, 1e-4, data) {
        Ok(v) => v,
        Err(e) => return Outcome::fail(e),
    };
    let start = Instant::now();
    let eps = [0.0, 0.05, 0.1, 0.2];
    let plain = attack_sweep(&model, &data.1, &eps);
    let mut defended = model.clone();
    defended.input_sigma = 0.0;
    defended.layers[0].spec.sigma = 0.0;
    let def = attack_sweep(&defended, &data.1, &eps);

    let clean = plain[0].0;
    let decreasing = plain.windows(2).all(|w| w[1].0 < w[0].0);
    let entropy_up = plain.windows(2).all(|w| w[1].1 >= w[0].1);
    let def_acc: Vec<f64> = def.iter().map(|r| r.0).collect();
    let spread = def_acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - def_acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let drop = clean - def_acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let t = train_time + start.elapsed();
    let fmt = |rows: &[(f64, f64)]| {
        rows.iter().map(|r| format!("{:.4}/{:.2}", r.0, r.1)).collect::<Vec<_>>().join(" ")
    };
    Outcome::new(
        clean >= 0.95 && decreasing && entropy_up && spread < 0.005 && drop < 0.01 && within_budget(t, 600),
        format!(
            "accuracy/median entropy at eps 0,0.05,0.1,0.2: {}; defended {}; clean {clean:.4} (>= 0.95), strictly decreasing {decreasing}, entropy nondecreasing {entropy_up}, defended spread {spread:.4} (< 0.005), drop {drop:.4} (< 0.01); {:.0}s",
            fmt(&plain),
            fmt(&def),
            t.as_secs_f64()
        ),
    )
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.05
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let width = 10;
    let mut worst = f64::NEG_INFINITY;
    let mut where_ = String::new();
    let mut checked = 0;
    for m in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + m);
        let sigma = rng.random_range(0.2..1.0);
        let mut specs: Vec<LayerSpec> =
            (0..8).map(|_| LayerSpec::hidden(width, width, ActivationKind::Heaviside, sigma)).collect();
        specs.push(LayerSpec::readout(width, 2));
        let model = MnnModel::init(0.5, &specs, m).unwrap();
        let x = DVector::from_fn(width, |_, _| rng.random_range(-1.0..1.0));
        let (ca, cb) = (random_pd(width, &mut rng), random_pd(width, &mut rng));
        let sa = forward_with_input_cov(&model, &x, ca).unwrap();
        let sb = forward_with_input_cov(&model, &x, cb).unwrap();
        for l in 0..8 {
            let d_in = (sa.layer_cov(l).unwrap() - sb.layer_cov(l).unwrap()).amax();
            let d_out = (sa.layer_cov(l + 1).unwrap() - sb.layer_cov(l + 1).unwrap()).amax();
            if d_in == 0.0 {
                continue;
            }
            // The bound has to hold for whichever input has the smaller λ_min.
            let r = deviation_rate(&sa, &model, l).unwrap().max(deviation_rate(&sb, &model, l).unwrap());
            let excess = (d_out / d_in) / r;
            checked += 1;
            if excess > worst {
                worst = excess;
                where_ = format!("model {m} layer {l}: ratio {:.3e} vs r {r:.3e}", d_out / d_in);
            }
        }
    }
    let t = start.elapsed();
    Outcome::new(
        worst <= 1.0 && within_budget(t, 120),
        format!(
            "{checked} layer maps, max ratio/r {worst:.3} (<= 1; worst {where_}); {:.1}s",
            t.as_secs_f64()
        ),
    )
}

/// Test log-likelihood of one seed, with σ1 picked on a validation split of the training data.
fn uci_seed(ds: &Dataset, target: &str, seed: u64) -> Result<(f64, f64), String> {
    let s = split(ds, 0.1, seed).map_err(|e| e.to_string())?;
    let fit = |data: &Dataset, sigma1: f64| -> Result<MnnModel, String> {
        let specs =
            [LayerSpec::hidden(data.input_dim(), 50, ActivationKind::Relu, 0.0), LayerSpec::readout(50, 1)];
        let mut model = MnnModel::init(sigma1, &specs, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            loss: LossKind::Mse,
            optimizer: OptimizerKind::adam(),
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 128,
            epochs: 500,
            covariance_mode: CovarianceMode::PerSample,
            seed,
            eval_limit: Some(1),
        };
        train(&mut model, data, None, &cfg).map_err(|e| format!("{target} seed {seed}: {e}"))?;
        Ok(model)
    };
    let inner = split(&s.train, 0.1, seed + 1000).map_err(|e| e.to_string())?;
    let inner = standardize_fit_apply(&inner.train, &[&inner.test]);
    let mut best = (f64::NEG_INFINITY, 0.05);
    for sigma1 in [0.02, 0.05, 0.1] {
        let m = fit(&inner.train, sigma1)?;
        let ll = evaluate(&m, &inner.others[0], LossKind::Mse, None)
            .map_err(|e| e.to_string())?
            .log_likelihood
            .unwrap();
        if ll > best.0 {
            best = (ll, sigma1);
        }
    }
    let full = standardize_fit_apply(&s.train, &[&s.test]);
    let m = fit(&full.train, best.1)?;
    let ll = evaluate(&m, &full.others[0], LossKind::Mse, None)
        .map_err(|e| e.to_string())?
        .log_likelihood
        .unwrap();
    Ok((ll, best.1))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, file, target, reference) in
        [("boston", "boston.csv", "MEDV", -2.44), ("yacht", "yacht.csv", "residuary_resistance", -0.29)]
    {
        let path = data_dir().join("uci").join(file);
        if !path.exists() {
            pass = false;
            parts.push(format!("{name}: data missing: {} (see scripts/fetch_data.sh)", path.display()));
            continue;
        }
        let ds = match load_csv_regression(&path, &[target]) {
            Ok(d) => d,
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
                continue;
            }
        };
        let mut lls = Vec::new();
        let mut sigmas = Vec::new();
        for seed in 0..5 {
            match uci_seed(&ds, target, seed) {
                Ok((ll, s)) => {
                    lls.push(ll);
                    sigmas.push(s);
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("{name}: {e}"));
                    break;
                }
            }
        }
        if lls.len() == 5 {
            let mean = lls.iter().sum::<f64>() / 5.0;
            let ok = (mean - reference).abs() <= 0.5;
            pass &= ok;
            parts.push(format!(
                "{name}: mean test LL {mean:.3} vs {reference} (±0.5) over seeds [{}], sigma1 {:?}",
                lls.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", "),
                sigmas
            ));
        }
    }
    let t = start.elapsed();
    Outcome::new(pass && within_budget(t, 900), format!("{}; {:.0}s", parts.join("; "), t.as_secs_f64()))
}

fn main() {
    // Ignore libtest arguments such as --nocapture or a name filter.
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |k: u32| only.as_ref().is_none_or(|o| o.contains(&k));

    let titles = [
        (1, "kernels vs quadrature"),
        (2, "kernels vs Monte Carlo"),
        (3, "linear-response covariance"),
        (4, "SMUC gradient check"),
        (5, "moment network vs SDE"),
        (6, "toy 2D task"),
        (7, "MNIST ReLU, batch-shared"),
        (8, "FGSM and defense"),
        (9, "covariance contraction"),
        (10, "UCI regression"),
    ];
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |k: u32, title: &'static str, o: Outcome| {
        println!("[{}] {k:>2} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, title, o));
    };
    let title = |k: u32| titles[k as usize - 1].1;

    let simple: [(u32, fn() -> Outcome); 5] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (9, criterion_9)];
    for (k, f) in simple {
        if wanted(k) {
            report(k, title(k), f());
        }
    }
    if wanted(6) {
        report(6, title(6), criterion_6());
    }
    if wanted(5) || wanted(7) || wanted(8) {
        let data = mnist();
        if wanted(5) || wanted(7) {
            let relu =
                data.as_ref().map_err(Clone::clone).and_then(|d| train_mnist(ActivationKind::Relu, 1e-3, d));
            if wanted(7) {
                report(7, title(7), criterion_7(&relu, &data));
            }
            if wanted(5) {
                report(5, title(5), criterion_5(&relu, &data));
            }
        }
        if wanted(8) {
            report(8, title(8), criterion_8(&data));
        }
    }
    if wanted(10) {
        report(10, title(10), criterion_10());
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
