//! One function per subcommand. Each writes its artifacts and a config echo into the
//! output directory and returns a short human-readable summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use moment_nn::activation::{assemble_covariance, quadrature_ma_piecewise, ActivationKind, GaussianInput};
use moment_nn::checkpoint::{load_model, save_model};
use moment_nn::data::{
    gen_sign_product, load_csv_regression, load_idx, parse_idx_images, split, standardize_fit_apply, Dataset,
};
use moment_nn::network::{forward, MnnModel};
use moment_nn::report::MomentReport;
use moment_nn::sde::{
    compare_mnn_vs_sde, describe_config, mc_pair_covariance, mc_scalar_ma, simulate_network,
};
use moment_nn::smuc::{evaluate, train_with, Phase, TrainingLog};
use moment_nn::uncertainty::{
    fgsm_attack, layer_entropy, msp, output_entropy, separability, softmax_entropy, DEFAULT_RANK_TOL,
};
use nalgebra::{DMatrix, DVector};

use crate::config::{KindName, RunConfig, Task};
use crate::{io_err, CliError};

type Result<T> = std::result::Result<T, CliError>;

/// Points for the pairwise linear-response check: (μ̄_i, μ̄_j, C̄_i, C̄_j).
pub const PAIR_POINTS: [(f64, f64, f64, f64); 3] =
    [(0.0, 0.0, 1.0, 1.0), (1.0, -1.0, 1.0, 4.0), (0.5, 0.5, 0.25, 1.0)];

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_err(&path, e))
}

fn prepare_out(cfg: &RunConfig, command: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    write(&cfg.out_dir, &format!("{command}.config.toml"), &cfg.to_toml())
}

fn kind_of(k: KindName, cfg: &RunConfig) -> ActivationKind {
    let mut m = cfg.model.clone();
    m.kind = k;
    m.activation()
}

fn first_n(ds: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(n) if n < ds.len() => ds.subset(&(0..n).collect::<Vec<_>>()),
        _ => ds,
    }
}

/// Train and test splits for the configured task.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    cfg.check_data_files()?;
    let d = &cfg.data;
    let (train, test) = match cfg.task {
        Task::Classify => {
            let p = |o: &Option<PathBuf>| o.clone().expect("checked above");
            let train = load_idx(p(&d.train_images), p(&d.train_labels))?;
            let test = load_idx(p(&d.test_images), p(&d.test_labels))?;
            (train, test)
        }
        Task::Regress => {
            let names: Vec<&str> = d.targets.iter().map(String::as_str).collect();
            let ds = load_csv_regression(d.csv.as_ref().expect("checked above"), &names)?;
            let s = split(&ds, d.test_fraction, cfg.seed)?;
            if d.standardize {
                let mut st = standardize_fit_apply(&s.train, &[&s.test]);
                (st.train, st.others.remove(0))
            } else {
                (s.train, s.test)
            }
        }
        Task::Toy2d => (
            gen_sign_product(d.n_train, cfg.seed),
            gen_sign_product(d.n_test, cfg.seed.wrapping_add(0x9e37_79b9)),
        ),
    };
    Ok((first_n(train, d.train_limit), first_n(test, d.test_limit)))
}

fn load_checkpoint(cfg: &RunConfig) -> Result<MnnModel> {
    let path = cfg.checkpoint_path();
    if !path.exists() {
        return Err(CliError::User(format!(
            "checkpoint {} does not exist; run `mnn train` first or set `checkpoint`",
            path.display()
        )));
    }
    Ok(load_model(&path)?)
}

fn check_shapes(model: &MnnModel, ds: &Dataset) -> Result<()> {
    if model.input_dim() != ds.input_dim() || model.output_dim() != ds.output_dim() {
        return Err(CliError::User(format!(
            "checkpoint is {}->{} but the dataset is {}->{}",
            model.input_dim(),
            model.output_dim(),
            ds.input_dim(),
            ds.output_dim()
        )));
    }
    Ok(())
}

/// Per-epoch test accuracy and mean output entropy split by correctness.
pub fn entropy_vs_epoch(log: &TrainingLog) -> String {
    let mut out = String::from("epoch\taccuracy\tentropy_correct\tentropy_incorrect\n");
    let epochs = log.records.iter().map(|r| r.epoch).max().unwrap_or(0);
    let phase = if log.records.iter().any(|r| r.phase == Phase::Test) { Phase::Test } else { Phase::Train };
    for e in 1..=epochs {
        let get = |m: &str| {
            log.records
                .iter()
                .find(|r| r.epoch == e && r.phase == phase && r.metric == m)
                .map_or(f64::NAN, |r| r.value)
        };
        let _ = writeln!(
            out,
            "{e}\t{}\t{}\t{}",
            get("accuracy"),
            get("entropy_correct"),
            get("entropy_incorrect")
        );
    }
    out
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let (train, test) = load_data(cfg)?;
    let specs = cfg.model.layer_specs(train.input_dim(), train.output_dim())?;
    let mut model = MnnModel::init(cfg.model.input_sigma, &specs, cfg.seed)?;
    prepare_out(cfg, "train")?;
    let tc = cfg.train_config();
    let mut progress = String::new();
    let log = train_with(&mut model, &train, Some(&test), &tc, |epoch, _, log| {
        let line = log
            .records
            .iter()
            .filter(|r| r.epoch == epoch && r.phase == Phase::Test)
            .map(|r| format!("{}={:.4}", r.metric, r.value))
            .collect::<Vec<_>>()
            .join(" ");
        eprintln!("epoch {epoch}: {line}");
        progress = line;
    })?;
    save_model(&model, cfg.checkpoint_path())?;
    write(&cfg.out_dir, "training_log.tsv", &log.to_tsv())?;
    if train.is_classification() {
        write(&cfg.out_dir, "entropy_vs_epoch.tsv", &entropy_vs_epoch(&log))?;
    }
    Ok(format!(
        "trained {} epochs; final test {progress}\ncheckpoint: {}",
        tc.epochs,
        cfg.checkpoint_path().display()
    ))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let model = load_checkpoint(cfg)?;
    let (_, test) = load_data(cfg)?;
    check_shapes(&model, &test)?;
    prepare_out(cfg, "eval")?;
    let m = evaluate(&model, &test, cfg.loss(), None)?;
    let mut tsv = String::from("metric\tvalue\n");
    let _ = writeln!(tsv, "samples\t{}", m.samples);
    for (k, v) in m.named() {
        let _ = writeln!(tsv, "{k}\t{v}");
    }
    write(&cfg.out_dir, "eval.tsv", &tsv)?;
    Ok(tsv)
}

/// Analytic kernels against piecewise quadrature and Monte Carlo on the configured grid.
pub fn cmd_verify_ma(cfg: &RunConfig) -> Result<String> {
    prepare_out(cfg, "verify-ma")?;
    let v = &cfg.verify;
    let mut mc = MomentReport::new("moment activations vs Monte Carlo");
    mc.meta("samples", v.mc_samples);
    mc.meta("pair_samples", v.pair_samples);
    mc.meta("seed", cfg.seed);
    let mut quad = String::from("kind\tmu\tc\tquantity\tanalytic\tquadrature\tabs_error\n");
    let mut max_quad: f64 = 0.0;
    let mut stream = cfg.seed;
    for &k in &v.kinds {
        let kind = kind_of(k, cfg);
        let Some((h, breaks)) = kind.pointwise() else {
            eprintln!("verify-ma: {} has no pointwise form; skipped", kind.name());
            continue;
        };
        for &mu in &v.mu {
            for &c in &v.c {
                let inp = GaussianInput::new(mu, c)?;
                let a = kind.moments(inp)?;
                let q = quadrature_ma_piecewise(h, breaks, inp)?;
                for (name, x, y) in
                    [("mean", a.mean, q.mean), ("variance", a.variance, q.variance), ("chi", a.chi, q.chi)]
                {
                    max_quad = max_quad.max((x - y).abs());
                    let _ = writeln!(
                        quad,
                        "{}\t{mu}\t{c}\t{name}\t{x:e}\t{y:e}\t{:e}",
                        kind.name(),
                        (x - y).abs()
                    );
                }
                let est = mc_scalar_ma(kind, inp, v.mc_samples, stream)?;
                stream = stream.wrapping_add(1);
                let idx = format!("mu={mu},c={c}");
                mc.push(kind.name(), "mean", idx.clone(), a.mean, est.mean[0], est.se_mean[0]);
                mc.push(kind.name(), "variance", idx, a.variance, est.cov[(0, 0)], est.se_cov[(0, 0)]);
            }
        }
        for &rho in &v.rho {
            for &(mi, mj, ci, cj) in &PAIR_POINTS {
                let mu = DVector::from_vec(vec![mi, mj]);
                let off = rho * (ci * cj).sqrt();
                let cov = DMatrix::from_row_slice(2, 2, &[ci, off, off, cj]);
                let analytic = assemble_covariance(&mu, &cov, kind)?[(0, 1)];
                let est = mc_pair_covariance(kind, mi, mj, ci, cj, rho, v.pair_samples, stream)?;
                stream = stream.wrapping_add(1);
                let idx = format!("rho={rho},mu=({mi},{mj}),c=({ci},{cj})");
                mc.push(&format!("{} pair", kind.name()), "cov", idx, analytic, est.cov, est.se);
            }
        }
    }
    mc.write(&cfg.out_dir, "verify_ma")?;
    write(&cfg.out_dir, "verify_ma_quadrature.tsv", &quad)?;
    Ok(format!("{}max |analytic - quadrature| = {max_quad:e}\n", mc.to_text()))
}

/// Moment network against Euler–Maruyama simulation on the first `n_inputs` test inputs.
pub fn cmd_verify_net(cfg: &RunConfig) -> Result<String> {
    let model = load_checkpoint(cfg)?;
    let (_, test) = load_data(cfg)?;
    check_shapes(&model, &test)?;
    prepare_out(cfg, "verify-net")?;
    let sde = cfg.sde_config();
    let n = cfg.verify.n_inputs.min(test.len());
    let mut all = MomentReport::new("moment network vs SDE");
    describe_config(&mut all, &sde);
    all.meta("inputs", n);
    for i in 0..n {
        let mut sc = sde;
        sc.seed = sde.seed.wrapping_add(i as u64);
        let r = compare_mnn_vs_sde(&model, &test.input_vector(i), &sc)?;
        eprintln!("input {i}: max err/se = {:.2}", r.max_normalized(None, None));
        for row in r.rows {
            all.push(
                &row.group,
                &row.quantity,
                format!("input{i}:{}", row.index),
                row.analytic,
                row.estimate,
                row.se,
            );
        }
    }
    all.write(&cfg.out_dir, "verify_net")?;
    Ok(all.to_text())
}

struct SampleUq {
    correct: bool,
    layer_entropy: Vec<f64>,
    entropy: f64,
    msp: f64,
    softmax_entropy: f64,
}

fn uq_sample(model: &MnnModel, x: &DVector<f64>, label: Option<usize>) -> Result<(SampleUq, usize)> {
    let s = forward(model, x)?;
    let pred = s.mu_y.argmax().0;
    let layer_entropy = (0..s.num_layers())
        .map(|l| layer_entropy(&s, l, DEFAULT_RANK_TOL).map_or(f64::NAN, |e| e.entropy))
        .collect();
    Ok((
        SampleUq {
            correct: label == Some(pred),
            layer_entropy,
            entropy: output_entropy(&s, DEFAULT_RANK_TOL)?.entropy,
            msp: msp(&s.mu_y),
            softmax_entropy: softmax_entropy(&s.mu_y),
        },
        pred,
    ))
}

fn sep_or_nan(a: &[f64], b: &[f64]) -> f64 {
    let a: Vec<f64> = a.iter().copied().filter(|v| v.is_finite()).collect();
    let b: Vec<f64> = b.iter().copied().filter(|v| v.is_finite()).collect();
    separability(&a, &b).map_or(f64::NAN, |s| s.value)
}

/// Per-sample uncertainty table, misclassified-vs-correct separability per layer and,
/// with `ood`, separability of three indicators between in- and out-of-distribution inputs.
pub fn cmd_uq_report(cfg: &RunConfig, ood: Option<&Path>) -> Result<String> {
    let model = load_checkpoint(cfg)?;
    let (_, test) = load_data(cfg)?;
    check_shapes(&model, &test)?;
    if !test.is_classification() {
        return Err(CliError::User("uq-report needs a classification task".into()));
    }
    let ood_ds = match ood {
        None => None,
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| io_err(p, e))?;
            let imgs =
                parse_idx_images(&bytes).map_err(|e| CliError::User(format!("{}: {e}", p.display())))?;
            if imgs.rows * imgs.cols != model.input_dim() {
                return Err(CliError::User(format!(
                    "OOD images have {} pixels, model expects {}",
                    imgs.rows * imgs.cols,
                    model.input_dim()
                )));
            }
            Some(imgs)
        }
    };
    prepare_out(cfg, "uq-report")?;

    let mut samples = Vec::with_capacity(test.len());
    let mut table = String::from("index\tlabel\tprediction\tcorrect\tentropy\tmsp\tsoftmax_entropy");
    let layers = model.hidden_layers().len() + 1;
    for l in 0..layers {
        let _ = write!(table, "\tentropy_layer{l}");
    }
    table.push('\n');
    for i in 0..test.len() {
        let label = test.label(i);
        let (u, pred) = uq_sample(&model, &test.input_vector(i), label)?;
        let _ = write!(
            table,
            "{i}\t{}\t{pred}\t{}\t{}\t{}\t{}",
            label.unwrap_or(0),
            u.correct as u8,
            u.entropy,
            u.msp,
            u.softmax_entropy
        );
        for e in &u.layer_entropy {
            let _ = write!(table, "\t{e}");
        }
        table.push('\n');
        samples.push(u);
    }
    write(&cfg.out_dir, "uq_samples.tsv", &table)?;

    let pick = |f: &dyn Fn(&SampleUq) -> f64, correct: bool| -> Vec<f64> {
        samples.iter().filter(|s| s.correct == correct).map(f).collect()
    };
    let n_wrong = samples.iter().filter(|s| !s.correct).count();
    let mut sep = String::from("layer\tseparability\tmisclassified\tcorrect\n");
    let mut summary = format!("{} samples, {} misclassified\n", samples.len(), n_wrong);
    for l in 0..layers {
        let f = move |s: &SampleUq| s.layer_entropy[l];
        let v = sep_or_nan(&pick(&f, false), &pick(&f, true));
        let _ = writeln!(sep, "{l}\t{v}\t{n_wrong}\t{}", samples.len() - n_wrong);
        let _ = writeln!(summary, "layer {l}: entropy separability {v:.4}");
    }
    let out_sep = sep_or_nan(&pick(&|s| s.entropy, false), &pick(&|s| s.entropy, true));
    let _ = writeln!(sep, "output\t{out_sep}\t{n_wrong}\t{}", samples.len() - n_wrong);
    let _ = writeln!(summary, "output: entropy separability {out_sep:.4}");
    write(&cfg.out_dir, "uq_separability.tsv", &sep)?;

    if let Some(imgs) = ood_ds {
        let dim = model.input_dim();
        let mut ood: Vec<SampleUq> = Vec::with_capacity(imgs.count);
        for i in 0..imgs.count {
            let x = DVector::from_iterator(
                dim,
                imgs.pixels[i * dim..(i + 1) * dim].iter().map(|&p| p as f64 / 255.0),
            );
            ood.push(uq_sample(&model, &x, None)?.0);
        }
        let col = |v: &[SampleUq], f: fn(&SampleUq) -> f64| v.iter().map(f).collect::<Vec<f64>>();
        // Oriented so that a positive value means the indicator flags OOD inputs.
        let rows = [
            ("entropy", sep_or_nan(&col(&ood, |s| s.entropy), &col(&samples, |s| s.entropy))),
            ("msp", sep_or_nan(&col(&samples, |s| s.msp), &col(&ood, |s| s.msp))),
            (
                "softmax_entropy",
                sep_or_nan(&col(&ood, |s| s.softmax_entropy), &col(&samples, |s| s.softmax_entropy)),
            ),
        ];
        let mut t = String::from("indicator\tseparability\n");
        for (name, v) in rows {
            let _ = writeln!(t, "{name}\t{v}");
            let _ = writeln!(summary, "OOD {name}: separability {v:.4}");
        }
        write(&cfg.out_dir, "uq_ood.tsv", &t)?;
    }
    Ok(summary)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Zeroes the input noise and the first hidden layer's noise.
pub fn defended(model: &MnnModel) -> MnnModel {
    let mut m = model.clone();
    m.input_sigma = 0.0;
    if let Some(first) = m.layers.first_mut() {
        if !first.spec.is_readout() {
            first.spec.sigma = 0.0;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub eps: f64,
    pub accuracy: f64,
    pub median_entropy: f64,
}

pub fn attack_sweep(
    model: &MnnModel,
    ds: &Dataset,
    eps: &[f64],
    limit: Option<usize>,
) -> Result<Vec<AttackRow>> {
    let n = limit.map_or(ds.len(), |l| l.min(ds.len()));
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let (mut hits, mut ent) = (0usize, Vec::with_capacity(n));
        for i in 0..n {
            let label = ds.label(i).ok_or_else(|| CliError::User("attack needs labelled data".into()))?;
            let adv = fgsm_attack(model, &ds.input_vector(i), label, e)?;
            let s = forward(model, &adv)?;
            hits += (s.mu_y.argmax().0 == label) as usize;
            ent.push(output_entropy(&s, DEFAULT_RANK_TOL)?.entropy);
        }
        rows.push(AttackRow { eps: e, accuracy: hits as f64 / n as f64, median_entropy: median(ent) });
    }
    Ok(rows)
}

pub fn cmd_attack(cfg: &RunConfig, defense: bool) -> Result<String> {
    let mut model = load_checkpoint(cfg)?;
    let (_, test) = load_data(cfg)?;
    check_shapes(&model, &test)?;
    if !test.is_classification() {
        return Err(CliError::User("attack needs a classification task".into()));
    }
    if defense {
        model = defended(&model);
    }
    prepare_out(cfg, "attack")?;
    let rows = attack_sweep(&model, &test, &cfg.attack.eps, cfg.attack.limit)?;
    let mut t = String::from("eps\taccuracy\tmedian_entropy\n");
    for r in &rows {
        let _ = writeln!(t, "{}\t{}\t{}", r.eps, r.accuracy, r.median_entropy);
    }
    let name = if defense { "attack_defended.tsv" } else { "attack.tsv" };
    write(&cfg.out_dir, name, &t)?;
    Ok(t)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let model = load_checkpoint(cfg)?;
    let (_, test) = load_data(cfg)?;
    check_shapes(&model, &test)?;
    let idx = cfg.simulate.input_index;
    if idx >= test.len() {
        return Err(CliError::User(format!(
            "simulate.input_index {idx} but the test set has {}",
            test.len()
        )));
    }
    prepare_out(cfg, "simulate")?;
    let sde = cfg.sde_config();
    let sim = simulate_network(&model, &test.input_vector(idx), &sde)?;

    let mut trace = String::from("t");
    for k in 0..model.output_dim() {
        let _ = write!(trace, "\ty{k}");
    }
    trace.push('\n');
    for (t, y) in &sim.output_trace {
        let _ = write!(trace, "{t}");
        for v in y.iter() {
            let _ = write!(trace, "\t{v}");
        }
        trace.push('\n');
    }
    write(&cfg.out_dir, "simulate_trace.tsv", &trace)?;

    let mut m = String::from("layer\tunit\tmean\tvariance\tse_mean\tse_variance\n");
    let named = sim
        .layers
        .iter()
        .enumerate()
        .map(|(l, e)| (l.to_string(), e))
        .chain(std::iter::once(("output".to_string(), &sim.output)));
    for (name, e) in named {
        let var = e.variance();
        for i in 0..e.dim() {
            let _ =
                writeln!(m, "{name}\t{i}\t{}\t{}\t{}\t{}", e.mean[i], var[i], e.se_mean[i], e.se_cov[(i, i)]);
        }
    }
    write(&cfg.out_dir, "simulate_moments.tsv", &m)?;
    let ov = sim.output.variance();
    Ok(format!(
        "{} steps x {} trajectories; output mean {:?}\noutput variance {:?}\n",
        sim.steps,
        sde.n_trajectories,
        sim.output.mean.as_slice(),
        ov.as_slice()
    ))
}
