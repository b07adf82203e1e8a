//! TOML run configuration. Every section is optional except `task` and `[model]`; missing
//! keys take the defaults below, which follow the training setup of the reference
//! experiments (Adam, σ_l = 0.2, batch 128, learning rate 5e-4).

use std::path::{Path, PathBuf};

use moment_nn::activation::{ActivationKind, LifParams};
use moment_nn::network::LayerSpec;
use moment_nn::sde::SdeConfig;
use moment_nn::smuc::{CovarianceMode, LossKind, OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// IDX image classification (MNIST layout).
    Classify,
    /// CSV regression with named target columns.
    Regress,
    /// The synthetic sign-product task in two dimensions.
    Toy2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Heaviside,
    Relu,
    Lif,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigmas {
    Shared(f64),
    PerLayer(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifSection {
    pub v_th: f64,
    pub v_res: f64,
    pub t_ref: f64,
    pub leak: f64,
}

impl Default for LifSection {
    fn default() -> Self {
        let p = LifParams::default();
        Self { v_th: p.v_th, v_res: p.v_res, t_ref: p.t_ref, leak: p.leak }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: KindName,
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    #[serde(default = "default_sigma")]
    pub input_sigma: f64,
    /// Noise scale of every hidden layer, or one value per hidden layer.
    #[serde(default = "default_sigmas")]
    pub sigma: Sigmas,
    /// Leading hidden layers that run deterministically.
    #[serde(default)]
    pub deterministic_prefix: usize,
    #[serde(default)]
    pub lif: LifSection,
}

fn default_sigma() -> f64 {
    0.2
}

fn default_sigmas() -> Sigmas {
    Sigmas::Shared(0.2)
}

impl ModelConfig {
    pub fn activation(&self) -> ActivationKind {
        match self.kind {
            KindName::Heaviside => ActivationKind::Heaviside,
            KindName::Relu => ActivationKind::Relu,
            KindName::Lif => ActivationKind::Lif(LifParams {
                v_th: self.lif.v_th,
                v_res: self.lif.v_res,
                t_ref: self.lif.t_ref,
                leak: self.lif.leak,
            }),
        }
    }

    pub fn sigmas(&self) -> Result<Vec<f64>, CliError> {
        match &self.sigma {
            Sigmas::Shared(s) => Ok(vec![*s; self.hidden.len()]),
            Sigmas::PerLayer(v) if v.len() == self.hidden.len() => Ok(v.clone()),
            Sigmas::PerLayer(v) => Err(CliError::User(format!(
                "model.sigma has {} entries for {} hidden layers",
                v.len(),
                self.hidden.len()
            ))),
        }
    }

    pub fn layer_specs(&self, input_dim: usize, output_dim: usize) -> Result<Vec<LayerSpec>, CliError> {
        if self.deterministic_prefix > self.hidden.len() {
            return Err(CliError::User(
                "model.deterministic_prefix exceeds the number of hidden layers".into(),
            ));
        }
        let kind = self.activation();
        let sigmas = self.sigmas()?;
        let mut specs = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = input_dim;
        for (l, (&w, &s)) in self.hidden.iter().zip(&sigmas).enumerate() {
            let mut spec = LayerSpec::hidden(prev, w, kind, s);
            if l < self.deterministic_prefix {
                spec = spec.without_covariance();
            }
            specs.push(spec);
            prev = w;
        }
        specs.push(LayerSpec::readout(prev, output_dim));
        Ok(specs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    CrossEntropy,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModeName {
    PerSample,
    BatchShared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Defaults to cross entropy for classification and MSE for regression.
    pub loss: Option<LossName>,
    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub covariance_mode: CovarianceModeName,
    pub eval_limit: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            loss: None,
            optimizer: OptimizerName::Adam,
            learning_rate: 5e-4,
            weight_decay: 0.0,
            batch_size: 128,
            epochs: 10,
            covariance_mode: CovarianceModeName::BatchShared,
            eval_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub targets: Vec<String>,
    /// Held-out fraction for CSV data.
    pub test_fraction: f64,
    /// Standardize CSV features and targets with training-split statistics.
    pub standardize: bool,
    /// Sample counts for the synthetic task.
    pub n_train: usize,
    pub n_test: usize,
    /// Use only the first N training / test samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            csv: None,
            targets: Vec::new(),
            test_fraction: 0.1,
            standardize: true,
            n_train: 10_000,
            n_test: 2_000,
            train_limit: None,
            test_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub dt: f64,
    pub burn_in: f64,
    pub horizon: f64,
    pub n_trajectories: usize,
    pub record_stride: usize,
}

impl Default for SdeSection {
    fn default() -> Self {
        let d = SdeConfig::default();
        Self {
            dt: d.dt,
            burn_in: d.burn_in,
            horizon: d.horizon,
            n_trajectories: d.n_trajectories,
            record_stride: d.record_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub mu: Vec<f64>,
    pub c: Vec<f64>,
    pub kinds: Vec<KindName>,
    pub mc_samples: usize,
    /// Correlation levels for the pair-covariance check.
    pub rho: Vec<f64>,
    pub pair_samples: usize,
    /// Number of test inputs for `verify-net`.
    pub n_inputs: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            mu: vec![-3.0, -1.0, 0.0, 1.0, 3.0],
            c: vec![0.25, 1.0, 4.0],
            kinds: vec![KindName::Heaviside, KindName::Relu],
            mc_samples: 1_000_000,
            rho: vec![0.01, 0.2],
            pair_samples: 10_000_000,
            n_inputs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub eps: Vec<f64>,
    /// Attack only the first N test samples.
    pub limit: Option<usize>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self { eps: vec![0.0, 0.05, 0.1, 0.2], limit: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Test-set index of the input to simulate.
    pub input_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/model.ckpt`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

impl RunConfig {
    /// Parses `text`; relative data and output paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::User(format!("config: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut cfg.data;
        for p in
            [&mut d.train_images, &mut d.train_labels, &mut d.test_images, &mut d.test_labels, &mut d.csv]
                .into_iter()
                .flatten()
        {
            resolve(p);
        }
        if let Some(p) = &mut cfg.checkpoint {
            resolve(p);
        }
        resolve(&mut cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.hidden.is_empty() && self.model.kind == KindName::Lif {
            // Allowed: a readout-only model ignores the kind.
        }
        if self.model.hidden.contains(&0) {
            return Err(CliError::User("model.hidden widths must be positive".into()));
        }
        self.model.sigmas()?;
        self.train_config().validate().map_err(|e| CliError::User(format!("train: {e}")))?;
        self.sde_config().validate().map_err(|e| CliError::User(format!("sde: {e}")))?;
        if self.task == Task::Regress && self.data.targets.is_empty() {
            return Err(CliError::User("data.targets must name at least one column for regression".into()));
        }
        Ok(())
    }

    /// Checks that every data file the task reads exists.
    pub fn check_data_files(&self) -> Result<(), CliError> {
        let d = &self.data;
        let needed: Vec<(&str, &Option<PathBuf>)> = match self.task {
            Task::Classify => vec![
                ("data.train_images", &d.train_images),
                ("data.train_labels", &d.train_labels),
                ("data.test_images", &d.test_images),
                ("data.test_labels", &d.test_labels),
            ],
            Task::Regress => vec![("data.csv", &d.csv)],
            Task::Toy2d => vec![],
        };
        for (key, p) in needed {
            match p {
                None => return Err(CliError::User(format!("{key} is required for this task"))),
                Some(p) if !p.exists() => {
                    return Err(CliError::User(format!("{key}: {} does not exist", p.display())))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn loss(&self) -> LossKind {
        match self.train.loss {
            Some(LossName::CrossEntropy) => LossKind::CrossEntropy,
            Some(LossName::Mse) => LossKind::Mse,
            None if self.task == Task::Regress => LossKind::Mse,
            None => LossKind::CrossEntropy,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            loss: self.loss(),
            optimizer: match t.optimizer {
                OptimizerName::Adam => OptimizerKind::adam(),
                OptimizerName::Sgd => OptimizerKind::Sgd,
            },
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            covariance_mode: match t.covariance_mode {
                CovarianceModeName::PerSample => CovarianceMode::PerSample,
                CovarianceModeName::BatchShared => CovarianceMode::BatchShared,
            },
            seed: self.seed,
            eval_limit: t.eval_limit,
        }
    }

    pub fn sde_config(&self) -> SdeConfig {
        let s = &self.sde;
        SdeConfig {
            dt: s.dt,
            burn_in: s.burn_in,
            horizon: s.horizon,
            n_trajectories: s.n_trajectories,
            seed: self.seed,
            record_stride: s.record_stride,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
