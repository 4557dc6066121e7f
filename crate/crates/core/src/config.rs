//! Experiment configuration in TOML.
//!
//! ```toml
//! schema_version = 1
//! seed = 7                 # overridden by TRENDCPD_SEED
//! output_dir = "out"
//!
//! [standardize]
//! mode = "online"          # none | offline | online
//! t0 = 0
//!
//! [[datasets]]
//! id = "wear-a"
//! [datasets.simulate]
//! kind = "wear"
//! n = 5000
//! a = 1500.0
//! lambda = 0.01
//! c = 4.0
//! d = 0.004
//! t2 = 2500.0
//!
//! [[datasets]]
//! id = "bench"
//! path = "bench.csv"       # relative to the config file
//! labels = "bench.labels.csv"
//!
//! [[detectors]]
//! id = "pnc-ar"
//! [detectors.params]
//! method = "pnc"
//! predictor = { kind = "ar", p = 5 }
//! desInt = 5.0
//! [detectors.grid]
//! desInt = [2.0, 4.0, 6.0]
//! ```
//!
//! Unknown keys are rejected everywhere. Simulated datasets without their own
//! `seed` use the global seed plus their position in the list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{DetectorEntry, GridPoint};
use crate::error::{Error, Result};
use crate::eval::{Position, Rule, TargetSpec};
use crate::io;
use crate::lstm::TrainConfig;
use crate::series::LabeledSeries;
use crate::simulate::{sample_poisson_series, sample_step_series, SignalModel, WearIntensity};
use crate::standardize::{standardize, Mode};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "TRENDCPD_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    #[default]
    None,
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizeConfig {
    #[serde(default)]
    pub mode: StandardizeMode,
    #[serde(default)]
    pub t0: usize,
}

/// Simulator settings; `cp` is a 1-based time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateSpec {
    Wear {
        n: usize,
        a: f64,
        lambda: f64,
        c: f64,
        d: f64,
        t2: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Step {
        n: usize,
        pre: f64,
        post: f64,
        sigma: f64,
        cp: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Signal {
        n: usize,
        model: SignalModel,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl SimulateSpec {
    pub fn seed(&self) -> Option<u64> {
        match *self {
            SimulateSpec::Wear { seed, .. } | SimulateSpec::Step { seed, .. } | SimulateSpec::Signal { seed, .. } => seed,
        }
    }

    pub fn sample(&self, seed: u64) -> Result<LabeledSeries> {
        match self {
            &SimulateSpec::Wear { n, a, lambda, c, d, t2, .. } => {
                sample_poisson_series(&WearIntensity::new(a, lambda, c, d, t2)?, n, seed)
            }
            &SimulateSpec::Step { n, pre, post, sigma, cp, .. } => {
                if cp < 2 {
                    return Err(Error::param("cp", "change point must be at time 2 or later"));
                }
                sample_step_series(pre, post, sigma, cp - 1, n, seed)
            }
            SimulateSpec::Signal { n, model, .. } => model.sample(*n, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub id: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Sidecar `time,cp` labels for a CSV without a cp column.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
}

/// Offline LSTM training for `train-lstm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmTrainSpec {
    /// Dataset id whose leading `train_len` points are used.
    pub dataset: String,
    pub nh: usize,
    pub nz: usize,
    pub train_len: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// Written relative to the output directory.
    pub output: PathBuf,
    #[serde(default)]
    pub train: LstmHyper,
}

/// Optimizer settings; omitted values take the [`TrainConfig`] defaults and
/// the seed defaults to the experiment seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmHyper {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub gradient_clip_norm: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub hidden: Option<usize>,
    pub seed: Option<u64>,
}

impl LstmHyper {
    pub fn resolve(&self, experiment_seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            gradient_clip_norm: self.gradient_clip_norm.unwrap_or(d.gradient_clip_norm),
            seed: self.seed.unwrap_or(experiment_seed),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            hidden: self.hidden.unwrap_or(d.hidden),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    /// False positives per run; `avg_max` adds the mean over detectors of the
    /// largest Fpc any of their runs reached.
    #[serde(default)]
    pub n_fp: Vec<usize>,
    #[serde(default)]
    pub avg_max: bool,
    #[serde(default = "hundred")]
    pub repetitions: usize,
}

fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub position: Position,
    #[serde(default)]
    pub rule: Rule,
    #[serde(default = "cap_dataset")]
    pub cap_per_dataset: f64,
    #[serde(default = "cap_overall")]
    pub cap_overall: f64,
    #[serde(default = "cap_subset")]
    pub cap_subset: f64,
    #[serde(default)]
    pub subsets: Vec<Vec<String>>,
    #[serde(default)]
    pub random: Option<RandomSpec>,
}

fn cap_dataset() -> f64 {
    10.0
}
fn cap_overall() -> f64 {
    150.0
}
fn cap_subset() -> f64 {
    30.0
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::default(),
            position: Position::default(),
            rule: Rule::default(),
            cap_per_dataset: cap_dataset(),
            cap_overall: cap_overall(),
            cap_subset: cap_subset(),
            subsets: Vec::new(),
            random: None,
        }
    }
}

/// Which run the `plot` command exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    pub dataset: String,
    pub detector: String,
    #[serde(default = "default_params")]
    pub params: String,
    #[serde(default = "yes")]
    pub svg: bool,
}

fn default_params() -> String {
    "default".into()
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub standardize: StandardizeConfig,
    pub datasets: Vec<DatasetSource>,
    #[serde(default)]
    pub detectors: Vec<DetectorEntry>,
    #[serde(default)]
    pub train_lstm: Option<LstmTrainSpec>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub plot: Option<PlotConfig>,
    /// Directory relative paths start from; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses and validates; `seed_override` replaces the configured seed.
    pub fn parse(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(line, e.message().to_string())
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        if let Some(s) = seed_override {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applying `TRENDCPD_SEED` when set.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let seed = match std::env::var(SEED_ENV) {
            Ok(s) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={s} is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base, seed).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if !ids.insert(&d.id) {
                return Err(Error::Config(format!("duplicate dataset id {}", d.id)));
            }
            match (&d.path, &d.simulate) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(Error::Config(format!("dataset {} needs exactly one of path or simulate", d.id))),
            }
            if d.labels.is_some() && d.path.is_none() {
                return Err(Error::Config(format!("dataset {}: labels only apply to files", d.id)));
            }
        }
        let mut det_ids = std::collections::BTreeSet::new();
        for d in &self.detectors {
            if !det_ids.insert(&d.id) || d.id == "random" {
                return Err(Error::Config(format!("duplicate or reserved detector id {}", d.id)));
            }
            for p in d.expand()? {
                p.spec.validate().map_err(|e| Error::Config(format!("detector {} [{}]: {e}", d.id, p.params_id)))?;
            }
        }
        for s in &self.eval.subsets {
            if let Some(bad) = s.iter().find(|id| !ids.contains(id)) {
                return Err(Error::Config(format!("subset names unknown dataset {bad}")));
            }
        }
        if let Some(t) = &self.train_lstm {
            if !ids.contains(&t.dataset) {
                return Err(Error::Config(format!("train_lstm names unknown dataset {}", t.dataset)));
            }
            t.train.resolve(self.seed).validate()?;
            if t.nh == 0 || t.nz == 0 || t.train_len < t.nh + t.nz || t.stride == 0 {
                return Err(Error::Config("train_lstm needs nh, nz, stride >= 1 and train_len >= nh + nz".into()));
            }
        }
        if let Some(p) = &self.plot {
            if !ids.contains(&p.dataset) || !det_ids.contains(&p.detector) {
                return Err(Error::Config("plot names an unknown dataset or detector".into()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.resolve(&self.output_dir).join(name)
    }

    /// Seed used by simulated dataset number `index`.
    pub fn dataset_seed(&self, index: usize) -> u64 {
        self.datasets[index]
            .simulate
            .as_ref()
            .and_then(SimulateSpec::seed)
            .unwrap_or_else(|| self.seed.wrapping_add(index as u64))
    }

    /// The raw dataset: read from file or simulated.
    pub fn raw_dataset(&self, index: usize) -> Result<LabeledSeries> {
        let src = &self.datasets[index];
        match (&src.path, &src.simulate) {
            (Some(path), _) => {
                let s = io::read_dataset(&self.resolve(path))?;
                match &src.labels {
                    Some(l) => {
                        let text = std::fs::read_to_string(self.resolve(l))?;
                        io::apply_labels(&s, io::parse_labels(&text)?)
                    }
                    None => Ok(s),
                }
            }
            (None, Some(sim)) => sim.sample(self.dataset_seed(index)),
            (None, None) => unreachable!("validated"),
        }
    }

    /// Raw dataset after the configured standardization.
    pub fn dataset(&self, index: usize) -> Result<LabeledSeries> {
        let raw = self.raw_dataset(index)?;
        let mode = match self.standardize.mode {
            StandardizeMode::None => return Ok(raw),
            StandardizeMode::Offline => Mode::Offline,
            StandardizeMode::Online => Mode::Online,
        };
        Ok(standardize(&raw, self.standardize.t0, mode)?.series)
    }

    pub fn dataset_index(&self, id: &str) -> Result<usize> {
        self.datasets
            .iter()
            .position(|d| d.id == id)
            .ok_or_else(|| Error::Config(format!("unknown dataset {id}")))
    }

    /// Every grid point of every detector, with model files loaded.
    pub fn grid_points(&self) -> Result<Vec<GridPoint>> {
        let mut out = Vec::new();
        for d in &self.detectors {
            let mut entry = d.clone();
            entry.params.load_models(&self.base_dir)?;
            out.extend(entry.expand()?);
        }
        Ok(out)
    }
}
