//! Declarative detector configurations and parameter grids.
//!
//! Parameter names follow the usual tuning vocabulary: `desInt` and `k` for the
//! CUSUM charts, `l`/`nh` and `b`/`nz` for the window lengths, `minHist`,
//! `histFact`, `h`, `level` for MOSUM, `cpthreshold` for the Bayesian detector
//! and `diag`/`offDiag` for OCD.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cusum::{CusumParams, Direction, TargetMode, TracePoint};
use crate::error::{Error, Result};
use crate::lstm::LstmNet;
use crate::pnc::{PncConfig, PncDetector, RunEvent};
use crate::predict::{fit, ArimaOrder, Predictor, PredictorKind, PredictorSpec, RefitPolicy, Training};
use crate::refdet::{bayes, mosum, ocd, BayesParams, ClassicCusum, MosumParams, OcdParams};
use crate::series::Detection;

/// Model behind a predict-and-compare detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorChoice {
    Naive,
    Mean,
    Ar {
        p: usize,
    },
    /// `order = [p, d, q]`; automatic selection when absent.
    Arima {
        #[serde(default)]
        order: Option<[usize; 3]>,
    },
    /// Pre-trained network read from `model`, relative to the config file.
    Lstm {
        model: PathBuf,
        #[serde(skip)]
        net: Option<Arc<LstmNet>>,
    },
}

impl PartialEq for PredictorChoice {
    fn eq(&self, other: &Self) -> bool {
        use PredictorChoice::*;
        match (self, other) {
            (Naive, Naive) | (Mean, Mean) => true,
            (Ar { p: a }, Ar { p: b }) => a == b,
            (Arima { order: a }, Arima { order: b }) => a == b,
            (Lstm { model: a, .. }, Lstm { model: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl PredictorChoice {
    fn linear_kind(&self) -> Option<PredictorKind> {
        match *self {
            PredictorChoice::Naive => Some(PredictorKind::Naive),
            PredictorChoice::Mean => Some(PredictorKind::Mean),
            PredictorChoice::Ar { p } => Some(PredictorKind::Ar { p }),
            PredictorChoice::Arima { order: None } => Some(PredictorKind::Arima(ArimaOrder::Auto)),
            PredictorChoice::Arima { order: Some([p, d, q]) } => Some(PredictorKind::Arima(ArimaOrder::Fixed { p, d, q })),
            PredictorChoice::Lstm { .. } => None,
        }
    }
}

fn default_k() -> f64 {
    0.5
}
fn default_des_int() -> f64 {
    5.0
}
fn default_l() -> usize {
    600
}
fn default_b() -> usize {
    50
}
fn default_refit_warmup() -> usize {
    100
}
fn default_train_len() -> usize {
    600
}
fn default_window() -> usize {
    50
}

/// Predict-and-compare with a CUSUM on the forecast residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PncSpec {
    pub predictor: PredictorChoice,
    #[serde(default = "default_l", alias = "nh")]
    pub l: usize,
    #[serde(default = "default_b", alias = "nz")]
    pub b: usize,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(rename = "desInt", default = "default_des_int")]
    pub des_int: f64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub refit_policy: RefitPolicy,
    #[serde(default = "default_refit_warmup")]
    pub refit_warmup: usize,
    /// Leading points used to fit linear predictors; assumed free of change points.
    #[serde(default = "default_train_len")]
    pub train_len: usize,
    #[serde(default)]
    pub reset_each_window: bool,
}

impl PncSpec {
    pub fn new(predictor: PredictorChoice) -> Self {
        Self {
            predictor,
            l: default_l(),
            b: default_b(),
            k: default_k(),
            des_int: default_des_int(),
            direction: Direction::Up,
            refit_policy: RefitPolicy::Never,
            refit_warmup: default_refit_warmup(),
            train_len: default_train_len(),
            reset_each_window: false,
        }
    }
}

/// CUSUM against a running mean of the preceding `window` observations, or a
/// constant `theta` when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CusumSpec {
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(rename = "desInt", default = "default_des_int")]
    pub des_int: f64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub theta: Option<f64>,
}

impl Default for CusumSpec {
    fn default() -> Self {
        Self {
            k: default_k(),
            des_int: default_des_int(),
            direction: Direction::Up,
            window: default_window(),
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DetectorSpec {
    Pnc(PncSpec),
    Cusum(CusumSpec),
    Bayes(BayesParams),
    Ocd(OcdParams),
    Mosum(MosumParams),
}

/// Detections plus whatever the detector reports along the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub detections: Vec<Detection>,
    /// Human-readable events, times 1-based.
    pub log: Vec<String>,
    /// Chart trajectory, only for CUSUM-based detectors.
    pub trace: Vec<TracePoint>,
    /// Alarm threshold of the traced statistic.
    pub threshold: Option<f64>,
}

fn as_count(name: &str, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value < 1e15 {
        Ok(value as usize)
    } else {
        Err(Error::Config(format!("parameter {name} needs a non-negative integer, got {value}")))
    }
}

fn unknown(name: &str, method: &str) -> Error {
    Error::Config(format!("parameter {name} does not apply to method {method}"))
}

#[derive(Debug)]
struct SharedNet(Arc<LstmNet>);

impl Predictor for SharedNet {
    fn input_len(&self) -> usize {
        self.0.input_len()
    }
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn forecast(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.0.forecast(input)
    }
}

impl DetectorSpec {
    pub fn method(&self) -> &'static str {
        match self {
            DetectorSpec::Pnc(_) => "pnc",
            DetectorSpec::Cusum(_) => "cusum",
            DetectorSpec::Bayes(_) => "bayes",
            DetectorSpec::Ocd(_) => "ocd",
            DetectorSpec::Mosum(_) => "mosum",
        }
    }

    /// Sets a numeric parameter by name, as used by grid axes.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Config(format!("parameter {name} is not finite")));
        }
        let method = self.method();
        match self {
            DetectorSpec::Pnc(s) => match name {
                "desInt" => s.des_int = value,
                "k" => s.k = value,
                "l" | "nh" => s.l = as_count(name, value)?,
                "b" | "nz" => s.b = as_count(name, value)?,
                "refit_warmup" => s.refit_warmup = as_count(name, value)?,
                "train_len" => s.train_len = as_count(name, value)?,
                "p" => match &mut s.predictor {
                    PredictorChoice::Ar { p } => *p = as_count(name, value)?,
                    _ => return Err(Error::Config("parameter p needs an AR predictor".into())),
                },
                _ => return Err(unknown(name, method)),
            },
            DetectorSpec::Cusum(s) => match name {
                "desInt" => s.des_int = value,
                "k" => s.k = value,
                "window" => s.window = as_count(name, value)?,
                "theta" => s.theta = Some(value),
                _ => return Err(unknown(name, method)),
            },
            DetectorSpec::Bayes(s) => match name {
                "cpthreshold" => s.cpthreshold = value,
                "hazard" => s.hazard = value,
                "r_min" => s.r_min = as_count(name, value)?,
                "warmup" => s.warmup = as_count(name, value)?,
                _ => return Err(unknown(name, method)),
            },
            DetectorSpec::Ocd(s) => match name {
                "diag" => s.diag = value,
                "offDiag" => s.off_diag = value,
                "h_tail" => s.h_tail = as_count(name, value)?,
                "baseline" => s.baseline = as_count(name, value)?,
                _ => return Err(unknown(name, method)),
            },
            DetectorSpec::Mosum(s) => match name {
                "minHist" => s.min_hist = as_count(name, value)?,
                "histFact" => s.hist_fact = value,
                "h" => s.h = value,
                "level" => s.level = value,
                _ => return Err(unknown(name, method)),
            },
        }
        Ok(())
    }

    /// The chart threshold, for detectors that have one.
    pub fn threshold(&self) -> Option<f64> {
        match self {
            DetectorSpec::Pnc(s) => Some(s.des_int),
            DetectorSpec::Cusum(s) => Some(s.des_int),
            _ => None,
        }
    }

    /// Reads model files referenced by the spec; relative paths start at `base`.
    pub fn load_models(&mut self, base: &Path) -> Result<()> {
        if let DetectorSpec::Pnc(PncSpec {
            predictor: PredictorChoice::Lstm { model, net },
            ..
        }) = self
        {
            if net.is_none() {
                let path = if model.is_absolute() { model.clone() } else { base.join(&*model) };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read model file {}: {e}", path.display())))?;
                *net = Some(Arc::new(LstmNet::from_text(&text)?));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DetectorSpec::Pnc(s) => {
                self.pnc_config(s).validate()?;
                if let Some(kind) = s.predictor.linear_kind() {
                    PredictorSpec::new(kind, s.l, s.b)?;
                } else if s.refit_policy == RefitPolicy::OnDetection {
                    return Err(Error::Config("an LSTM predictor is trained offline and cannot be refitted".into()));
                }
                Ok(())
            }
            DetectorSpec::Cusum(s) => {
                CusumParams::new(s.k, s.des_int)?;
                if s.window == 0 {
                    return Err(Error::param("window", "must be at least 1"));
                }
                Ok(())
            }
            DetectorSpec::Bayes(p) => p.validate(),
            DetectorSpec::Ocd(p) => p.validate(),
            DetectorSpec::Mosum(p) => p.validate(),
        }
    }

    fn pnc_config(&self, s: &PncSpec) -> PncConfig {
        let cusum = CusumParams {
            k: s.k,
            threshold: s.des_int,
            direction: s.direction,
        };
        let mut cfg = PncConfig::new(s.l, s.b, cusum);
        cfg.refit_warmup = s.refit_warmup;
        cfg.reset_each_window = s.reset_each_window;
        cfg
    }

    /// Runs the detector over `values`. With `trace`, CUSUM-based detectors
    /// also return their chart trajectory.
    pub fn run(&self, values: &[f64], trace: bool) -> Result<RunOutput> {
        self.validate()?;
        let mut out = RunOutput {
            threshold: self.threshold(),
            ..Default::default()
        };
        match self {
            DetectorSpec::Pnc(s) => {
                let predictor: Box<dyn Predictor> = match &s.predictor {
                    PredictorChoice::Lstm { net: Some(net), .. } => Box::new(SharedNet(net.clone())),
                    PredictorChoice::Lstm { model, net: None } => {
                        return Err(Error::Config(format!("model {} was not loaded", model.display())))
                    }
                    choice => {
                        let kind = choice.linear_kind().expect("linear predictor");
                        let spec = PredictorSpec::new(kind, s.l, s.b)?.with_refit(s.refit_policy);
                        let n = s.train_len.min(values.len());
                        Box::new(fit(&spec, Training::History(&values[..n]))?)
                    }
                };
                let mut det = PncDetector::new(predictor, self.pnc_config(s))?;
                if s.refit_policy == RefitPolicy::OnDetection {
                    let kind = s.predictor.linear_kind().expect("validated");
                    det = det.with_refit(PredictorSpec::new(kind, s.l, s.b)?.with_refit(s.refit_policy))?;
                }
                let run = if trace { det.run_traced(values)? } else { det.run_stream(values)? };
                out.detections = run.detections;
                out.trace = run.trace;
                for e in run.events {
                    out.log.push(match e {
                        RunEvent::WindowSkipped { anchor, reason } => {
                            format!("window at {} skipped: {reason}", anchor + 1)
                        }
                        RunEvent::Refitted { at, located } => {
                            format!("refit at {} on data from change point {}", at + 1, located + 1)
                        }
                        RunEvent::RefitKept { at, located, reason } => format!(
                            "refit at {} after change point {} failed, previous model kept: {reason}",
                            at + 1,
                            located + 1
                        ),
                        RunEvent::RefitPending { located } => {
                            format!("refit after change point {} pending at end of series", located + 1)
                        }
                    });
                }
                if s.refit_policy == RefitPolicy::Never {
                    out.log.push(match s.predictor {
                        PredictorChoice::Lstm { .. } => "pre-trained model, never refitted".to_string(),
                        _ => format!("model fitted once on the first {} points, never refitted", s.train_len),
                    });
                }
            }
            DetectorSpec::Cusum(s) => {
                let params = CusumParams {
                    k: s.k,
                    threshold: s.des_int,
                    direction: s.direction,
                };
                let target = match s.theta {
                    Some(theta) => TargetMode::Constant { theta },
                    None => TargetMode::RunningMean { window: s.window },
                };
                let c = ClassicCusum::new(params, target)?;
                if trace {
                    (out.detections, out.trace) = c.detect_traced(values);
                } else {
                    out.detections = c.detect(values);
                }
            }
            DetectorSpec::Bayes(p) => out.detections = bayes::detect(p, values)?,
            DetectorSpec::Ocd(p) => out.detections = ocd::detect(p, values)?,
            DetectorSpec::Mosum(p) => out.detections = mosum::detect(p, values)?,
        }
        Ok(out)
    }
}

/// Values of one grid axis: an explicit list or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        match *self {
            Axis::List(ref v) => {
                if v.is_empty() {
                    return Err(Error::Config("grid axis has no values".into()));
                }
                Ok(v.clone())
            }
            Axis::Range { from, to, step } => {
                if !(step > 0.0 && from <= to && from.is_finite() && to.is_finite()) {
                    return Err(Error::Config(format!("bad grid range {from}..{to} step {step}")));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize + 1;
                // rounding keeps ids like 0.3 instead of 0.30000000000000004
                Ok((0..n).map(|i| ((from + i as f64 * step) * 1e10).round() / 1e10).collect())
            }
        }
    }
}

/// One configured detector with optional grid axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub id: String,
    pub params: DetectorSpec,
    #[serde(default)]
    pub grid: BTreeMap<String, Axis>,
}

/// A fully specified detector at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub detector_id: String,
    pub params_id: String,
    pub spec: DetectorSpec,
}

impl crate::eval::GridLabel for GridPoint {
    fn detector_id(&self) -> &str {
        &self.detector_id
    }
    fn params_id(&self) -> &str {
        &self.params_id
    }
}

impl DetectorEntry {
    /// Cartesian product of the axes, last axis (by name) varying fastest.
    /// Without axes the entry is a single point with id `default`.
    pub fn expand(&self) -> Result<Vec<GridPoint>> {
        let axes: Vec<(&String, Vec<f64>)> = self
            .grid
            .iter()
            .map(|(n, a)| a.values().map(|v| (n, v)))
            .collect::<Result<_>>()?;
        let mut points = vec![(self.params.clone(), Vec::<String>::new())];
        for (name, values) in &axes {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for (spec, id) in &points {
                for &v in values {
                    let mut s = spec.clone();
                    s.set(name, v)?;
                    let mut id = id.clone();
                    id.push(format!("{name}={v}"));
                    next.push((s, id));
                }
            }
            points = next;
        }
        Ok(points
            .into_iter()
            .map(|(spec, id)| GridPoint {
                detector_id: self.id.clone(),
                params_id: if id.is_empty() { "default".into() } else { id.join(";") },
                spec,
            })
            .collect())
    }
}
