//! Forecasters mapping an input window of length `l` to a forecast of length `b`.

pub mod arima;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{least_squares, mean_var};

pub use arima::{auto_arima, fit_arima, ArimaModel};

/// A trained forecaster.
pub trait Predictor: Send + Sync + fmt::Debug {
    fn input_len(&self) -> usize;
    fn horizon(&self) -> usize;
    /// The next `horizon()` values after `input`. Pure.
    fn forecast(&self, input: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArimaOrder {
    Auto,
    Fixed { p: usize, d: usize, q: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Naive,
    Mean,
    Ar { p: usize },
    Arima(ArimaOrder),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitPolicy {
    #[default]
    Never,
    OnDetection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub l: usize,
    pub b: usize,
    #[serde(default)]
    pub refit_policy: RefitPolicy,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind, l: usize, b: usize) -> Result<Self> {
        let spec = Self {
            kind,
            l,
            b,
            refit_policy: RefitPolicy::Never,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_refit(mut self, policy: RefitPolicy) -> Self {
        self.refit_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::param("l", "input length must be positive"));
        }
        if self.b == 0 {
            return Err(Error::param("b", "horizon must be positive"));
        }
        match self.kind {
            PredictorKind::Ar { p } if p == 0 || p >= self.l => {
                Err(Error::param("p", format!("AR order must lie in 1..{}", self.l)))
            }
            PredictorKind::Arima(ArimaOrder::Fixed { p, d, q }) if p > 5 || d > 2 || q > 5 => {
                Err(Error::param("order", "ARIMA orders are limited to p, q <= 5, d <= 2"))
            }
            _ => Ok(()),
        }
    }
}

/// What a model is fitted on.
#[derive(Debug, Clone, Copy)]
pub enum Training<'a> {
    /// One contiguous change-point-free stretch.
    History(&'a [f64]),
    /// Input/target windows; each pair is treated as a contiguous segment.
    Pairs(&'a [(Vec<f64>, Vec<f64>)]),
}

impl Training<'_> {
    fn segments(&self) -> Vec<Vec<f64>> {
        match self {
            Training::History(h) => vec![h.to_vec()],
            Training::Pairs(pairs) => pairs
                .iter()
                .map(|(x, y)| x.iter().chain(y).copied().collect())
                .collect(),
        }
    }
}

/// All `(input, target)` windows at stride `stride` over `values`, at most `max_pairs`.
pub fn training_pairs(values: &[f64], l: usize, b: usize, stride: usize, max_pairs: Option<usize>) -> Vec<(Vec<f64>, Vec<f64>)> {
    if values.len() < l + b || stride == 0 {
        return Vec::new();
    }
    (0..=values.len() - l - b)
        .step_by(stride)
        .take(max_pairs.unwrap_or(usize::MAX))
        .map(|s| (values[s..s + l].to_vec(), values[s + l..s + l + b].to_vec()))
        .collect()
}

/// `x_t = c + Σ φ_i x_{t−i} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub intercept: f64,
    pub phi: Vec<f64>,
}

impl ArModel {
    /// Least squares on lag regressions inside each segment.
    pub fn fit(segments: &[Vec<f64>], p: usize) -> Result<Self> {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for seg in segments {
            for t in p..seg.len() {
                let mut row = Vec::with_capacity(p + 1);
                row.push(1.0);
                row.extend((1..=p).map(|i| seg[t - i]));
                rows.push(row);
                y.push(seg[t]);
            }
        }
        if rows.len() <= p + 1 {
            return Err(Error::Untrainable(format!("AR({p}) needs more than {} regression rows", p + 1)));
        }
        let beta = least_squares(&rows, &y)
            .ok_or_else(|| Error::Untrainable(format!("AR({p}) lag regression is rank deficient")))?;
        Ok(Self {
            intercept: beta[0],
            phi: beta[1..].to_vec(),
        })
    }

    pub fn forecast(&self, input: &[f64], horizon: usize) -> Vec<f64> {
        let mut ext = input.to_vec();
        for _ in 0..horizon {
            let t = ext.len();
            let v = self.intercept + self.phi.iter().enumerate().map(|(i, a)| a * ext[t - 1 - i]).sum::<f64>();
            ext.push(v);
        }
        ext.split_off(input.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Repeats the last input value.
    Naive,
    /// Repeats the input mean.
    Mean,
    /// Ignores the input.
    Constant(f64),
    Ar(ArModel),
    Arima(ArimaModel),
}

/// A fitted linear forecaster bound to its window lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Model,
    pub l: usize,
    pub b: usize,
}

impl Trained {
    pub fn new(model: Model, l: usize, b: usize) -> Result<Self> {
        if l == 0 || b == 0 {
            return Err(Error::param("l/b", "window lengths must be positive"));
        }
        if let Model::Ar(ar) = &model {
            if ar.phi.len() > l {
                return Err(Error::param("p", "AR order exceeds the input length"));
            }
        }
        Ok(Self { model, l, b })
    }
}

impl Predictor for Trained {
    fn input_len(&self) -> usize {
        self.l
    }

    fn horizon(&self) -> usize {
        self.b
    }

    fn forecast(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.l {
            return Err(Error::ShapeMismatch {
                expected: self.l,
                actual: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forecast input"));
        }
        let out = match &self.model {
            Model::Naive => vec![input[self.l - 1]; self.b],
            Model::Mean => vec![input.iter().sum::<f64>() / self.l as f64; self.b],
            Model::Constant(c) => vec![*c; self.b],
            Model::Ar(ar) => ar.forecast(input, self.b),
            Model::Arima(m) => m.forecast(input, self.b)?,
        };
        Ok(out)
    }
}

/// Fits `spec` on `training`. Deterministic.
pub fn fit(spec: &PredictorSpec, training: Training<'_>) -> Result<Trained> {
    spec.validate()?;
    let segments = training.segments();
    let all: Vec<f64> = segments.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::Untrainable("no training data".into()));
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let (mean, var) = mean_var(&all);
    let degenerate = var == 0.0;
    let model = match spec.kind {
        PredictorKind::Naive => Model::Naive,
        PredictorKind::Mean => Model::Mean,
        _ if degenerate => Model::Constant(mean),
        PredictorKind::Ar { p } => Model::Ar(ArModel::fit(&segments, p)?),
        PredictorKind::Arima(order) => {
            let Training::History(history) = training else {
                return Err(Error::Untrainable("ARIMA is fitted on a raw history, not on window pairs".into()));
            };
            let m = match order {
                ArimaOrder::Auto => auto_arima(history)?,
                ArimaOrder::Fixed { p, d, q } => fit_arima(history, p, d, q)?,
            };
            if m.min_input() > spec.l {
                return Err(Error::Untrainable(format!(
                    "ARIMA({},{},{}) needs inputs longer than l = {}",
                    m.p, m.d, m.q, spec.l
                )));
            }
            Model::Arima(m)
        }
    };
    Trained::new(model, spec.l, spec.b)
}

/// Result of a refit attempt after a detection.
#[derive(Debug)]
pub enum Refit {
    Replaced(Trained),
    /// Not enough post-change history; the previous model stays.
    Kept { reason: String },
}

/// Refits on `history[located..located + warmup]`.
pub fn refit_on_detection(spec: &PredictorSpec, history: &[f64], located: usize, warmup: usize) -> Refit {
    if spec.refit_policy == RefitPolicy::Never {
        return Refit::Kept {
            reason: "refit policy is never".into(),
        };
    }
    let end = located.saturating_add(warmup).min(history.len());
    if located >= end || end - located < warmup {
        return Refit::Kept {
            reason: format!(
                "post-change history {} shorter than warm-up {warmup}",
                end.saturating_sub(located)
            ),
        };
    }
    match fit(spec, Training::History(&history[located..end])) {
        Ok(m) => Refit::Replaced(m),
        Err(e) => Refit::Kept { reason: e.to_string() },
    }
}

const TEXT_HEADER: &str = "trendcpd-linear 1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl Trained {
    /// Line-oriented `key value...` text, floats in shortest round-trip form.
    ///
    /// ```text
    /// trendcpd-linear 1
    /// l 600
    /// b 50
    /// kind arima
    /// order 1 0 0
    /// phi 0.5
    /// theta
    /// intercept 0
    /// sigma2 1
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = format!("{TEXT_HEADER}\nl {}\nb {}\n", self.l, self.b);
        match &self.model {
            Model::Naive => s.push_str("kind naive\n"),
            Model::Mean => s.push_str("kind mean\n"),
            Model::Constant(c) => s.push_str(&format!("kind constant\nvalue {c}\n")),
            Model::Ar(ar) => s.push_str(&format!(
                "kind ar\nintercept {}\nphi {}\n",
                ar.intercept,
                join(&ar.phi)
            )),
            Model::Arima(m) => s.push_str(&format!(
                "kind arima\norder {} {} {}\nphi {}\ntheta {}\nintercept {}\nsigma2 {}\n",
                m.p,
                m.d,
                m.q,
                join(&m.phi),
                join(&m.theta),
                m.intercept,
                m.sigma2
            )),
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == TEXT_HEADER => {}
            _ => return Err(Error::parse(1, format!("expected header `{TEXT_HEADER}`"))),
        }
        let mut fields: Vec<(usize, String, Vec<String>)> = Vec::new();
        for (i, line) in lines {
            let mut parts = line.split_whitespace().map(str::to_string);
            let key = parts.next().unwrap_or_default();
            fields.push((i + 1, key, parts.collect()));
        }
        let get = |key: &str| -> Result<(usize, &Vec<String>)> {
            fields
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(n, _, v)| (*n, v))
                .ok_or_else(|| Error::parse(0, format!("missing field `{key}`")))
        };
        let nums = |key: &str| -> Result<Vec<f64>> {
            let (line, v) = get(key)?;
            v.iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::parse(line, format!("{key}: {e}"))))
                .collect()
        };
        let scalar = |key: &str| -> Result<f64> {
            let v = nums(key)?;
            let (line, _) = get(key)?;
            match v.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::parse(line, format!("{key} takes one value"))),
            }
        };
        let int = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            match v.as_slice() {
                [x] => x.parse().map_err(|e| Error::parse(line, format!("{key}: {e}"))),
                _ => Err(Error::parse(line, format!("{key} takes one value"))),
            }
        };
        let (kind_line, kind) = get("kind")?;
        let model = match kind.first().map(String::as_str) {
            Some("naive") => Model::Naive,
            Some("mean") => Model::Mean,
            Some("constant") => Model::Constant(scalar("value")?),
            Some("ar") => Model::Ar(ArModel {
                intercept: scalar("intercept")?,
                phi: nums("phi")?,
            }),
            Some("arima") => {
                let (line, order) = get("order")?;
                let order: Vec<usize> = order
                    .iter()
                    .map(|s| s.parse().map_err(|e| Error::parse(line, format!("order: {e}"))))
                    .collect::<Result<_>>()?;
                let [p, d, q] = order[..] else {
                    return Err(Error::parse(line, "order takes three integers"));
                };
                let mut m = ArimaModel::new(d, nums("phi")?, nums("theta")?, scalar("intercept")?, scalar("sigma2")?)?;
                if m.p != p || m.q != q {
                    return Err(Error::parse(line, "order disagrees with coefficient counts"));
                }
                m.aicc = f64::NAN;
                Model::Arima(m)
            }
            other => return Err(Error::parse(kind_line, format!("unknown kind {other:?}"))),
        };
        Trained::new(model, int("l")?, int("b")?)
    }
}
