//! Variance-stabilizing standardization of count data with arithmetic trend growth.
//!
//! Within steady-state wear the rate is modelled as `λ(t) = b·t^ν`. The growth
//! exponent comes from the cumulative count, `ν̂ = ln Λ̂(t0, t) / ln t − 1`, the
//! coefficient `b̂` from a no-intercept least-squares fit of `X_s` on `s^ν̂`, and
//! each observation becomes the score `Ẑ(t) = (X_t − λ̂(t)) / √λ̂(t)`.
//!
//! Times follow the 1-based convention of the model: observation `values[j - 1]`
//! is `X_j`, and `Λ̂(t0, t)` sums `X_{t0+1} ..= X_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::LabeledSeries;

/// Intensities below this floor produce a zero score and a flag.
pub const LAMBDA_FLOOR: f64 = 1e-9;

/// Fitted arithmetic-growth trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendEstimate {
    pub nu_hat: f64,
    pub b_hat: f64,
    pub t0: usize,
    /// Last time included in the fit.
    pub t: usize,
    /// `Λ̂(t0, t)`.
    pub cum: f64,
}

impl TrendEstimate {
    /// `λ̂(t) = b̂·t^ν̂`.
    pub fn lambda_at(&self, t: usize) -> f64 {
        self.b_hat * (t as f64).powf(self.nu_hat)
    }

    /// Score of observation `x` at time `t`; `None` when `λ̂(t)` is below the floor.
    pub fn score(&self, t: usize, x: f64) -> Option<f64> {
        let lambda = self.lambda_at(t);
        (lambda >= LAMBDA_FLOOR).then(|| (x - lambda) / lambda.sqrt())
    }
}

fn growth_exponent(cum: f64, t: usize) -> Result<f64> {
    if t <= 1 {
        return Err(Error::TrendNotEstimable(format!("ln t vanishes at t = {t}")));
    }
    if !(cum > 0.0) {
        return Err(Error::TrendNotEstimable(format!("cumulative count {cum} is not positive")));
    }
    Ok(cum.ln() / (t as f64).ln() - 1.0)
}

/// Fits `(ν̂, b̂)` on `X_{t0+1} ..= X_t` of `values`.
pub fn estimate_trend(values: &[f64], t0: usize, t: usize) -> Result<TrendEstimate> {
    if t <= t0 {
        return Err(Error::TrendNotEstimable(format!("empty fit range ({t0}, {t}]")));
    }
    if t > values.len() {
        return Err(Error::InsufficientHistory {
            needed: t,
            available: values.len(),
        });
    }
    let window = &values[t0..t];
    let cum: f64 = window.iter().sum();
    let nu_hat = growth_exponent(cum, t)?;
    let (mut sxu, mut suu) = (0.0, 0.0);
    for (offset, &x) in window.iter().enumerate() {
        let u = ((t0 + offset + 1) as f64).powf(nu_hat);
        sxu += x * u;
        suu += u * u;
    }
    Ok(TrendEstimate {
        nu_hat,
        b_hat: sxu / suu,
        t0,
        t,
        cum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One fit on the whole series, applied to every time.
    Offline,
    /// At each time, a fit on the data available up to that time.
    Online,
}

/// Standardized series plus the indices whose score was clamped to zero.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub series: LabeledSeries,
    pub flagged: Vec<usize>,
    /// Final fit, absent when the whole series was not estimable.
    pub estimate: Option<TrendEstimate>,
    /// True when offline fitting failed and the values were passed through.
    pub identity_fallback: bool,
}

/// Applies the standardization to a count series, carrying labels through.
pub fn standardize(series: &LabeledSeries, t0: usize, mode: Mode) -> Result<Standardized> {
    let values = series.values();
    if let Some(i) = values.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidSeries(format!(
            "negative count {} at index {i}; standardization expects counts",
            values[i]
        )));
    }
    match mode {
        Mode::Offline => {
            let estimate = match estimate_trend(values, t0, values.len()) {
                Ok(e) => e,
                Err(Error::TrendNotEstimable(_)) => {
                    return Ok(Standardized {
                        series: series.clone(),
                        flagged: Vec::new(),
                        estimate: None,
                        identity_fallback: true,
                    })
                }
                Err(e) => return Err(e),
            };
            let mut flagged = Vec::new();
            let z = values
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    estimate.score(i + 1, x).unwrap_or_else(|| {
                        flagged.push(i);
                        0.0
                    })
                })
                .collect();
            Ok(Standardized {
                series: series.with_values(z)?,
                flagged,
                estimate: Some(estimate),
                identity_fallback: false,
            })
        }
        Mode::Online => {
            let mut online = OnlineStandardizer::new(t0);
            let mut flagged = Vec::new();
            let z = values
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    online.push(x).unwrap_or_else(|| {
                        flagged.push(i);
                        0.0
                    })
                })
                .collect();
            Ok(Standardized {
                series: series.with_values(z)?,
                flagged,
                estimate: online.estimate(),
                identity_fallback: false,
            })
        }
    }
}

const EXPANSION_TERMS: usize = 18;
const MAX_EXPANSION_SHIFT: f64 = 0.02;

/// Streaming standardizer that refits `(ν̂, b̂)` at every step.
///
/// The regression sums `Σ X_s s^ν` and `Σ s^{2ν}` depend on the current `ν̂`, so
/// they are kept as moments around a reference exponent `ν_r`:
/// `Σ X_s s^ν = Σ_k (ν − ν_r)^k / k! · Σ X_s s^{ν_r} (ln s)^k`, and likewise for
/// the denominator with `2(ν − ν_r)`. Each step costs `O(EXPANSION_TERMS)`; the
/// moments are rebuilt around the current `ν̂` whenever it drifts more than
/// `MAX_EXPANSION_SHIFT` from `ν_r`.
#[derive(Debug, Clone)]
pub struct OnlineStandardizer {
    t0: usize,
    history: Vec<f64>,
    cum: f64,
    reference: Option<f64>,
    num_moments: [f64; EXPANSION_TERMS],
    den_moments: [f64; EXPANSION_TERMS],
    last: Option<TrendEstimate>,
}

impl OnlineStandardizer {
    pub fn new(t0: usize) -> Self {
        Self {
            t0,
            history: Vec::new(),
            cum: 0.0,
            reference: None,
            num_moments: [0.0; EXPANSION_TERMS],
            den_moments: [0.0; EXPANSION_TERMS],
            last: None,
        }
    }

    /// Number of observations seen, i.e. the current time `t`.
    pub fn time(&self) -> usize {
        self.history.len()
    }

    /// Most recent successful fit.
    pub fn estimate(&self) -> Option<TrendEstimate> {
        self.last
    }

    /// Consumes `X_t` and returns `Ẑ(t)`, or `None` when no score can be formed.
    pub fn push(&mut self, x: f64) -> Option<f64> {
        self.history.push(x);
        let t = self.history.len();
        if t <= self.t0 {
            return None;
        }
        self.cum += x;
        if let Some(nu_ref) = self.reference {
            self.accumulate(t, x, nu_ref);
        }
        let nu_hat = growth_exponent(self.cum, t).ok()?;
        let shift = match self.reference {
            Some(nu_ref) if (nu_hat - nu_ref).abs() <= MAX_EXPANSION_SHIFT => nu_hat - nu_ref,
            _ => {
                self.rebuild(nu_hat);
                0.0
            }
        };
        let (mut num, mut den) = (0.0, 0.0);
        let (mut num_coef, mut den_coef) = (1.0, 1.0);
        for k in 0..EXPANSION_TERMS {
            if k > 0 {
                num_coef *= shift / k as f64;
                den_coef *= 2.0 * shift / k as f64;
            }
            num += num_coef * self.num_moments[k];
            den += den_coef * self.den_moments[k];
        }
        let estimate = TrendEstimate {
            nu_hat,
            b_hat: num / den,
            t0: self.t0,
            t,
            cum: self.cum,
        };
        self.last = Some(estimate);
        estimate.score(t, x)
    }

    fn accumulate(&mut self, s: usize, x: f64, nu_ref: f64) {
        let ln_s = (s as f64).ln();
        let u = (s as f64).powf(nu_ref);
        let (mut num_term, mut den_term) = (x * u, u * u);
        for k in 0..EXPANSION_TERMS {
            self.num_moments[k] += num_term;
            self.den_moments[k] += den_term;
            num_term *= ln_s;
            den_term *= ln_s;
        }
    }

    fn rebuild(&mut self, nu_ref: f64) {
        self.reference = Some(nu_ref);
        self.num_moments = [0.0; EXPANSION_TERMS];
        self.den_moments = [0.0; EXPANSION_TERMS];
        let t0 = self.t0;
        for i in t0..self.history.len() {
            let x = self.history[i];
            self.accumulate(i + 1, x, nu_ref);
        }
    }
}
