//! Trend-season MOSUM monitoring, a simplified BFAST-style detector.
//!
//! After every (re)start the detector waits for `cap` observations. The stable
//! history is the last `max(minHist, ⌈histFact · cap⌉)` of them; a linear trend
//! plus `k_h` harmonics of period `period` is fitted to it by least squares.
//! From then on the moving sum of the last `⌈h · n⌉` residuals (history
//! residuals included at the start) is compared against the linear boundary
//! `c(level) · σ̂ · √n · (1 + k / n)`, where `n` is the stable history length
//! and `k` the number of monitored observations. `c(level)` comes from a
//! Monte Carlo calibration under Gaussian noise; see [`calibrate_boundary`].

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::least_squares;
use crate::series::Detection;
use crate::simulate::stream_rng;

/// Bandwidths of the shipped calibration table.
pub const TABLE_H: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5];
/// Levels of the shipped calibration table.
pub const TABLE_LEVEL: [f64; 3] = [0.01, 0.05, 0.1];
/// Calibration setup the table was computed with.
pub const TABLE_HIST: usize = 100;
pub const TABLE_HORIZON: usize = 4;
pub const TABLE_REPS: usize = 4000;
pub const TABLE_SEED: u64 = 20_240_601;

/// `c(level)` per row of [`TABLE_H`] and column of [`TABLE_LEVEL`].
/// Produced by `examples/calibrate_mosum.rs`.
pub const BOUNDARY_TABLE: [[f64; 3]; 8] = [
    [0.7945, 0.6868, 0.6338],
    [1.1895, 1.0214, 0.9284],
    [1.5570, 1.3070, 1.1729],
    [1.9011, 1.5667, 1.4046],
    [2.3115, 1.8337, 1.6303],
    [2.6696, 2.1180, 1.8549],
    [3.4281, 2.6592, 2.3077],
    [4.1268, 3.1795, 2.7545],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosumParams {
    #[serde(rename = "minHist")]
    pub min_hist: usize,
    #[serde(rename = "histFact")]
    pub hist_fact: f64,
    /// Bandwidth as a fraction of the stable history.
    pub h: f64,
    pub level: f64,
    #[serde(default)]
    pub k_h: usize,
    /// Observations per seasonal period; only used when `k_h > 0`.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Available history; defaults to four times `minHist`.
    #[serde(default)]
    pub cap: Option<usize>,
}

fn default_period() -> f64 {
    50.0
}

impl Default for MosumParams {
    fn default() -> Self {
        Self {
            min_hist: 50,
            hist_fact: 0.5,
            h: 0.25,
            level: 0.05,
            k_h: 0,
            period: default_period(),
            cap: None,
        }
    }
}

impl MosumParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_hist < 10 {
            return Err(Error::param("minHist", "must be at least 10"));
        }
        if !(self.hist_fact > 0.0 && self.hist_fact <= 1.0) {
            return Err(Error::param("histFact", "must lie in (0, 1]"));
        }
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::param("h", "must lie in (0, 1)"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param("level", "must lie in (0, 1)"));
        }
        if self.k_h > 0 && !(self.period > 2.0) {
            return Err(Error::param("period", "harmonics need a period above 2"));
        }
        if self.cap() < self.min_hist {
            return Err(Error::param("cap", "must be at least minHist"));
        }
        if self.n_hist() <= 2 + 2 * self.k_h {
            return Err(Error::param("minHist", "history too short for the model"));
        }
        Ok(())
    }

    pub fn cap(&self) -> usize {
        self.cap.unwrap_or(4 * self.min_hist)
    }

    pub fn n_hist(&self) -> usize {
        let scaled = (self.hist_fact * self.cap() as f64).ceil() as usize;
        self.min_hist.max(scaled).min(self.cap())
    }

    pub fn bandwidth(&self) -> usize {
        ((self.h * self.n_hist() as f64).ceil() as usize).max(1)
    }
}

/// Intercept, slope and harmonic amplitude/phase pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeasonModel {
    pub alpha1: f64,
    pub alpha2: f64,
    /// `(γ_j, σ_j)`: the j-th harmonic is `γ_j sin(2πjt/ν + σ_j)`.
    pub harmonics: Vec<(f64, f64)>,
    pub period: f64,
    /// Time of the first fitted observation; `t` is measured from it.
    pub origin: usize,
    pub residual_sd: f64,
}

impl TrendSeasonModel {
    fn design(t: f64, k_h: usize, period: f64) -> Vec<f64> {
        let mut row = vec![1.0, t];
        for j in 1..=k_h {
            let w = 2.0 * std::f64::consts::PI * j as f64 * t / period;
            row.push(w.sin());
            row.push(w.cos());
        }
        row
    }

    pub fn fit(values: &[f64], origin: usize, k_h: usize, period: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..values.len()).map(|i| Self::design(i as f64, k_h, period)).collect();
        let beta = least_squares(&rows, values)
            .ok_or_else(|| Error::Untrainable("trend-season design is rank deficient".into()))?;
        let harmonics = (0..k_h)
            .map(|j| {
                let (s, c) = (beta[2 + 2 * j], beta[3 + 2 * j]);
                (s.hypot(c), c.atan2(s))
            })
            .collect();
        let mut model = Self {
            alpha1: beta[0],
            alpha2: beta[1],
            harmonics,
            period,
            origin,
            residual_sd: 0.0,
        };
        let rss: f64 = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - model.predict(origin + i)).powi(2))
            .sum();
        let dof = values.len().saturating_sub(rows[0].len()).max(1);
        model.residual_sd = (rss / dof as f64).sqrt();
        Ok(model)
    }

    pub fn predict(&self, time: usize) -> f64 {
        let t = time as f64 - self.origin as f64;
        let mut v = self.alpha1 + self.alpha2 * t;
        for (j, (g, s)) in self.harmonics.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * (j + 1) as f64 * t / self.period;
            v += g * (w + s).sin();
        }
        v
    }
}

fn interpolate(xs: &[f64], x: f64) -> (usize, usize, f64) {
    if x <= xs[0] {
        return (0, 0, 0.0);
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            return (i - 1, i, (x - xs[i - 1]) / (xs[i] - xs[i - 1]));
        }
    }
    let last = xs.len() - 1;
    (last, last, 0.0)
}

/// Critical value for `(h, level)`, interpolated bilinearly in the shipped table
/// and clamped to its range.
pub fn boundary_constant(h: f64, level: f64) -> f64 {
    let (h0, h1, wh) = interpolate(&TABLE_H, h);
    let (l0, l1, wl) = interpolate(&TABLE_LEVEL, level);
    let at = |i: usize, j: usize| BOUNDARY_TABLE[i][j];
    let lo = at(h0, l0) * (1.0 - wl) + at(h0, l1) * wl;
    let hi = at(h1, l0) * (1.0 - wl) + at(h1, l1) * wl;
    lo * (1.0 - wh) + hi * wh
}

/// Largest value of `|MOSUM_k| / (σ̂ √n (1 + k/n))` over the monitoring period,
/// for one null path of Gaussian noise.
fn null_path_max(n_hist: usize, h: f64, horizon: usize, seed: u64, rep: u64) -> f64 {
    let mut rng = stream_rng(seed, rep);
    let total = n_hist * (1 + horizon);
    let values: Vec<f64> = (0..total).map(|_| StandardNormal.sample(&mut rng)).collect();
    let model = TrendSeasonModel::fit(&values[..n_hist], 0, 0, default_period()).expect("full-rank design");
    let sd = model.residual_sd.max(f64::MIN_POSITIVE);
    let w = ((h * n_hist as f64).ceil() as usize).max(1);
    let resid: Vec<f64> = values.iter().enumerate().map(|(i, v)| v - model.predict(i)).collect();
    let mut sum: f64 = resid[n_hist - w..n_hist].iter().sum();
    let mut worst: f64 = 0.0;
    for t in n_hist..total {
        sum += resid[t] - resid[t - w];
        let k = (t - n_hist + 1) as f64;
        let scale = sd * (n_hist as f64).sqrt() * (1.0 + k / n_hist as f64);
        worst = worst.max(sum.abs() / scale);
    }
    worst
}

/// Monte Carlo `c(level)`: the `1 − level` quantile of the largest scaled
/// MOSUM over `horizon · n_hist` monitored steps of pure noise.
pub fn calibrate_boundary(h: f64, level: f64, n_hist: usize, horizon: usize, reps: usize, seed: u64) -> f64 {
    use rayon::prelude::*;
    let mut maxima: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| null_path_max(n_hist, h, horizon, seed, rep))
        .collect();
    maxima.sort_by(f64::total_cmp);
    let idx = (((1.0 - level) * reps as f64).ceil() as usize).clamp(1, reps) - 1;
    maxima[idx]
}

/// Runs the monitor over `values`, restarting after each alarm. The reported
/// location is the alarm time, since the scheme has no locator.
pub fn detect(params: &MosumParams, values: &[f64]) -> Result<Vec<Detection>> {
    params.validate()?;
    let cap = params.cap();
    let n = params.n_hist();
    let w = params.bandwidth();
    let c = boundary_constant(params.h, params.level);
    let mut out = Vec::new();
    let mut start = 0;
    while start + cap < values.len() {
        let hist = &values[start + cap - n..start + cap];
        let model = TrendSeasonModel::fit(hist, start + cap - n, params.k_h, params.period)?;
        let scale_mag = hist.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let sd = model.residual_sd.max(1e-8 * (1.0 + scale_mag));
        let resid = |i: usize| values[i] - model.predict(i);
        let mut sum: f64 = (start + cap - w..start + cap).map(resid).sum();
        let mut alarm = None;
        for t in start + cap..values.len() {
            sum += resid(t) - resid(t - w);
            let k = (t - (start + cap) + 1) as f64;
            let bound = c * sd * (n as f64).sqrt() * (1.0 + k / n as f64);
            if sum.abs() > bound {
                alarm = Some(t);
                break;
            }
        }
        match alarm {
            Some(t) => {
                out.push(Detection::new(t, t));
                start = t + 1;
            }
            None => break,
        }
    }
    Ok(out)
}
