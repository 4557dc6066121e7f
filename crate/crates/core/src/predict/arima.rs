//! ARIMA(p, d, q) fitted by conditional sum of squares.
//!
//! The differenced series `w` follows
//! `w_t − μ = Σ φ_i (w_{t−i} − μ) + e_t + Σ θ_j e_{t−j}`.
//! `μ` is the mean for `d = 0`, the drift for `d = 1`, and fixed at zero for
//! `d = 2`. Residuals start at index `p` with earlier innovations set to zero.
//! Coefficients are optimized through partial autocorrelations `tanh(u)`, so
//! every fitted AR part is stationary and every MA part invertible.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{mean_var, nelder_mead, NelderMeadOptions};

pub const MAX_P: usize = 5;
pub const MAX_D: usize = 2;
pub const MAX_Q: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    /// Selection criterion of the fit; `NaN` for hand-built models.
    pub aicc: f64,
}

impl ArimaModel {
    pub fn new(d: usize, phi: Vec<f64>, theta: Vec<f64>, intercept: f64, sigma2: f64) -> Result<Self> {
        if phi.iter().chain(&theta).any(|v| !v.is_finite()) || !intercept.is_finite() {
            return Err(Error::NonFinite("ARIMA coefficients"));
        }
        Ok(Self {
            p: phi.len(),
            d,
            q: theta.len(),
            phi,
            theta,
            intercept,
            sigma2,
            aicc: f64::NAN,
        })
    }

    /// Shortest input `forecast` accepts.
    pub fn min_input(&self) -> usize {
        self.d + self.p + 1
    }

    /// In-sample innovations of the differenced series `w`.
    pub fn residuals(&self, w: &[f64]) -> Vec<f64> {
        css_residuals(w, &self.phi, &self.theta, self.intercept)
    }

    /// `horizon` forecasts following the end of `input`.
    pub fn forecast(&self, input: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if input.len() < self.min_input() {
            return Err(Error::InsufficientHistory {
                needed: self.min_input() - 1,
                available: input.len(),
            });
        }
        let levels: Vec<Vec<f64>> = (0..=self.d).map(|k| difference(input, k)).collect();
        let w = &levels[self.d];
        let e = self.residuals(w);
        let mu = self.intercept;
        let n = w.len();
        let mut ext = w.clone();
        let mut ext_e = e;
        for _ in 0..horizon {
            let t = ext.len();
            let mut v = mu;
            for (i, phi) in self.phi.iter().enumerate() {
                v += phi * (ext[t - 1 - i] - mu);
            }
            for (j, theta) in self.theta.iter().enumerate() {
                if let Some(k) = (t - 1).checked_sub(j) {
                    v += theta * ext_e[k];
                }
            }
            ext.push(v);
            ext_e.push(0.0);
        }
        let mut out = ext[n..].to_vec();
        for k in (0..self.d).rev() {
            let mut last = *levels[k].last().expect("non-empty level");
            for v in out.iter_mut() {
                last += *v;
                *v = last;
            }
        }
        Ok(out)
    }
}

/// `d`-fold differencing.
pub fn difference(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// Maps partial autocorrelations in `(−1, 1)` to AR coefficients of a
/// stationary polynomial (Durbin-Levinson recursion).
pub fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi.push(rk);
    }
    phi
}

fn css_residuals(w: &[f64], phi: &[f64], theta: &[f64], mu: f64) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut v = w[t] - mu;
        for (i, a) in phi.iter().enumerate() {
            v -= a * (w[t - 1 - i] - mu);
        }
        for (j, b) in theta.iter().enumerate() {
            if t > j {
                v -= b * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

fn unpack(x: &[f64], p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    let r_ar: Vec<f64> = x[..p].iter().map(|u| u.tanh()).collect();
    let r_ma: Vec<f64> = x[p..p + q].iter().map(|u| u.tanh()).collect();
    let phi = pacf_to_ar(&r_ar);
    let theta = pacf_to_ar(&r_ma).into_iter().map(|c| -c).collect();
    (phi, theta)
}

fn has_intercept(d: usize) -> bool {
    d < 2
}

/// Fits a fixed order. Errors when the history is too short for it.
pub fn fit_arima(history: &[f64], p: usize, d: usize, q: usize) -> Result<ArimaModel> {
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ARIMA history"));
    }
    let needed = p + d + q + 10;
    if history.len() <= needed {
        return Err(Error::Untrainable(format!(
            "ARIMA({p},{d},{q}) needs more than {needed} points, got {}",
            history.len()
        )));
    }
    let w = difference(history, d);
    let (w_mean, w_var) = mean_var(&w);
    let intercept = has_intercept(d);
    let dim = p + q + usize::from(intercept);
    let mut start = vec![0.0; dim];
    let mut steps = vec![0.1; dim];
    if intercept {
        start[dim - 1] = w_mean;
        steps[dim - 1] = 0.1 * w_var.sqrt().max(1e-3);
    }
    let objective = |x: &[f64]| {
        let (phi, theta) = unpack(x, p, q);
        let mu = if intercept { x[dim - 1] } else { 0.0 };
        css_residuals(&w, &phi, &theta, mu)[p..].iter().map(|e| e * e).sum::<f64>()
    };
    let opts = NelderMeadOptions {
        tol: 1e-8,
        max_evals: 400 * (dim + 1),
        ..Default::default()
    };
    let best = nelder_mead(objective, &start, &steps, opts);
    let (phi, theta) = unpack(&best.x, p, q);
    let mu = if intercept { best.x[dim - 1] } else { 0.0 };

    let m = (w.len() - p) as f64;
    let (_, h_var) = mean_var(history);
    let floor = (1e-12 * h_var).max(f64::MIN_POSITIVE);
    let sigma2 = (best.value / m).max(floor);
    let k = (dim + 1) as f64;
    let aic = m * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + 2.0 * k;
    let aicc = if m - k - 1.0 > 0.0 {
        aic + 2.0 * k * (k + 1.0) / (m - k - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(ArimaModel {
        p,
        d,
        q,
        phi,
        theta,
        intercept: mu,
        sigma2,
        aicc,
    })
}

/// Searches `p ≤ 5, d ≤ 2, q ≤ 5` for the smallest AICc.
///
/// Ties go to the smallest `p + d + q`, then the smallest `p`. Orders the
/// history is too short for are skipped.
pub fn auto_arima(history: &[f64]) -> Result<ArimaModel> {
    let orders: Vec<(usize, usize, usize)> = (0..=MAX_P)
        .flat_map(|p| (0..=MAX_D).flat_map(move |d| (0..=MAX_Q).map(move |q| (p, d, q))))
        .collect();
    let fits: Vec<Option<ArimaModel>> = orders
        .par_iter()
        .map(|&(p, d, q)| fit_arima(history, p, d, q).ok().filter(|m| m.aicc.is_finite()))
        .collect();
    fits.into_iter()
        .flatten()
        .min_by(|a, b| {
            a.aicc
                .total_cmp(&b.aicc)
                .then((a.p + a.d + a.q).cmp(&(b.p + b.d + b.q)))
                .then(a.p.cmp(&b.p))
        })
        .ok_or_else(|| Error::Untrainable(format!("no ARIMA order fits {} points", history.len())))
}
