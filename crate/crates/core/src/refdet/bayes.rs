//! Bayesian online change point detection with a constant hazard.
//!
//! The run-length posterior is propagated in log space. Each segment is Gaussian
//! with unknown mean and variance under a Normal-Inverse-Gamma prior, so the
//! one-step predictive is a Student-t. After observing `x_t`, mass at run length
//! `r` moves to `r + 1` with weight `1 − H`, and a share `H` of all mass
//! starts a new run at zero.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::series::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NigPrior {
    pub mu0: f64,
    pub kappa0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            kappa0: 1.0,
            alpha0: 1.0,
            beta0: 1.0,
        }
    }
}

impl NigPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa0 > 0.0 && self.alpha0 > 0.0 && self.beta0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::param("prior", "kappa0, alpha0 and beta0 must be positive"));
        }
        Ok(())
    }

    /// Log marginal likelihood of a whole segment, in closed form.
    pub fn log_marginal(&self, xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return 0.0;
        }
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let kn = self.kappa0 + n;
        let an = self.alpha0 + n / 2.0;
        let bn = self.beta0 + 0.5 * ss + self.kappa0 * n * (mean - self.mu0).powi(2) / (2.0 * kn);
        ln_gamma(an) - ln_gamma(self.alpha0) + self.alpha0 * self.beta0.ln() - an * bn.ln()
            + 0.5 * (self.kappa0 / kn).ln()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesParams {
    pub hazard: f64,
    pub cpthreshold: f64,
    /// Alarm mass is `P(r ≤ r_min)`.
    pub r_min: usize,
    /// Steps after a (re)start before decisions are made.
    pub warmup: usize,
    #[serde(default)]
    pub prior: NigPrior,
    /// Run lengths beyond this are dropped and the posterior renormalized.
    #[serde(default)]
    pub max_run_length: Option<usize>,
}

impl Default for BayesParams {
    fn default() -> Self {
        Self {
            hazard: 1.0 / 250.0,
            cpthreshold: 0.5,
            r_min: 5,
            warmup: 20,
            prior: NigPrior::default(),
            max_run_length: None,
        }
    }
}

impl BayesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hazard > 0.0 && self.hazard <= 1.0) {
            return Err(Error::param("hazard", "must lie in (0, 1]"));
        }
        if !(self.cpthreshold > 0.0 && self.cpthreshold < 1.0) {
            return Err(Error::param("cpthreshold", "must lie in (0, 1)"));
        }
        if self.warmup <= self.r_min {
            return Err(Error::param("warmup", "must exceed r_min"));
        }
        self.prior.validate()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior over the run length and per-run sufficient statistics.
#[derive(Debug, Clone)]
pub struct RunLengthPosterior {
    hazard: f64,
    prior: NigPrior,
    log_probs: Vec<f64>,
    mu: Vec<f64>,
    kappa: Vec<f64>,
    /// `alpha` depends only on the run length, so the Student-t log-gamma
    /// ratio is cached per run length.
    lg_ratio: Vec<f64>,
    beta: Vec<f64>,
    log_evidence: f64,
    steps: usize,
    max_run_length: Option<usize>,
}

impl RunLengthPosterior {
    pub fn new(hazard: f64, prior: NigPrior) -> Result<Self> {
        if !(hazard > 0.0 && hazard <= 1.0) {
            return Err(Error::param("hazard", "must lie in (0, 1]"));
        }
        prior.validate()?;
        Ok(Self {
            hazard,
            prior,
            log_probs: vec![0.0],
            mu: vec![prior.mu0],
            kappa: vec![prior.kappa0],
            lg_ratio: Vec::new(),
            beta: vec![prior.beta0],
            log_evidence: 0.0,
            steps: 0,
            max_run_length: None,
        })
    }

    pub fn with_max_run_length(mut self, max: Option<usize>) -> Self {
        self.max_run_length = max;
        self
    }

    fn alpha(&self, r: usize) -> f64 {
        self.prior.alpha0 + r as f64 / 2.0
    }

    fn lg(&mut self, r: usize) -> f64 {
        while self.lg_ratio.len() <= r {
            let a = self.alpha(self.lg_ratio.len());
            self.lg_ratio.push(ln_gamma(a + 0.5) - ln_gamma(a));
        }
        self.lg_ratio[r]
    }

    /// `log p(x_1 .. x_t)` accumulated so far.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Probability of each run length.
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn map_run_length(&self) -> usize {
        self.log_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(r, _)| r)
    }

    /// `P(r ≤ r_max)`.
    pub fn mass_up_to(&self, r_max: usize) -> f64 {
        self.log_probs.iter().take(r_max + 1).map(|l| l.exp()).sum()
    }

    /// Most probable run length in `lo ..= hi`.
    pub fn argmax_in(&self, lo: usize, hi: usize) -> Option<usize> {
        (lo..=hi.min(self.log_probs.len() - 1)).max_by(|&a, &b| self.log_probs[a].total_cmp(&self.log_probs[b]))
    }

    pub fn update(&mut self, x: f64) {
        let n = self.log_probs.len();
        let mut pred = Vec::with_capacity(n);
        for r in 0..n {
            let a = self.alpha(r);
            let (mu, k, b) = (self.mu[r], self.kappa[r], self.beta[r]);
            let scale2 = b * (k + 1.0) / (a * k);
            let nu = 2.0 * a;
            let z = (x - mu) * (x - mu) / (nu * scale2);
            let lp = self.lg(r) - 0.5 * (nu * std::f64::consts::PI * scale2).ln() - (a + 0.5) * z.ln_1p();
            pred.push(self.log_probs[r] + lp);
        }
        let log_h = self.hazard.ln();
        let log_1mh = (1.0 - self.hazard).ln();
        let mut next = Vec::with_capacity(n + 1);
        next.push(log_sum_exp(&pred) + log_h);
        next.extend(pred.iter().map(|p| p + log_1mh));
        let norm = log_sum_exp(&next);
        self.log_evidence += norm;
        for v in next.iter_mut() {
            *v -= norm;
        }

        let mut mu = Vec::with_capacity(n + 1);
        let mut kappa = Vec::with_capacity(n + 1);
        let mut beta = Vec::with_capacity(n + 1);
        mu.push(self.prior.mu0);
        kappa.push(self.prior.kappa0);
        beta.push(self.prior.beta0);
        for r in 0..n {
            let (m, k, b) = (self.mu[r], self.kappa[r], self.beta[r]);
            mu.push((k * m + x) / (k + 1.0));
            kappa.push(k + 1.0);
            beta.push(b + k * (x - m) * (x - m) / (2.0 * (k + 1.0)));
        }
        if let Some(max) = self.max_run_length {
            if next.len() > max + 1 {
                next.truncate(max + 1);
                mu.truncate(max + 1);
                kappa.truncate(max + 1);
                beta.truncate(max + 1);
                let renorm = log_sum_exp(&next);
                next.iter_mut().for_each(|v| *v -= renorm);
            }
        }
        self.log_probs = next;
        self.mu = mu;
        self.kappa = kappa;
        self.beta = beta;
        self.steps += 1;
    }
}

/// Alarms when `P(r ≤ r_min)` exceeds `cpthreshold`, then restarts from the prior.
///
/// The located change point is the start of the most probable short run,
/// counting run lengths from 1.
pub fn detect(params: &BayesParams, values: &[f64]) -> Result<Vec<Detection>> {
    params.validate()?;
    let fresh = || {
        RunLengthPosterior::new(params.hazard, params.prior).map(|p| p.with_max_run_length(params.max_run_length))
    };
    let mut post = fresh()?;
    let mut out = Vec::new();
    for (i, &x) in values.iter().enumerate() {
        post.update(x);
        if post.steps() <= params.warmup {
            continue;
        }
        if post.mass_up_to(params.r_min) > params.cpthreshold {
            let r = post.argmax_in(1, params.r_min.max(1)).unwrap_or(1);
            out.push(Detection::new(i, i + 1 - r));
            post = fresh()?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Evidence by summing over every set of boundaries between observations.
    fn brute_force_log_evidence(xs: &[f64], h: f64, prior: &NigPrior) -> f64 {
        let n = xs.len();
        let mut terms = Vec::new();
        for mask in 0u32..(1 << (n - 1)) {
            let mut lp = 0.0;
            let mut start = 0;
            for gap in 0..n - 1 {
                if mask & (1 << gap) != 0 {
                    lp += h.ln() + prior.log_marginal(&xs[start..=gap]);
                    start = gap + 1;
                } else {
                    lp += (1.0 - h).ln();
                }
            }
            lp += prior.log_marginal(&xs[start..]);
            terms.push(lp);
        }
        log_sum_exp(&terms)
    }

    #[test]
    fn evidence_matches_enumeration() {
        let xs = [0.3, -1.2, 0.8, 2.5, 3.1, 2.2, -0.4, 0.0, 1.7];
        let prior = NigPrior::default();
        let mut post = RunLengthPosterior::new(0.2, prior).unwrap();
        for &x in &xs {
            post.update(x);
            assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let bf = brute_force_log_evidence(&xs, 0.2, &prior);
        assert!((post.log_evidence() - bf).abs() <= 1e-8 * bf.abs(), "{} vs {bf}", post.log_evidence());
    }

    #[test]
    fn hazard_one_always_resets() {
        let mut post = RunLengthPosterior::new(1.0, NigPrior::default()).unwrap();
        for x in [1.0, 5.0, -2.0, 0.5] {
            post.update(x);
            assert!((post.probs()[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_hazard_grows_run_length() {
        let mut post = RunLengthPosterior::new(1e-12, NigPrior::default()).unwrap();
        for t in 1..=50 {
            post.update(((t * 7) % 5) as f64 * 0.1);
            assert_eq!(post.map_run_length(), t);
        }
    }

    #[test]
    fn truncation_keeps_normalization() {
        let mut post = RunLengthPosterior::new(0.01, NigPrior::default())
            .unwrap()
            .with_max_run_length(Some(10));
        for t in 0..40 {
            post.update((t as f64).sin());
        }
        assert_eq!(post.probs().len(), 11);
        assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
