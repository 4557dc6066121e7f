//! Synthetic wear data.
//!
//! Counts are drawn bin by bin from an inhomogeneous Poisson process whose
//! intensity combines a decaying run-in term, a constant steady-state rate and
//! a linearly growing divergent term:
//!
//! ```text
//! f(t) = a·λ·exp(-λ·t) + c + d·1[t ≥ t2]·(t - t2)
//! ```
//!
//! Index `i` of a generated series is the bin `[i, i + 1)` of continuous time,
//! so the analytic change point times `t1` and `t2` are also the label indices.
//!
//! Every generator takes a `u64` seed and uses ChaCha8. Suites derive one
//! stream per member with [`stream_rng`], so member `i` never depends on how
//! many values earlier members consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{CpLabel, LabeledSeries, Phase};

/// Seeded generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one Poisson variate; a zero mean yields zero.
pub fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0)
}

/// Rate of wear with run-in, steady-state and divergent components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WearIntensity {
    /// Run-in amplitude.
    pub a: f64,
    /// Run-in decay rate per step.
    pub lambda: f64,
    /// Steady-state rate.
    pub c: f64,
    /// Divergence slope, counts per step².
    pub d: f64,
    /// Onset of divergent wear.
    pub t2: f64,
    /// Run-in is considered over once its rate decayed to this fraction of the initial rate.
    #[serde(default = "default_run_in_fraction")]
    pub run_in_fraction: f64,
}

fn default_run_in_fraction() -> f64 {
    0.05
}

impl WearIntensity {
    pub fn new(a: f64, lambda: f64, c: f64, d: f64, t2: f64) -> Result<Self> {
        let wi = Self {
            a,
            lambda,
            c,
            d,
            t2,
            run_in_fraction: default_run_in_fraction(),
        };
        wi.validate()?;
        Ok(wi)
    }

    /// Every component non-negative, which keeps `f` non-negative on `[0, ∞)`.
    pub fn validate(&self) -> Result<()> {
        let fields = [("a", self.a), ("c", self.c), ("d", self.d), ("t2", self.t2)];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(
                    "intensity",
                    format!("{name} = {v} would allow a negative or undefined intensity"),
                ));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::param("lambda", "decay rate must be positive"));
        }
        if !(self.run_in_fraction > 0.0 && self.run_in_fraction < 1.0) {
            return Err(Error::param("run_in_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// f(t).
    pub fn rate(&self, t: f64) -> f64 {
        let run_in = self.a * self.lambda * (-self.lambda * t).exp();
        let divergent = if t >= self.t2 { self.d * (t - self.t2) } else { 0.0 };
        run_in + self.c + divergent
    }

    /// Closed-form integral of f over `[from, to]`.
    pub fn integral(&self, from: f64, to: f64) -> f64 {
        let run_in = self.a * ((-self.lambda * from).exp() - (-self.lambda * to).exp());
        let steady = self.c * (to - from);
        let tail = |t: f64| {
            let x = (t - self.t2).max(0.0);
            0.5 * self.d * x * x
        };
        run_in + steady + tail(to) - tail(from)
    }

    /// First integer time where the run-in rate has decayed to `run_in_fraction`
    /// of its initial value; `None` without a run-in term.
    pub fn t1(&self) -> Option<usize> {
        if self.a <= 0.0 {
            return None;
        }
        let guess = ((1.0 / self.run_in_fraction).ln() / self.lambda).ceil().max(0.0) as usize;
        // correct the float guess against the defining inequality
        let decayed = |t: usize| (-self.lambda * t as f64).exp() <= self.run_in_fraction;
        let mut t = guess;
        while t > 0 && decayed(t - 1) {
            t -= 1;
        }
        while !decayed(t) {
            t += 1;
        }
        Some(t)
    }

    /// Change point labels of a series of length `n`.
    pub fn labels(&self, n: usize) -> (Phase, Vec<CpLabel>) {
        let t2 = self.t2.ceil() as usize;
        let has_divergence = self.d > 0.0 && t2 < n;
        let mut labels = Vec::new();
        let initial = match self.t1() {
            Some(t1) if t1 > 0 && t1 < n && (!has_divergence || t1 < t2) => {
                labels.push(CpLabel::new(t1, Phase::E, Phase::K));
                Phase::E
            }
            Some(t1) if t1 > 0 && (t1 >= n || (has_divergence && t1 >= t2)) => Phase::E,
            _ => Phase::K,
        };
        if has_divergence && t2 > 0 {
            let from = labels.last().map_or(initial, |l| l.to);
            labels.push(CpLabel::new(t2, from, Phase::A));
        }
        (initial, labels)
    }

    /// Expected count of bin `i`.
    pub fn bin_mean(&self, i: usize) -> f64 {
        self.integral(i as f64, i as f64 + 1.0)
    }
}

impl Default for WearIntensity {
    /// Demo parameters: run-in ends near t = 300, divergence starts at 2500.
    fn default() -> Self {
        Self {
            a: 1500.0,
            lambda: 0.01,
            c: 4.0,
            d: 0.004,
            t2: 2500.0,
            run_in_fraction: default_run_in_fraction(),
        }
    }
}

/// Counts per bin from the inhomogeneous Poisson process with intensity `wi`.
pub fn sample_poisson_series(wi: &WearIntensity, n: usize, seed: u64) -> Result<LabeledSeries> {
    sample_poisson_stream(wi, n, &mut stream_rng(seed, 0))
}

fn sample_poisson_stream(wi: &WearIntensity, n: usize, rng: &mut ChaCha8Rng) -> Result<LabeledSeries> {
    if n == 0 {
        return Err(Error::param("n", "series length must be at least 1"));
    }
    wi.validate()?;
    let values = (0..n).map(|i| poisson_draw(rng, wi.bin_mean(i))).collect();
    let (initial, labels) = wi.labels(n);
    LabeledSeries::from_labels(values, initial, labels)
}

/// Gaussian step: mean `pre_mean` before index `cp_at`, `post_mean` from `cp_at` on.
pub fn sample_step_series(
    pre_mean: f64,
    post_mean: f64,
    sigma: f64,
    cp_at: usize,
    n: usize,
    seed: u64,
) -> Result<LabeledSeries> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "noise level must be non-negative"));
    }
    if cp_at == 0 || cp_at >= n {
        return Err(Error::param("cp_at", format!("change point {cp_at} outside 1..{n}")));
    }
    let mut rng = stream_rng(seed, 0);
    let values = (0..n)
        .map(|i| {
            let mean = if i < cp_at { pre_mean } else { post_mean };
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + sigma * z
        })
        .collect();
    LabeledSeries::from_labels(values, Phase::K, vec![CpLabel::new(cp_at, Phase::K, Phase::A)])
}

/// Deterministic part of a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trend {
    Constant { level: f64 },
    Linear { intercept: f64, slope: f64 },
    Wear(WearIntensity),
}

impl Trend {
    /// Mean of bin `i`.
    pub fn bin_mean(&self, i: usize) -> f64 {
        match self {
            Trend::Constant { level } => *level,
            Trend::Linear { intercept, slope } => intercept + slope * (i as f64 + 0.5),
            Trend::Wear(wi) => wi.bin_mean(i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    /// Counts with the trend as intensity (plus the anomaly, floored at zero).
    Poisson,
    Gaussian { sigma: f64 },
}

/// Additive structural change starting at `start`: `level + slope·(i - start)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anomaly {
    pub start: usize,
    pub level: f64,
    #[serde(default)]
    pub slope: f64,
}

impl Anomaly {
    pub fn at(&self, i: usize) -> f64 {
        if i < self.start {
            0.0
        } else {
            self.level + self.slope * (i - self.start) as f64
        }
    }
}

/// Trend plus noise plus an optional anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalModel {
    pub trend: Trend,
    pub noise: NoiseKind,
    #[serde(default)]
    pub anomaly: Option<Anomaly>,
}

impl SignalModel {
    pub fn mean_at(&self, i: usize) -> f64 {
        self.trend.bin_mean(i) + self.anomaly.map_or(0.0, |a| a.at(i))
    }

    /// Draws `n` observations. An anomaly is labeled `K -> A` at its start.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledSeries> {
        if n == 0 {
            return Err(Error::param("n", "series length must be at least 1"));
        }
        let mut rng = stream_rng(seed, 0);
        let normal = match self.noise {
            NoiseKind::Gaussian { sigma } => Some(
                Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?,
            ),
            NoiseKind::Poisson => None,
        };
        let values = (0..n)
            .map(|i| {
                let mean = self.mean_at(i);
                match &normal {
                    Some(dist) => mean + dist.sample(&mut rng),
                    None => poisson_draw(&mut rng, mean.max(0.0)),
                }
            })
            .collect();
        let (initial, labels) = match (&self.trend, self.anomaly) {
            (_, Some(a)) if a.start > 0 && a.start < n => {
                (Phase::K, vec![CpLabel::new(a.start, Phase::K, Phase::A)])
            }
            (Trend::Wear(wi), None) => wi.labels(n),
            _ => (Phase::K, Vec::new()),
        };
        LabeledSeries::from_labels(values, initial, labels)
    }
}

/// How a noise scale acts on a wear series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrMode {
    /// Trend plus `scale · sigma · N(0, 1)`.
    Gaussian { sigma: f64 },
    /// Poisson counts of intensity `f / scale²`, rescaled by `scale²`:
    /// same mean, noise standard deviation multiplied by `scale`.
    Poisson,
}

/// One series per noise scale with identical trend and labels.
///
/// Member `i` uses stream `i` of `seed`. A scale of zero gives the noiseless trend.
pub fn snr_suite(
    base: &WearIntensity,
    noise_scales: &[f64],
    mode: SnrMode,
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledSeries>> {
    if noise_scales.is_empty() {
        return Err(Error::param("noise_scales", "at least one scale is required"));
    }
    if n == 0 {
        return Err(Error::param("n", "series length must be at least 1"));
    }
    base.validate()?;
    let (initial, labels) = base.labels(n);
    noise_scales
        .iter()
        .enumerate()
        .map(|(member, &scale)| {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(Error::param("noise_scales", format!("invalid scale {scale}")));
            }
            let mut rng = stream_rng(seed, member as u64);
            let values = (0..n)
                .map(|i| {
                    let mean = base.bin_mean(i);
                    if scale == 0.0 {
                        return mean;
                    }
                    match mode {
                        SnrMode::Gaussian { sigma } => {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            mean + scale * sigma * z
                        }
                        SnrMode::Poisson => {
                            let m = 1.0 / (scale * scale);
                            poisson_draw(&mut rng, mean * m) / m
                        }
                    }
                })
                .collect();
            LabeledSeries::from_labels(values, initial, labels.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_examples() {
        let wi = WearIntensity::new(100.0, 0.01, 2.0, 0.0, 50.0).unwrap();
        assert!((wi.rate(0.0) - 3.0).abs() < 1e-12);
        assert!((wi.rate(1e6) - 2.0).abs() < 1e-12);
        let lin = WearIntensity::new(0.0, 1.0, 2.0, 0.5, 10.0).unwrap();
        assert!((lin.rate(14.0) - 4.0).abs() < 1e-12);
        assert!((lin.rate(9.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn integral_matches_quadrature() {
        let wi = WearIntensity::new(300.0, 0.02, 3.0, 0.1, 40.0).unwrap();
        for &(from, to) in &[(0.0, 1.0), (39.5, 40.5), (10.0, 80.0)] {
            let steps = 200_000;
            let h = (to - from) / steps as f64;
            // composite Simpson
            let mut acc = wi.rate(from) + wi.rate(to);
            for k in 1..steps {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * wi.rate(from + k as f64 * h);
            }
            let simpson = acc * h / 3.0;
            assert!((simpson - wi.integral(from, to)).abs() < 1e-6, "{from}..{to}");
        }
    }

    #[test]
    fn t1_is_first_decayed_integer() {
        let wi = WearIntensity::new(100.0, 0.01, 2.0, 0.0, 0.0).unwrap();
        let t1 = wi.t1().unwrap();
        assert!((-0.01 * t1 as f64).exp() <= 0.05);
        assert!((-0.01 * (t1 - 1) as f64).exp() > 0.05);
        assert_eq!(t1, 300);
    }

    #[test]
    fn rejects_negative_components() {
        assert!(WearIntensity::new(-1.0, 0.01, 2.0, 0.0, 0.0).is_err());
        assert!(WearIntensity::new(1.0, 0.0, 2.0, 0.0, 0.0).is_err());
        assert!(WearIntensity::new(1.0, 0.1, -2.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_intensity_gives_zero_counts() {
        let wi = WearIntensity {
            a: 0.0,
            lambda: 1.0,
            c: 0.0,
            d: 0.0,
            t2: 0.0,
            run_in_fraction: 0.05,
        };
        let s = sample_poisson_series(&wi, 100, 3).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert!(s.cp_labels().is_empty());
    }

    #[test]
    fn labels_match_analytic_times() {
        let wi = WearIntensity::default();
        let s = sample_poisson_series(&wi, 4000, 1).unwrap();
        let labels = s.cp_labels();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0], CpLabel::new(wi.t1().unwrap(), Phase::E, Phase::K));
        assert_eq!(labels[1], CpLabel::new(2500, Phase::K, Phase::A));
    }

    #[test]
    fn step_series_examples() {
        let s = sample_step_series(0.0, 3.0, 1.0, 100, 200, 7).unwrap();
        assert_eq!(s.cp_labels(), &[CpLabel::new(100, Phase::K, Phase::A)]);
        let exact = sample_step_series(1.0, 2.0, 0.0, 5, 10, 7).unwrap();
        assert_eq!(exact.values(), &[1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        assert!(sample_step_series(0.0, 1.0, -1.0, 5, 10, 0).is_err());
        assert!(sample_step_series(0.0, 1.0, 1.0, 10, 10, 0).is_err());
    }

    #[test]
    fn suite_shares_labels_and_zero_scale_is_noiseless() {
        let wi = WearIntensity::default();
        let suite = snr_suite(&wi, &[0.0, 1.0, 2.0], SnrMode::Gaussian { sigma: 1.0 }, 3000, 5)
            .unwrap();
        assert_eq!(suite.len(), 3);
        assert!(suite.iter().all(|s| s.cp_labels() == suite[0].cp_labels()));
        for (i, &v) in suite[0].values().iter().enumerate() {
            assert_eq!(v, wi.bin_mean(i));
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let wi = WearIntensity::default();
        let a = sample_poisson_series(&wi, 500, 11).unwrap();
        let b = sample_poisson_series(&wi, 500, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_poisson_series(&wi, 500, 12).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn anomaly_signal_is_labeled() {
        let model = SignalModel {
            trend: Trend::Constant { level: 0.0 },
            noise: NoiseKind::Gaussian { sigma: 0.0 },
            anomaly: Some(Anomaly {
                start: 30,
                level: 2.0,
                slope: 0.0,
            }),
        };
        let s = model.sample(50, 0).unwrap();
        assert_eq!(s.values()[29], 0.0);
        assert_eq!(s.values()[30], 2.0);
        assert_eq!(s.cp_labels()[0].time, 30);
    }
}
