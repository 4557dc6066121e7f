//! Tail-scan likelihood-ratio detector for a mean shift, one-dimensional case.
//!
//! A baseline of `baseline` observations fixes mean and scale, at the start and
//! again after every detection. Each later observation is standardized and the
//! statistic is `max_{h ≤ h_tail} S_h² / (2h)`, with `S_h` the sum of the last
//! `h` scores. The off-diagonal statistic aggregates evidence across
//! coordinates; with a single coordinate there is nothing to aggregate and it
//! is identically zero.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean_var;
use crate::series::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcdParams {
    pub diag: f64,
    #[serde(rename = "offDiag")]
    pub off_diag: f64,
    pub h_tail: usize,
    /// Observations used to estimate the baseline.
    pub baseline: usize,
}

impl Default for OcdParams {
    fn default() -> Self {
        Self {
            diag: 10.0,
            off_diag: 10.0,
            h_tail: 50,
            baseline: 100,
        }
    }
}

impl OcdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diag > 0.0 && self.off_diag > 0.0) {
            return Err(Error::param("diag/offDiag", "thresholds must be positive"));
        }
        if self.h_tail == 0 {
            return Err(Error::param("h_tail", "must be at least 1"));
        }
        if self.baseline < 2 {
            return Err(Error::param("baseline", "needs at least 2 observations"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OcdState {
    params: OcdParams,
    warm: Vec<f64>,
    mean: f64,
    sd: f64,
    tail: VecDeque<f64>,
}

/// Statistics after one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcdStep {
    pub diag: f64,
    pub off_diag: f64,
    /// Length of the maximizing tail.
    pub tail_len: usize,
}

impl OcdState {
    pub fn new(params: OcdParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            warm: Vec::with_capacity(params.baseline),
            tail: VecDeque::with_capacity(params.h_tail),
            params,
            mean: 0.0,
            sd: 1.0,
        })
    }

    pub fn restart(&mut self) {
        self.warm.clear();
        self.tail.clear();
    }

    /// `None` while the baseline is being collected.
    pub fn step(&mut self, x: f64) -> Option<OcdStep> {
        if self.warm.len() < self.params.baseline {
            self.warm.push(x);
            if self.warm.len() == self.params.baseline {
                let (m, v) = mean_var(&self.warm);
                self.mean = m;
                self.sd = v.sqrt().max(1e-12);
            }
            return None;
        }
        if self.tail.len() == self.params.h_tail {
            self.tail.pop_back();
        }
        self.tail.push_front((x - self.mean) / self.sd);
        let mut sum = 0.0;
        let mut best = 0.0;
        let mut best_h = 1;
        for (k, z) in self.tail.iter().enumerate() {
            sum += z;
            let h = (k + 1) as f64;
            let stat = sum * sum / (2.0 * h);
            if stat > best {
                best = stat;
                best_h = k + 1;
            }
        }
        Some(OcdStep {
            diag: best,
            off_diag: 0.0,
            tail_len: best_h,
        })
    }
}

/// Scans `values`, re-estimating the baseline after each alarm. The location
/// is the start of the maximizing tail.
pub fn detect(params: &OcdParams, values: &[f64]) -> Result<Vec<Detection>> {
    let mut state = OcdState::new(params.clone())?;
    let mut out = Vec::new();
    for (i, &x) in values.iter().enumerate() {
        if let Some(s) = state.step(x) {
            if s.diag > params.diag || s.off_diag > params.off_diag {
                out.push(Detection::new(i, i + 1 - s.tail_len));
                state.restart();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_statistic() {
        let mut s = OcdState::new(OcdParams::default()).unwrap();
        for _ in 0..300 {
            if let Some(st) = s.step(4.0) {
                assert_eq!(st.diag, 0.0);
            }
        }
        assert!(detect(&OcdParams::default(), &[4.0; 300]).unwrap().is_empty());
    }

    #[test]
    fn shift_located_at_tail_start() {
        let mut v: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        v.extend(std::iter::repeat_n(5.0, 20));
        let p = OcdParams {
            diag: 20.0,
            ..Default::default()
        };
        let d = detect(&p, &v).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].located_time, 100);
        assert!(d[0].detect_time < 105);
    }
}
