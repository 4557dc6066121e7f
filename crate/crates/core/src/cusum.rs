//! Decision-interval CUSUM with a last-zero locator.
//!
//! Upward form: `S_j = max(0, S_{j-1} + x_j − θ_j − k)`, alarm when `S_j > λ`.
//! Downward form swaps `max` for `min`, adds `k`, and alarms when `S_j < −λ`.
//! The target `θ_j` is supplied per step, so the same chart serves a constant
//! target, a running mean, or a forecast.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Up,
    Down,
}

/// Chart parameters: allowance `k` and decision interval `λ` (desInt).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumParams {
    pub k: f64,
    pub threshold: f64,
    #[serde(default)]
    pub direction: Direction,
}

impl CusumParams {
    pub fn new(k: f64, threshold: f64) -> Result<Self> {
        let p = Self {
            k,
            threshold,
            direction: Direction::Up,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn down(mut self) -> Self {
        self.direction = Direction::Down;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::param("k", "allowance must be finite and non-negative"));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::param("desInt", "decision interval must be positive"));
        }
        Ok(())
    }
}

impl Default for CusumParams {
    fn default() -> Self {
        Self {
            k: 0.5,
            threshold: 5.0,
            direction: Direction::Up,
        }
    }
}

/// Running chart state.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    params: CusumParams,
    s: f64,
    /// Index the next call to `step` consumes.
    now: usize,
    /// First index after the most recent zero of `S`; the located change point.
    candidate: usize,
    alarmed: bool,
}

impl CusumState {
    /// Fresh chart whose first observation has index `start`.
    pub fn new(params: CusumParams, start: usize) -> Self {
        Self {
            params,
            s: 0.0,
            now: start,
            candidate: start,
            alarmed: false,
        }
    }

    pub fn params(&self) -> &CusumParams {
        &self.params
    }

    pub fn statistic(&self) -> f64 {
        self.s
    }

    /// Index the next observation will carry.
    pub fn now(&self) -> usize {
        self.now
    }

    /// Most recent index with `S = 0`, `None` if that was before the first observation.
    pub fn last_zero(&self) -> Option<usize> {
        self.candidate.checked_sub(1)
    }

    /// Advances the chart by one observation and reports whether it alarms.
    pub fn step(&mut self, x: f64, target: f64) -> bool {
        let CusumParams {
            k,
            threshold,
            direction,
        } = self.params;
        let increment = x - target;
        let (s, alarm) = match direction {
            Direction::Up => {
                let s = (self.s + increment - k).max(0.0);
                (s, s > threshold)
            }
            Direction::Down => {
                let s = (self.s + increment + k).min(0.0);
                (s, s < -threshold)
            }
        };
        self.s = s;
        self.now += 1;
        if s == 0.0 {
            self.candidate = self.now;
        }
        self.alarmed = alarm;
        alarm
    }

    /// Located change point of the alarm just raised: the first index after the last zero.
    pub fn locate(&self) -> Result<usize> {
        if !self.alarmed {
            return Err(Error::Contract("locate called without a pending alarm".into()));
        }
        Ok(self.candidate)
    }

    /// Clears the sum; the next observation starts a fresh run.
    pub fn reset(&mut self) {
        self.s = 0.0;
        self.candidate = self.now;
        self.alarmed = false;
    }

    /// Moves to `index` without observing the skipped indices; the sum is kept.
    pub fn skip_to(&mut self, index: usize) {
        if index > self.now {
            self.now = index;
            if self.s == 0.0 {
                self.candidate = index;
            }
        }
    }
}

/// Chart state after one compared observation, for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time: usize,
    pub value: f64,
    pub target: f64,
    pub statistic: f64,
    pub alarm: bool,
}

/// Where the classic chart takes its target from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetMode {
    Constant { theta: f64 },
    /// Mean of the preceding `window` observations; no decisions until `window` exist.
    RunningMean { window: usize },
}

impl Default for TargetMode {
    fn default() -> Self {
        TargetMode::RunningMean { window: 50 }
    }
}

/// Produces targets for a stream from its own past.
#[derive(Debug, Clone)]
pub struct TargetTracker {
    mode: TargetMode,
    recent: VecDeque<f64>,
}

impl TargetTracker {
    pub fn new(mode: TargetMode) -> Self {
        Self {
            mode,
            recent: VecDeque::new(),
        }
    }

    /// Target for the next observation, `None` during warm-up.
    pub fn target(&self) -> Option<f64> {
        match self.mode {
            TargetMode::Constant { theta } => Some(theta),
            TargetMode::RunningMean { window } => (window > 0 && self.recent.len() == window)
                .then(|| self.recent.iter().sum::<f64>() / window as f64),
        }
    }

    pub fn observe(&mut self, x: f64) {
        if let TargetMode::RunningMean { window } = self.mode {
            self.recent.push_back(x);
            if self.recent.len() > window {
                self.recent.pop_front();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_target_data_never_accumulates() {
        let mut c = CusumState::new(CusumParams::new(0.5, 1.0).unwrap(), 0);
        for _ in 0..100 {
            assert!(!c.step(2.0, 2.0));
            assert_eq!(c.statistic(), 0.0);
        }
    }

    #[test]
    fn hand_evaluated_recursion() {
        let mut c = CusumState::new(CusumParams::new(0.5, 3.0).unwrap(), 0);
        let xs = [1.0, 2.0, 5.0, 5.0];
        let expected = [0.0, 0.5, 4.0];
        for (j, &x) in xs.iter().take(3).enumerate() {
            let alarm = c.step(x, 1.0);
            assert_eq!(c.statistic(), expected[j]);
            assert_eq!(alarm, j == 2);
        }
        // last zero at 1-based j = 1, located change point at 1-based 2
        assert_eq!(c.last_zero(), Some(0));
        assert_eq!(c.locate().unwrap(), 1);
        let mut cont = c.clone();
        cont.step(5.0, 1.0);
        assert_eq!(cont.statistic(), 7.5);
    }

    #[test]
    fn huge_allowance_keeps_sum_at_zero() {
        let mut c = CusumState::new(CusumParams::new(100.0, 1.0).unwrap(), 0);
        for i in 0..50 {
            c.step(f64::from(i % 7) * 10.0, 0.0);
            assert_eq!(c.statistic(), 0.0);
        }
    }

    #[test]
    fn locate_requires_alarm() {
        let c = CusumState::new(CusumParams::default(), 0);
        assert!(c.locate().is_err());
    }

    #[test]
    fn alarm_right_after_reset_locates_at_reset_time() {
        let mut c = CusumState::new(CusumParams::new(0.0, 1.0).unwrap(), 0);
        c.step(0.0, 0.0);
        c.step(0.0, 0.0);
        c.reset();
        assert!(c.step(5.0, 0.0));
        assert_eq!(c.locate().unwrap(), 2);
    }

    #[test]
    fn reset_is_idempotent_and_matches_fresh_state() {
        let p = CusumParams::new(0.5, 2.0).unwrap();
        let mut c = CusumState::new(p, 0);
        c.step(3.0, 0.0);
        c.reset();
        let once = c.clone();
        c.reset();
        assert_eq!(once, c);
        let mut fresh = CusumState::new(p, 1);
        let mut reset = c.clone();
        fresh.step(1.7, 0.0);
        reset.step(1.7, 0.0);
        assert_eq!(fresh.statistic(), reset.statistic());
        assert_eq!(fresh.last_zero(), reset.last_zero());
    }

    #[test]
    fn downward_chart_mirrors_upward() {
        let up = CusumParams::new(0.5, 3.0).unwrap();
        let mut u = CusumState::new(up, 0);
        let mut d = CusumState::new(up.down(), 0);
        for &x in &[1.0, 2.0, 5.0, 5.0] {
            let a = u.step(x, 1.0);
            let b = d.step(-x, -1.0);
            assert_eq!(a, b);
            assert_eq!(u.statistic(), -d.statistic());
        }
    }

    #[test]
    fn running_mean_target_warms_up() {
        let mut t = TargetTracker::new(TargetMode::RunningMean { window: 3 });
        assert_eq!(t.target(), None);
        for x in [1.0, 2.0, 3.0] {
            t.observe(x);
        }
        assert_eq!(t.target(), Some(2.0));
        t.observe(7.0);
        assert_eq!(t.target(), Some(4.0));
    }
}
