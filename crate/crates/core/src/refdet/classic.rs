//! CUSUM against a running mean (or constant) target, reset after each alarm.

use serde::{Deserialize, Serialize};

use crate::cusum::{CusumParams, CusumState, TargetMode, TargetTracker, TracePoint};
use crate::error::Result;
use crate::series::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicCusum {
    pub params: CusumParams,
    pub target: TargetMode,
}

impl ClassicCusum {
    pub fn new(params: CusumParams, target: TargetMode) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, target })
    }

    pub fn detect(&self, values: &[f64]) -> Vec<Detection> {
        self.run(values, None)
    }

    /// Detections plus the chart value at every decided step.
    pub fn detect_traced(&self, values: &[f64]) -> (Vec<Detection>, Vec<TracePoint>) {
        let mut trace = Vec::new();
        let d = self.run(values, Some(&mut trace));
        (d, trace)
    }

    fn run(&self, values: &[f64], mut trace: Option<&mut Vec<TracePoint>>) -> Vec<Detection> {
        let mut tracker = TargetTracker::new(self.target.clone());
        let mut chart: Option<CusumState> = None;
        let mut out = Vec::new();
        for (i, &x) in values.iter().enumerate() {
            if let Some(target) = tracker.target() {
                let c = chart.get_or_insert_with(|| CusumState::new(self.params, i));
                let alarm = c.step(x, target);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TracePoint {
                        time: i,
                        value: x,
                        target,
                        statistic: c.statistic(),
                        alarm,
                    });
                }
                if alarm {
                    let located = c.locate().expect("alarm pending");
                    out.push(Detection::new(i, located));
                    c.reset();
                }
            }
            tracker.observe(x);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_matches_hand_example() {
        let det = ClassicCusum::new(CusumParams::new(0.5, 3.0).unwrap(), TargetMode::Constant { theta: 1.0 }).unwrap();
        let d = det.detect(&[1.0, 2.0, 5.0, 5.0]);
        // the chart restarts after the alarm and the last 5 alarms again on its own
        assert_eq!(d, vec![Detection::new(2, 1), Detection::new(3, 3)]);
    }

    #[test]
    fn running_mean_waits_for_window() {
        let det = ClassicCusum::new(CusumParams::new(0.0, 0.5).unwrap(), TargetMode::RunningMean { window: 5 }).unwrap();
        let mut v = vec![100.0; 5];
        v.extend([0.0; 5]);
        let (d, trace) = det.detect_traced(&[&[0.0; 4][..], &v[..]].concat());
        assert_eq!(trace[0].time, 5);
        assert!(d.iter().all(|d| d.detect_time >= 5));
    }
}
