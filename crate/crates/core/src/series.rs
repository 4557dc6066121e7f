//! Series container, phase labels, detections and hopping-window arithmetic.
//!
//! Indices are 0-based everywhere in the library. File formats and reports
//! shift them to 1-based times at the I/O boundary (see [`crate::io`]).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wear regime of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    /// Background, no wear process running.
    B,
    /// Run-in wear, decaying rate.
    E,
    /// Steady-state wear, constant rate.
    K,
    /// Divergent wear, accelerating rate.
    A,
    /// Experiment paused.
    V,
}

impl Phase {
    pub fn as_char(self) -> char {
        match self {
            Phase::B => 'B',
            Phase::E => 'E',
            Phase::K => 'K',
            Phase::A => 'A',
            Phase::V => 'V',
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "B" => Ok(Phase::B),
            "E" => Ok(Phase::E),
            "K" => Ok(Phase::K),
            "A" => Ok(Phase::A),
            "V" => Ok(Phase::V),
            other => Err(Error::InvalidSeries(format!("unknown phase tag `{other}`"))),
        }
    }
}

/// A labeled change point: the observation at `time` is the first one of phase `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpLabel {
    pub time: usize,
    pub from: Phase,
    pub to: Phase,
}

impl CpLabel {
    pub fn new(time: usize, from: Phase, to: Phase) -> Self {
        Self { time, from, to }
    }
}

/// Univariate observations with optional ground-truth phases and change point labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    values: Vec<f64>,
    phases: Option<Vec<Phase>>,
    cp_labels: Vec<CpLabel>,
}

impl LabeledSeries {
    /// Builds a series, checking every label and phase invariant.
    pub fn new(values: Vec<f64>, phases: Option<Vec<Phase>>, cp_labels: Vec<CpLabel>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "missing or non-finite value at index {i}"
            )));
        }
        for pair in cp_labels.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(Error::InvalidSeries(
                    "change point labels must be strictly increasing in time".into(),
                ));
            }
        }
        if let Some(last) = cp_labels.last() {
            if last.time >= values.len() {
                return Err(Error::InvalidSeries(format!(
                    "label at index {} is outside a series of length {}",
                    last.time,
                    values.len()
                )));
            }
        }
        if let Some(tags) = &phases {
            if tags.len() != values.len() {
                return Err(Error::InvalidSeries(format!(
                    "{} phase tags for {} values",
                    tags.len(),
                    values.len()
                )));
            }
            if !tags.is_empty() {
                let derived = labels_from_phases(tags);
                let consistent = derived.len() == cp_labels.len()
                    && derived.iter().zip(&cp_labels).all(|(d, l)| d == l);
                if !consistent {
                    return Err(Error::InvalidSeries(
                        "phase tags do not change exactly at the change point labels".into(),
                    ));
                }
            }
        }
        Ok(Self {
            values,
            phases,
            cp_labels,
        })
    }

    pub fn unlabeled(values: Vec<f64>) -> Result<Self> {
        Self::new(values, None, Vec::new())
    }

    /// Builds phase tags from `initial` and the labels.
    pub fn from_labels(values: Vec<f64>, initial: Phase, cp_labels: Vec<CpLabel>) -> Result<Self> {
        let mut prev = initial;
        for label in &cp_labels {
            if label.from != prev {
                return Err(Error::InvalidSeries(format!(
                    "label at {} leaves phase {} but the series is in phase {}",
                    label.time, label.from, prev
                )));
            }
            prev = label.to;
        }
        let phases = phases_from_labels(values.len(), initial, &cp_labels);
        Self::new(values, Some(phases), cp_labels)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn phases(&self) -> Option<&[Phase]> {
        self.phases.as_deref()
    }

    pub fn cp_labels(&self) -> &[CpLabel] {
        &self.cp_labels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same labels and phases, new values. Used by transforms such as standardization.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        Self::new(values, self.phases.clone(), self.cp_labels.clone())
    }

    /// Index range of the phase that begins at label `idx`, ending at the next label.
    pub fn phase_range(&self, idx: usize) -> Option<Range<usize>> {
        let start = self.cp_labels.get(idx)?.time;
        let end = self
            .cp_labels
            .get(idx + 1)
            .map_or(self.values.len(), |l| l.time);
        Some(start..end)
    }

    /// Index of the first label entering phase `to` (optionally from `from`).
    pub fn find_label(&self, from: Option<Phase>, to: Phase) -> Option<usize> {
        self.cp_labels
            .iter()
            .position(|l| l.to == to && from.is_none_or(|f| l.from == f))
    }
}

/// Expands labels into one phase tag per index.
pub fn phases_from_labels(len: usize, initial: Phase, labels: &[CpLabel]) -> Vec<Phase> {
    let mut tags = vec![initial; len];
    for (i, label) in labels.iter().enumerate() {
        let end = labels.get(i + 1).map_or(len, |l| l.time).min(len);
        for tag in tags.iter_mut().take(end).skip(label.time) {
            *tag = label.to;
        }
    }
    tags
}

/// Recovers the labels from per-index phase tags.
pub fn labels_from_phases(tags: &[Phase]) -> Vec<CpLabel> {
    tags.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, w)| CpLabel::new(i + 1, w[0], w[1]))
        .collect()
}

/// An input window and the prediction window that follows it.
///
/// The anchor `t` counts the observations available to the input window:
/// the input covers indices `t - l .. t` and the prediction covers `t .. t + b`.
/// In 1-based time this is `I_t = {t-l+1, ..., t}` and `J_t = {t+1, ..., t+b}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPair {
    pub l: usize,
    pub b: usize,
    pub t: usize,
}

impl WindowPair {
    pub fn new(l: usize, b: usize, t: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::param("l", "input window length must be positive"));
        }
        if b == 0 {
            return Err(Error::param("b", "prediction window length must be positive"));
        }
        if t < l {
            return Err(Error::Contract(format!("anchor {t} precedes the input window length {l}")));
        }
        Ok(Self { l, b, t })
    }

    pub fn input_range(&self) -> Range<usize> {
        self.t - self.l..self.t
    }

    pub fn target_range(&self) -> Range<usize> {
        self.t..self.t + self.b
    }
}

/// Anchors `t = l + b*m` whose prediction window starts inside the series.
pub fn hop_grid(l: usize, b: usize, series_len: usize) -> Result<Vec<usize>> {
    if l == 0 || b == 0 {
        return Err(Error::param("l/b", "window lengths must be positive"));
    }
    if series_len <= l {
        return Err(Error::InsufficientHistory {
            needed: l,
            available: series_len,
        });
    }
    Ok((l..series_len).step_by(b).collect())
}

/// Smallest grid anchor that is `>= from`.
pub fn next_anchor(l: usize, b: usize, from: usize) -> usize {
    if from <= l {
        l
    } else {
        l + (from - l).div_ceil(b) * b
    }
}

/// Input slice and (possibly truncated) target slice of a window.
pub fn window_slices<'a>(series: &'a [f64], w: &WindowPair) -> Result<(&'a [f64], &'a [f64])> {
    if w.t < w.l {
        return Err(Error::Contract(format!("anchor {} precedes l = {}", w.t, w.l)));
    }
    if w.t >= series.len() {
        return Err(Error::Contract(format!(
            "anchor {} leaves no prediction window in a series of length {}",
            w.t,
            series.len()
        )));
    }
    let end = (w.t + w.b).min(series.len());
    Ok((&series[w.input_range()], &series[w.t..end]))
}

/// An alarm raised by a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Index at which the alarm fired.
    pub detect_time: usize,
    /// Estimated change point index, never after `detect_time`.
    pub located_time: usize,
    pub detector_id: String,
    pub params_id: String,
}

impl Detection {
    pub fn new(detect_time: usize, located_time: usize) -> Self {
        debug_assert!(located_time <= detect_time);
        Self {
            detect_time,
            located_time: located_time.min(detect_time),
            detector_id: String::new(),
            params_id: String::new(),
        }
    }

    pub fn tagged(mut self, detector_id: &str, params_id: &str) -> Self {
        self.detector_id = detector_id.to_string();
        self.params_id = params_id.to_string();
        self
    }
}
