//! False-positive count (Fpc), relative detection delay (ArlP), grid runs and
//! best-run selection.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Detection, LabeledSeries, Phase};

/// Which detection time is compared with the labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    #[default]
    Located,
    Detect,
}

impl Position {
    fn of(self, d: &Detection) -> usize {
        match self {
            Position::Located => d.located_time,
            Position::Detect => d.detect_time,
        }
    }
}

/// The change point a run is scored on, by its phase transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub from: Option<Phase>,
    pub to: Phase,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            from: Some(Phase::K),
            to: Phase::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub target: Option<Detection>,
    /// Detections placed before the target label, up to the target detection.
    pub false_positives: Vec<Detection>,
}

impl Attribution {
    pub fn fpc(&self) -> usize {
        self.false_positives.len()
    }
}

/// Span a target detection may fall in: the phase starting at the label plus
/// any paused phases directly following it.
pub fn target_region(series: &LabeledSeries, label_idx: usize) -> Option<Range<usize>> {
    let mut range = series.phase_range(label_idx)?;
    let labels = series.cp_labels();
    let mut next = label_idx + 1;
    while let Some(l) = labels.get(next) {
        if l.to != Phase::V || l.time != range.end {
            break;
        }
        range.end = series.phase_range(next).map_or(range.end, |r| r.end);
        next += 1;
    }
    Some(range)
}

/// Walks detections in alarm order and stops at the first one inside the
/// target region. Earlier detections placed before the label are false
/// positives; anything after the target detection is not looked at.
pub fn attribute(detections: &[Detection], label_time: usize, region: Range<usize>, position: Position) -> Attribution {
    let mut ordered: Vec<&Detection> = detections.iter().collect();
    ordered.sort_by_key(|d| d.detect_time);
    let mut fps = Vec::new();
    for d in ordered {
        let pos = position.of(d);
        if pos < label_time {
            fps.push(d.clone());
        } else if region.contains(&pos) {
            return Attribution {
                target: Some(d.clone()),
                false_positives: fps,
            };
        }
    }
    Attribution {
        target: None,
        false_positives: fps,
    }
}

/// `100 · (detection − label) / phase_length`.
pub fn arlp(detection: f64, label: f64, phase_length: f64) -> Result<f64> {
    if !(phase_length > 0.0) {
        return Err(Error::param("phase_length", "must be positive"));
    }
    if detection < label {
        return Err(Error::Contract(format!("detection {detection} precedes label {label}")));
    }
    Ok(100.0 * (detection - label) / phase_length)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset_id: String,
    pub detector_id: String,
    pub params_id: String,
    pub n_detections: usize,
    /// A count, averaged for repeated random runs.
    pub fpc: f64,
    pub arlp: Option<f64>,
    pub target_found: bool,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(skip)]
    pub detections: Vec<Detection>,
}

/// Scores one run. The delay is measured from the label to the alarm time;
/// the phase length is that of the phase starting at the label.
pub fn score(
    dataset_id: &str,
    detector_id: &str,
    params_id: &str,
    series: &LabeledSeries,
    detections: Vec<Detection>,
    target: TargetSpec,
    position: Position,
) -> Result<EvalRecord> {
    let idx = series
        .find_label(target.from, target.to)
        .ok_or_else(|| Error::InvalidSeries(format!("dataset {dataset_id} has no {:?}>{} label", target.from, target.to)))?;
    let label = series.cp_labels()[idx].time;
    let phase = series.phase_range(idx).expect("label exists");
    let region = target_region(series, idx).expect("label exists");
    let att = attribute(&detections, label, region, position);
    let arlp = match &att.target {
        Some(d) => Some(arlp(d.detect_time as f64, label as f64, phase.len() as f64)?),
        None => None,
    };
    Ok(EvalRecord {
        dataset_id: dataset_id.into(),
        detector_id: detector_id.into(),
        params_id: params_id.into(),
        n_detections: detections.len(),
        fpc: att.fpc() as f64,
        arlp,
        target_found: att.target.is_some(),
        error: None,
        detections,
    })
}

/// A failed run: no metrics, error text kept.
pub fn failed_record(dataset_id: &str, detector_id: &str, params_id: &str, error: &Error) -> EvalRecord {
    EvalRecord {
        dataset_id: dataset_id.into(),
        detector_id: detector_id.into(),
        params_id: params_id.into(),
        n_detections: 0,
        fpc: 0.0,
        arlp: None,
        target_found: false,
        error: Some(error.to_string()),
        detections: Vec::new(),
    }
}

/// Runs `run(dataset, point)` for every pair in parallel and returns records
/// in dataset-major, point-minor order. Failures become error records.
pub fn run_grid<D, P, F>(datasets: &[(String, D)], points: &[P], run: F) -> Vec<EvalRecord>
where
    D: Sync,
    P: Sync + GridLabel,
    F: Fn(&str, &D, &P) -> Result<EvalRecord> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..points.len()).map(move |p| (d, p)))
        .collect();
    jobs.par_iter()
        .map(|&(d, p)| {
            let (id, data) = &datasets[d];
            let point = &points[p];
            run(id, data, point).unwrap_or_else(|e| failed_record(id, point.detector_id(), point.params_id(), &e))
        })
        .collect()
}

/// Identifies a grid point in records.
pub trait GridLabel {
    fn detector_id(&self) -> &str;
    fn params_id(&self) -> &str;
}

/// Grid points that found no change points, or at least 1000, on every dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityFlag {
    pub detector_id: String,
    pub params_id: String,
    pub reason: String,
}

pub fn validity_flags(records: &[EvalRecord]) -> Vec<ValidityFlag> {
    let mut groups: BTreeMap<(&str, &str), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.detector_id, &r.params_id)).or_default().push(r);
    }
    let mut flags = Vec::new();
    for ((det, params), rs) in groups {
        let ok: Vec<_> = rs.iter().filter(|r| r.error.is_none()).collect();
        if ok.is_empty() {
            continue;
        }
        let reason = if ok.iter().all(|r| r.n_detections == 0) {
            Some("no change points on any dataset")
        } else if ok.iter().all(|r| r.n_detections >= 1000) {
            Some("1000 or more change points on every dataset")
        } else {
            None
        };
        if let Some(reason) = reason {
            flags.push(ValidityFlag {
                detector_id: det.into(),
                params_id: params.into(),
                reason: reason.into(),
            });
        }
    }
    flags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Smallest Fpc, then smallest ArlP.
    #[default]
    FpcThenArlp,
    ArlpThenFpc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerDataset,
    Overall,
    Subset(Vec<String>),
}

impl Scope {
    pub fn default_cap(&self) -> f64 {
        match self {
            Scope::PerDataset => 10.0,
            Scope::Overall => 150.0,
            Scope::Subset(_) => 30.0,
        }
    }
}

/// Best parameter set of one detector within one group of datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    /// Dataset for per-dataset scope, otherwise `None`.
    pub dataset_id: Option<String>,
    pub detector_id: String,
    pub params_id: String,
    /// Summed over the group's datasets.
    pub fpc: f64,
    /// Averaged over the group's datasets.
    pub arlp: f64,
}

/// Outcome for one (group, detector): a winner or the reason there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub dataset_id: Option<String>,
    pub detector_id: String,
    pub winner: Option<Winner>,
    pub diagnostic: Option<String>,
}

fn better(rule: Rule, a: &Winner, b: &Winner) -> std::cmp::Ordering {
    let (x, y) = match rule {
        Rule::FpcThenArlp => (a.fpc.total_cmp(&b.fpc), a.arlp.total_cmp(&b.arlp)),
        Rule::ArlpThenFpc => (a.arlp.total_cmp(&b.arlp), a.fpc.total_cmp(&b.fpc)),
    };
    x.then(y).then_with(|| a.params_id.cmp(&b.params_id))
}

/// Picks, per detector, the parameter set that wins under `rule` among those
/// with Fpc at most `cap`. In overall and subset scope a parameter set only
/// competes if it found the target on every dataset of the scope.
type RunsByParams<'a> = BTreeMap<&'a str, Vec<&'a EvalRecord>>;

pub fn select_best(records: &[EvalRecord], scope: &Scope, cap: Option<f64>, rule: Rule) -> Vec<Selection> {
    let cap = cap.unwrap_or_else(|| scope.default_cap());
    let in_scope = |r: &EvalRecord| match scope {
        Scope::Subset(ids) => ids.contains(&r.dataset_id),
        _ => true,
    };
    // group key: (dataset or "", detector) -> params -> records
    let mut groups: BTreeMap<(Option<&str>, &str), RunsByParams> = BTreeMap::new();
    for r in records.iter().filter(|r| in_scope(r)) {
        let ds = matches!(scope, Scope::PerDataset).then_some(r.dataset_id.as_str());
        groups
            .entry((ds, &r.detector_id))
            .or_default()
            .entry(&r.params_id)
            .or_default()
            .push(r);
    }
    let n_datasets = |recs: &BTreeMap<&str, Vec<&EvalRecord>>| {
        let mut ids: Vec<&str> = recs.values().flatten().map(|r| r.dataset_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    let mut out = Vec::new();
    for ((ds, det), by_params) in groups {
        let total = n_datasets(&by_params);
        let mut candidates = Vec::new();
        for (params, rs) in &by_params {
            let found: Vec<&&EvalRecord> = rs.iter().filter(|r| r.target_found && r.error.is_none()).collect();
            if found.is_empty() || found.len() < rs.len() || rs.len() < total {
                continue;
            }
            let fpc: f64 = found.iter().map(|r| r.fpc).sum();
            let arlp = found.iter().filter_map(|r| r.arlp).sum::<f64>() / found.len() as f64;
            if fpc <= cap {
                candidates.push(Winner {
                    dataset_id: ds.map(str::to_string),
                    detector_id: det.into(),
                    params_id: (*params).into(),
                    fpc,
                    arlp,
                });
            }
        }
        let winner = candidates.into_iter().min_by(|a, b| better(rule, a, b));
        let diagnostic = winner
            .is_none()
            .then(|| format!("no parameter set found the target with Fpc <= {cap}"));
        out.push(Selection {
            dataset_id: ds.map(str::to_string),
            detector_id: det.into(),
            winner,
            diagnostic,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::CpLabel;

    fn rec(ds: &str, det: &str, params: &str, fpc: f64, arlp: Option<f64>) -> EvalRecord {
        EvalRecord {
            dataset_id: ds.into(),
            detector_id: det.into(),
            params_id: params.into(),
            n_detections: 1,
            fpc,
            arlp,
            target_found: arlp.is_some(),
            error: None,
            detections: Vec::new(),
        }
    }

    #[test]
    fn arlp_arithmetic() {
        assert_eq!(arlp(1100.0, 1000.0, 2000.0).unwrap(), 5.0);
        assert_eq!(arlp(7.0, 7.0, 3.0).unwrap(), 0.0);
        assert!(arlp(5.0, 6.0, 3.0).is_err());
    }

    #[test]
    fn post_target_detections_are_ignored() {
        let dets = vec![
            Detection::new(1200, 1200),
            Detection::new(3476, 3476),
            Detection::new(3600, 3600),
            Detection::new(4000, 3990),
        ];
        let a = attribute(&dets, 3245, 3245..6403, Position::Located);
        assert_eq!(a.target.as_ref().unwrap().detect_time, 3476);
        assert_eq!(a.fpc(), 1);
        let b = attribute(&dets[..2], 3245, 3245..6403, Position::Located);
        assert_eq!(b.fpc(), 1);
    }

    #[test]
    fn detection_at_label_is_zero_delay_hit() {
        let a = attribute(&[Detection::new(50, 50)], 50, 50..80, Position::Located);
        assert!(a.target.is_some() && a.fpc() == 0);
        let none = attribute(&[], 50, 50..80, Position::Located);
        assert!(none.target.is_none() && none.fpc() == 0);
    }

    #[test]
    fn located_time_decides_attribution() {
        // alarm after the label, location before it
        let d = Detection::new(55, 45);
        assert_eq!(attribute(std::slice::from_ref(&d), 50, 50..80, Position::Located).fpc(), 1);
        assert!(attribute(&[d], 50, 50..80, Position::Detect).target.is_some());
    }

    #[test]
    fn pause_after_divergence_extends_target_region() {
        let s = LabeledSeries::from_labels(
            vec![0.0; 100],
            Phase::K,
            vec![
                CpLabel::new(40, Phase::K, Phase::A),
                CpLabel::new(60, Phase::A, Phase::V),
                CpLabel::new(70, Phase::V, Phase::A),
            ],
        )
        .unwrap();
        assert_eq!(target_region(&s, 0), Some(40..70));
        let r = score("d", "x", "p", &s, vec![Detection::new(65, 65)], TargetSpec::default(), Position::Located).unwrap();
        assert!(r.target_found);
        assert_eq!(r.arlp, Some(100.0 * 25.0 / 20.0));
    }

    #[test]
    fn per_dataset_rule() {
        let rs = vec![
            rec("a", "x", "p1", 2.0, Some(9.0)),
            rec("a", "x", "p2", 2.0, Some(5.0)),
            rec("a", "x", "p3", 4.0, Some(1.0)),
        ];
        let w = select_best(&rs, &Scope::PerDataset, None, Rule::FpcThenArlp);
        assert_eq!(w[0].winner.as_ref().unwrap().params_id, "p2");
        let r = select_best(&rs, &Scope::PerDataset, None, Rule::ArlpThenFpc);
        assert_eq!(r[0].winner.as_ref().unwrap().params_id, "p3");
        let none = select_best(&rs, &Scope::PerDataset, Some(1.0), Rule::FpcThenArlp);
        assert!(none[0].winner.is_none() && none[0].diagnostic.is_some());
    }

    #[test]
    fn selection_ignores_record_order() {
        let mut rs = vec![
            rec("a", "x", "p2", 1.0, Some(3.0)),
            rec("a", "x", "p1", 1.0, Some(3.0)),
            rec("b", "x", "p1", 0.0, Some(1.0)),
            rec("b", "x", "p2", 0.0, Some(1.0)),
        ];
        let w1 = select_best(&rs, &Scope::Overall, None, Rule::FpcThenArlp);
        rs.reverse();
        let w2 = select_best(&rs, &Scope::Overall, None, Rule::FpcThenArlp);
        assert_eq!(w1, w2);
        assert_eq!(w1[0].winner.as_ref().unwrap().params_id, "p1");
    }

    #[test]
    fn validity_flags_all_zero_or_many() {
        let mut rs = vec![rec("a", "x", "p", 0.0, None), rec("b", "x", "p", 0.0, None)];
        rs[0].n_detections = 0;
        rs[1].n_detections = 0;
        rs.push(rec("a", "x", "q", 0.0, None));
        assert_eq!(validity_flags(&rs).len(), 1);
    }
}
