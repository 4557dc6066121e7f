//! Random baseline: `n_fp` uniformly drawn times before the target label plus
//! one drawn from the target phase, scored and averaged over repetitions.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::{score, EvalRecord, Position, TargetSpec};
use crate::series::{Detection, LabeledSeries};
use crate::simulate::stream_rng;

/// One random run; `stream` selects the repetition.
pub fn random_detections(series: &LabeledSeries, target: TargetSpec, n_fp: usize, seed: u64, stream: u64) -> Result<Vec<Detection>> {
    let idx = series
        .find_label(target.from, target.to)
        .ok_or_else(|| Error::InvalidSeries("series lacks the target label".into()))?;
    let label = series.cp_labels()[idx].time;
    let phase = series.phase_range(idx).expect("label exists");
    let mut rng = stream_rng(seed, stream);
    let mut times: Vec<usize> = sample(&mut rng, label, n_fp.min(label)).into_vec();
    times.push(rng.random_range(phase.start..phase.end));
    times.sort_unstable();
    Ok(times.into_iter().map(|t| Detection::new(t, t)).collect())
}

/// Averages Fpc and ArlP over `repetitions` random runs.
pub fn random_baseline(
    dataset_id: &str,
    series: &LabeledSeries,
    target: TargetSpec,
    n_fp: usize,
    repetitions: usize,
    seed: u64,
) -> Result<EvalRecord> {
    if repetitions == 0 {
        return Err(Error::param("repetitions", "must be at least 1"));
    }
    let params_id = format!("n_fp={n_fp}");
    let mut fpc = 0.0;
    let mut arlp = 0.0;
    let mut found = 0usize;
    let mut n_det = 0usize;
    for rep in 0..repetitions {
        let dets = random_detections(series, target, n_fp, seed, rep as u64)?;
        let r = score(dataset_id, "random", &params_id, series, dets, target, Position::Located)?;
        fpc += r.fpc;
        n_det += r.n_detections;
        if let Some(a) = r.arlp {
            arlp += a;
            found += 1;
        }
    }
    Ok(EvalRecord {
        dataset_id: dataset_id.into(),
        detector_id: "random".into(),
        params_id,
        n_detections: n_det / repetitions,
        fpc: fpc / repetitions as f64,
        arlp: (found > 0).then(|| arlp / found as f64),
        target_found: found == repetitions,
        error: None,
        detections: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{CpLabel, Phase};

    fn series() -> LabeledSeries {
        LabeledSeries::from_labels(vec![0.0; 1000], Phase::K, vec![CpLabel::new(700, Phase::K, Phase::A)]).unwrap()
    }

    #[test]
    fn zero_fp_hits_target_phase() {
        let r = random_baseline("d", &series(), TargetSpec::default(), 0, 100, 1).unwrap();
        assert_eq!(r.fpc, 0.0);
        assert!(r.target_found);
        assert!(r.arlp.unwrap() > 0.0 && r.arlp.unwrap() < 100.0);
    }

    #[test]
    fn ten_fp_average_is_ten() {
        let r = random_baseline("d", &series(), TargetSpec::default(), 10, 100, 2).unwrap();
        assert_eq!(r.fpc, 10.0);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = random_baseline("d", &series(), TargetSpec::default(), 3, 50, 5).unwrap();
        let b = random_baseline("d", &series(), TargetSpec::default(), 3, 50, 5).unwrap();
        assert_eq!(a, b);
    }
}
