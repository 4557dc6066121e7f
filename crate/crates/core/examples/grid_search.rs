//! Grid search over CUSUM thresholds with Fpc/ArlP scoring and selection.
//!
//! `cargo run --release --example grid_search`

use trendcpd::detector::{CusumSpec, DetectorEntry, DetectorSpec, Axis};
use trendcpd::eval::{run_grid, score, select_best, Position, Rule, Scope, TargetSpec};
use trendcpd::simulate::sample_step_series;

fn main() -> trendcpd::Result<()> {
    let datasets: Vec<(String, _)> = (0..3)
        .map(|i| Ok((format!("step-{i}"), sample_step_series(0.0, 1.0, 1.0, 500, 1000, i)?)))
        .collect::<trendcpd::Result<_>>()?;
    let entry = DetectorEntry {
        id: "cusum".into(),
        params: DetectorSpec::Cusum(CusumSpec::default()),
        grid: [("desInt".to_string(), Axis::Range { from: 4.0, to: 12.0, step: 2.0 })].into(),
    };
    let points = entry.expand()?;
    let records = run_grid(&datasets, &points, |ds, series, p| {
        let out = p.spec.run(series.values(), false)?;
        score(ds, &p.detector_id, &p.params_id, series, out.detections, TargetSpec::default(), Position::Located)
    });
    for r in &records {
        println!("{} {:<9} fpc {} arlp {:?}", r.dataset_id, r.params_id, r.fpc, r.arlp.map(|a| (a * 100.0).round() / 100.0));
    }
    for s in select_best(&records, &Scope::Overall, None, Rule::FpcThenArlp) {
        println!("overall winner: {:?}", s.winner.map(|w| w.params_id));
    }
    Ok(())
}
