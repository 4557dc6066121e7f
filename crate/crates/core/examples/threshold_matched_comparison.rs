//! Predict-and-compare against a classic CUSUM at equal thresholds on a
//! Gaussian step at time 101.
//!
//! `cargo run --release --example threshold_matched_comparison [seed]`

use trendcpd::cusum::{CusumParams, TargetMode};
use trendcpd::pnc::{PncConfig, PncDetector};
use trendcpd::predict::{fit, PredictorKind, PredictorSpec, Training};
use trendcpd::refdet::ClassicCusum;
use trendcpd::simulate::sample_step_series;

fn main() -> trendcpd::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let s = sample_step_series(0.0, 2.0, 1.0, 100, 200, seed)?;
    let v = s.values();
    let spec = PredictorSpec::new(PredictorKind::Ar { p: 1 }, 20, 5)?;
    let model = fit(&spec, Training::History(&v[..60]))?;
    println!("threshold | pnc first alarms | classic first alarms");
    for thr in [1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
        let params = CusumParams::new(0.5, thr)?;
        let pnc = PncDetector::new(Box::new(model.clone()), PncConfig::new(20, 5, params))?.run_stream(v)?;
        let classic = ClassicCusum::new(params, TargetMode::RunningMean { window: 20 })?.detect(v);
        let show = |d: &[trendcpd::Detection]| d.iter().take(4).map(|d| (d.detect_time + 1).to_string()).collect::<Vec<_>>().join(",");
        println!("{thr:>9} | {:<16} | {}", show(&pnc.detections), show(&classic));
    }
    Ok(())
}
