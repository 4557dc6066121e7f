//! Predict-and-compare on a standardized wear series, fed one point at a time.
//!
//! `cargo run --release --example predict_and_compare`

use trendcpd::cusum::CusumParams;
use trendcpd::pnc::{PncConfig, PncDetector, PncStream};
use trendcpd::predict::{fit, PredictorKind, PredictorSpec, RefitPolicy, Training};
use trendcpd::simulate::{sample_poisson_series, WearIntensity};
use trendcpd::standardize::{standardize, Mode};

fn main() -> trendcpd::Result<()> {
    let raw = sample_poisson_series(&WearIntensity::default(), 4000, 7)?;
    let z = standardize(&raw, 300, Mode::Online)?.series;
    let values = z.values();

    let spec = PredictorSpec::new(PredictorKind::Ar { p: 2 }, 600, 50)?.with_refit(RefitPolicy::OnDetection);
    let model = fit(&spec, Training::History(&values[..600]))?;
    let det = PncDetector::new(Box::new(model), PncConfig::new(600, 50, CusumParams::new(0.5, 5.0)?))?
        .with_refit(spec)?
        .tagged("pnc-ar", "desInt=5");

    let mut stream = PncStream::with_history(det, &values[..600])?;
    for &x in &values[600..] {
        if let Some(d) = stream.push(x)? {
            println!("alarm at {} (change located at {})", d.detect_time + 1, d.located_time + 1);
        }
    }
    let run = stream.finish();
    for e in run.events {
        println!("{e:?}");
    }
    println!("labels: {:?}", z.cp_labels());
    Ok(())
}
