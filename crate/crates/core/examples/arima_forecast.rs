//! Fits ARIMA models by conditional sum of squares and forecasts ahead.
//!
//! `cargo run --release --example arima_forecast`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trendcpd::predict::arima::{auto_arima, fit_arima};

fn main() -> trendcpd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = vec![0.0f64];
    for _ in 1..1000 {
        let e: f64 = StandardNormal.sample(&mut rng);
        x.push(0.6 * x.last().unwrap() + e);
    }
    let m = fit_arima(&x, 1, 0, 0)?;
    println!("AR(1): phi {:?}, intercept {:.3}, sigma2 {:.3}, AICc {:.1}", m.phi, m.intercept, m.sigma2, m.aicc);

    let ramp: Vec<f64> = (0..300)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            2.0 + 0.5 * i as f64 + 0.3 * e
        })
        .collect();
    let auto = auto_arima(&ramp)?;
    println!("ramp: selected ({}, {}, {})", auto.p, auto.d, auto.q);
    let f = auto.forecast(&ramp[200..], 5)?;
    println!("next five: {:?}", f.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    Ok(())
}
