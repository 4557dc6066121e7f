//! Online and offline standardization of a steady-state count series.
//!
//! `cargo run --release --example standardize_online`

use trendcpd::simulate::{sample_poisson_series, WearIntensity};
use trendcpd::standardize::{standardize, Mode, OnlineStandardizer};

fn moments(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64)
}

fn main() -> trendcpd::Result<()> {
    // constant rate 4, no run-in, divergence at 6000
    let wi = WearIntensity::new(0.0, 1.0, 4.0, 0.002, 6000.0)?;
    let raw = sample_poisson_series(&wi, 8000, 3)?;

    for mode in [Mode::Offline, Mode::Online] {
        let st = standardize(&raw, 0, mode)?;
        let e = st.estimate.expect("estimable");
        let (m, v) = moments(&st.series.values()[3000..6000]);
        let (ma, _) = moments(&st.series.values()[6500..]);
        println!("{mode:?}: nu_hat {:.3} b_hat {:.3}; steady mean {m:.3} var {v:.3}; divergent mean {ma:.2}", e.nu_hat, e.b_hat);
    }

    // streaming use
    let mut online = OnlineStandardizer::new(0);
    let scores: Vec<Option<f64>> = raw.values()[..5].iter().map(|&x| online.push(x)).collect();
    println!("first scores: {scores:?}");
    Ok(())
}
