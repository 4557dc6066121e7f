//! Draws a wear experiment and prints phase boundaries and per-phase mean counts.
//!
//! `cargo run --example simulate_wear [seed]`

use trendcpd::simulate::{sample_poisson_series, snr_suite, SnrMode, WearIntensity};

fn main() -> trendcpd::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let wi = WearIntensity::default();
    let series = sample_poisson_series(&wi, 4000, seed)?;
    println!("rate at 0: {:.2}, at 1000: {:.2}, at 3500: {:.2}", wi.rate(0.0), wi.rate(1000.0), wi.rate(3500.0));

    let mut start = 0;
    let mut bounds: Vec<usize> = series.cp_labels().iter().map(|l| l.time).collect();
    bounds.push(series.len());
    for end in bounds {
        let phase = series.phases().expect("simulated series are tagged")[start];
        let seg = &series.values()[start..end];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        println!("phase {phase}: times {}..={end}, mean count {mean:.2}", start + 1);
        start = end;
    }

    // same trend, noise sd scaled by 0, 1 and 2
    let suite = snr_suite(&wi, &[0.0, 1.0, 2.0], SnrMode::Poisson, 4000, seed)?;
    for (scale, s) in [0.0, 1.0, 2.0].iter().zip(&suite) {
        let v = &s.values()[1000..2000];
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        println!("noise scale {scale}: steady-state mean {m:.2}, sd {sd:.2}");
    }
    Ok(())
}
