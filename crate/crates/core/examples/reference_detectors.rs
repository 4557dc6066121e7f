//! Bayesian online detection, OCD and MOSUM on the same step series. The
//! MOSUM boundary widens with monitoring time, so the step comes early.
//!
//! `cargo run --release --example reference_detectors`

use trendcpd::refdet::{bayes, mosum, ocd, BayesParams, MosumParams, OcdParams};
use trendcpd::simulate::sample_step_series;

fn main() -> trendcpd::Result<()> {
    let s = sample_step_series(0.0, 2.0, 1.0, 300, 700, 4)?;
    let v = s.values();
    let show = |name: &str, d: Vec<trendcpd::Detection>| {
        let t: Vec<String> = d.iter().map(|d| format!("{}@{}", d.located_time + 1, d.detect_time + 1)).collect();
        println!("{name:>6}: {}", t.join(" "));
    };
    show("bayes", bayes::detect(&BayesParams::default(), v)?);
    show("ocd", ocd::detect(&OcdParams::default(), v)?);
    show("mosum", mosum::detect(&MosumParams::default(), v)?);
    println!("(located@alarm, true change at 301)");
    Ok(())
}
