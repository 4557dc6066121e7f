//! Trains a small LSTM to forecast a noisy sine and saves it as text.
//!
//! `cargo run --release --example train_lstm [out.txt]`

use trendcpd::lstm::{train, LstmNet, TrainConfig};
use trendcpd::predict::{training_pairs, Predictor};

fn main() -> trendcpd::Result<()> {
    let series: Vec<f64> = (0..1200)
        .map(|i| (i as f64 * 0.2).sin() + 0.05 * ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let pairs = training_pairs(&series[..1000], 20, 5, 2, None);
    let cfg = TrainConfig {
        epochs: 40,
        hidden: 12,
        learning_rate: 0.01,
        seed: 2,
        ..Default::default()
    };
    let net = LstmNet::init(20, 5, cfg.hidden, cfg.seed)?;
    let (net, report) = train(net, &pairs, &cfg)?;
    println!(
        "validation loss {:.4} -> {:.4}",
        report.initial_validation_loss.unwrap_or(f64::NAN),
        report.validation_loss.last().copied().flatten().unwrap_or(f64::NAN)
    );
    let f = net.forecast(&series[1100..1120])?;
    println!("forecast {:?}", f.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("truth    {:?}", series[1120..1125].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, net.to_text())?;
        println!("saved to {path}");
    }
    Ok(())
}
