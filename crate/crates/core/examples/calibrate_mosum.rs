//! Recomputes the MOSUM boundary table by Monte Carlo and prints it as Rust source.
//!
//! `cargo run --release --example calibrate_mosum [reps]`

use trendcpd::refdet::mosum::{calibrate_boundary, TABLE_H, TABLE_HIST, TABLE_HORIZON, TABLE_LEVEL, TABLE_REPS, TABLE_SEED};

fn main() {
    let reps = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(TABLE_REPS);
    println!("pub const BOUNDARY_TABLE: [[f64; {}]; {}] = [", TABLE_LEVEL.len(), TABLE_H.len());
    for h in TABLE_H {
        let row: Vec<String> = TABLE_LEVEL
            .iter()
            .map(|&level| format!("{:.4}", calibrate_boundary(h, level, TABLE_HIST, TABLE_HORIZON, reps, TABLE_SEED)))
            .collect();
        println!("    [{}], // h = {h}", row.join(", "));
    }
    println!("];");
}
