//! Re-derives the AWGN activation thresholds of the AMC ladder.
//!
//! `cargo run --release -p hda-core --example calibrate_amc -- [blocks]`

use hda_core::phy::{calibrate_threshold, CALIBRATION_SEED, LADDER};

fn main() -> hda_core::Result<()> {
    let blocks = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2000);
    let grid: Vec<f64> = (-6..=60).map(|i| f64::from(i) * 0.5).collect();
    for (rate, modulation) in LADDER {
        let t = calibrate_threshold(rate, modulation, &grid, blocks, 1e-2, CALIBRATION_SEED)?;
        println!("{rate:?} {modulation:?}: {t:?}");
    }
    Ok(())
}
