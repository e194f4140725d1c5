//! Adaptive modulation and coding ladder.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::frame::{receive_blocks, transmit_bits};
use super::ldpc::CodeRate;
use super::modulation::{Demapper, Modulation};
use crate::error::{HdaError, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmcEntry {
    pub rate: CodeRate,
    pub modulation: Modulation,
    /// Activation threshold in dB.
    pub threshold_db: f64,
}

impl AmcEntry {
    /// Information bits per channel symbol.
    pub fn efficiency(&self) -> f64 {
        self.rate.value() * self.modulation.bits_per_symbol() as f64
    }
}

/// Ladder order, most robust first.
pub const LADDER: [(CodeRate, Modulation); 5] = [
    (CodeRate::Half, Modulation::Bpsk),
    (CodeRate::Half, Modulation::Qpsk),
    (CodeRate::ThreeQuarters, Modulation::Qpsk),
    (CodeRate::Half, Modulation::Qam16),
    (CodeRate::ThreeQuarters, Modulation::Qam16),
];

pub const CALIBRATION_SEED: u64 = 2024;
pub const CALIBRATION_BLOCKS: usize = 2000;

/// AWGN thresholds (smallest SNR on a 0.5 dB grid with block error rate ≤ 1e-2) from
/// [`calibrate_threshold`] with [`CALIBRATION_BLOCKS`] blocks per point, 20 min-sum iterations
/// and exact LLRs (`examples/calibrate_amc.rs`).
pub const DEFAULT_THRESHOLDS_DB: [f64; 5] = [-0.5, 2.5, 5.5, 8.0, 11.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmcTable {
    pub entries: Vec<AmcEntry>,
}

impl Default for AmcTable {
    fn default() -> Self {
        Self::with_thresholds(&DEFAULT_THRESHOLDS_DB).expect("default ladder")
    }
}

impl AmcTable {
    pub fn with_thresholds(thresholds: &[f64]) -> Result<Self> {
        if thresholds.len() != LADDER.len() {
            return Err(HdaError::Config(format!(
                "AMC ladder needs {} thresholds, got {}",
                LADDER.len(),
                thresholds.len()
            )));
        }
        if thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HdaError::Config(
                "AMC thresholds must be strictly increasing".into(),
            ));
        }
        Ok(AmcTable {
            entries: LADDER
                .iter()
                .zip(thresholds)
                .map(|(&(rate, modulation), &threshold_db)| AmcEntry {
                    rate,
                    modulation,
                    threshold_db,
                })
                .collect(),
        })
    }

    /// Highest-efficiency entry whose threshold does not exceed `snr_db`, else the most robust.
    pub fn select(&self, snr_db: f64) -> (usize, AmcEntry) {
        let idx = self
            .entries
            .iter()
            .rposition(|e| e.threshold_db <= snr_db)
            .unwrap_or(0);
        (idx, self.entries[idx])
    }

    pub fn entry(&self, index: usize) -> Result<AmcEntry> {
        self.entries
            .get(index)
            .copied()
            .ok_or_else(|| HdaError::Framing(format!("AMC index {index} out of range")))
    }
}

/// Block error rate of one ladder entry over AWGN at `snr_db`.
pub fn simulate_bler(
    rate: CodeRate,
    modulation: Modulation,
    snr_db: f64,
    blocks: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let entry = AmcEntry {
        rate,
        modulation,
        threshold_db: 0.0,
    };
    let k = rate.info_len();
    let noise_var = 10f64.powf(-snr_db / 10.0);
    let sd = (noise_var / 2.0).sqrt();
    let mut errors = 0;
    for _ in 0..blocks {
        let bits: Vec<u8> = (0..k).map(|_| rng.random_range(0..2)).collect();
        let (header, mut symbols) = transmit_bits(&bits, &entry, 0)?;
        for s in symbols.iter_mut() {
            let nr: f64 = StandardNormal.sample(rng);
            let ni: f64 = StandardNormal.sample(rng);
            s.re += sd * nr;
            s.im += sd * ni;
        }
        let out = receive_blocks(
            &symbols,
            noise_var,
            &header,
            &entry,
            Demapper::Exact,
            super::ldpc::DEFAULT_MAX_ITERS,
        )?;
        if out.bits != bits {
            errors += 1;
        }
    }
    Ok(errors as f64 / blocks as f64)
}

/// Block error rate at one calibration point, with a stream seeded from `(seed, entry, snr)`
/// so any grid point can be re-simulated on its own.
pub fn calibration_bler(
    rate: CodeRate,
    modulation: Modulation,
    snr_db: f64,
    blocks: usize,
    seed: u64,
) -> Result<f64> {
    let point = (snr_db * 2.0).round() as i64;
    let mut rng = seeded(derive_seed(
        seed,
        &[
            rate.info_len() as u64,
            modulation.bits_per_symbol() as u64,
            point as u64,
        ],
    ));
    simulate_bler(rate, modulation, snr_db, blocks, &mut rng)
}

/// Smallest SNR on `grid_db` whose simulated block error rate is at most `target`.
pub fn calibrate_threshold(
    rate: CodeRate,
    modulation: Modulation,
    grid_db: &[f64],
    blocks: usize,
    target: f64,
    seed: u64,
) -> Result<Option<f64>> {
    for &snr in grid_db {
        if calibration_bler(rate, modulation, snr, blocks, seed)? <= target {
            return Ok(Some(snr));
        }
    }
    Ok(None)
}
