//! Block-fading channel, SNR control and least-squares detection.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HdaError, Result};

/// Below this `|h|²` a frame is treated as lost.
pub const DEEP_FADE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    Rician { k_factor: f64 },
}

impl ChannelKind {
    /// Parses `awgn`, `rayleigh` or `rician` (with Rician factor `k_factor`).
    pub fn parse(name: &str, k_factor: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            "rician" => Ok(ChannelKind::Rician { k_factor }),
            other => Err(HdaError::Config(format!("unknown channel '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Rician { .. } => "rician",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRealization {
    pub kind: ChannelKind,
    pub h: Complex64,
    /// Noise variance per complex symbol; set by [`apply_channel`].
    pub noise_var: f64,
}

fn complex_normal(rng: &mut impl Rng, var: f64) -> Complex64 {
    let sd = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sd * re, sd * im)
}

/// Rician line-of-sight mean `√(r/(r+1))`.
pub fn rician_mean(k_factor: f64) -> f64 {
    (k_factor / (k_factor + 1.0)).sqrt()
}

/// Draws one block-fading coefficient (noise variance left at zero).
pub fn sample_channel(kind: ChannelKind, rng: &mut impl Rng) -> ChannelRealization {
    let h = match kind {
        ChannelKind::Awgn => Complex64::new(1.0, 0.0),
        ChannelKind::Rayleigh => complex_normal(rng, 1.0),
        ChannelKind::Rician { k_factor } => {
            Complex64::new(rician_mean(k_factor), 0.0) + complex_normal(rng, 1.0 / (k_factor + 1.0))
        }
    };
    ChannelRealization {
        kind,
        h,
        noise_var: 0.0,
    }
}

/// Noise variance per complex symbol that puts a unit-power frame at `snr_db`.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// `y = h·x + n` with `n ~ CN(0, σ_n²)` and `σ_n²` set from `snr_db`; `None` means noiseless.
pub fn apply_channel(
    frame: &[Complex64],
    realization: &mut ChannelRealization,
    snr_db: Option<f64>,
    rng: &mut impl Rng,
) -> Vec<Complex64> {
    let h = realization.h;
    match snr_db {
        None => {
            realization.noise_var = 0.0;
            frame.iter().map(|x| h * x).collect()
        }
        Some(snr) => {
            let var = noise_variance(snr);
            realization.noise_var = var;
            frame
                .iter()
                .map(|x| h * x + complex_normal(rng, var))
                .collect()
        }
    }
}

/// Zero-forcing/LS estimate `x̂ = h* y / |h|²` and its effective noise variance `σ_n²/|h|²`.
pub fn ls_detect(
    y: &[Complex64],
    realization: &ChannelRealization,
) -> Result<(Vec<Complex64>, f64)> {
    let g = realization.h.norm_sqr();
    if g < DEEP_FADE {
        return Err(HdaError::DeepFade(g));
    }
    let w = realization.h.conj() / g;
    Ok((y.iter().map(|v| w * v).collect(), realization.noise_var / g))
}

/// Symbols per source value: `η = L / (3·H·W)`.
pub fn bandwidth_ratio(symbols: usize, height: usize, width: usize) -> f64 {
    symbols as f64 / (3 * height * width) as f64
}

/// Mean `|x|²` of a frame.
pub fn average_power(frame: &[Complex64]) -> f64 {
    frame.iter().map(Complex64::norm_sqr).sum::<f64>() / frame.len().max(1) as f64
}
