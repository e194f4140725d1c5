//! Gray-mapped BPSK/QPSK/16QAM with soft demapping.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "bpsk")]
    Bpsk,
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

/// LLR computation rule for the soft demapper.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Demapper {
    MaxLog,
    #[default]
    Exact,
}

const QAM16_SCALE: f64 = 0.316_227_766_016_837_94; // 1/√10
                                                   // Gray levels per axis indexed by the two bits (b_first, b_second)
const QAM16_LEVELS: [(u8, u8, f64); 4] = [(0, 0, -3.0), (0, 1, -1.0), (1, 1, 1.0), (1, 0, 3.0)];

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// All constellation points with their bit labels, in label order.
    pub fn constellation(self) -> Vec<(Vec<u8>, Complex64)> {
        let b = self.bits_per_symbol();
        (0..1usize << b)
            .map(|v| {
                let bits: Vec<u8> = (0..b).map(|i| ((v >> (b - 1 - i)) & 1) as u8).collect();
                let s = modulate(&bits, self).expect("whole symbol")[0];
                (bits, s)
            })
            .collect()
    }
}

fn qam16_axis(b0: u8, b1: u8) -> f64 {
    let level = QAM16_LEVELS
        .iter()
        .find(|(x, y, _)| *x == b0 && *y == b1)
        .map(|l| l.2)
        .expect("two bits");
    level * QAM16_SCALE
}

pub fn modulate(bits: &[u8], scheme: Modulation) -> Result<Vec<Complex64>> {
    let b = scheme.bits_per_symbol();
    if !bits.len().is_multiple_of(b) {
        return dim_err(format!(
            "{} bits do not fill whole {scheme:?} symbols; pad to a multiple of {b}",
            bits.len()
        ));
    }
    let sign = |x: u8| 1.0 - 2.0 * f64::from(x & 1);
    Ok(bits
        .chunks(b)
        .map(|c| match scheme {
            Modulation::Bpsk => Complex64::new(sign(c[0]), 0.0),
            Modulation::Qpsk => {
                Complex64::new(sign(c[0]), sign(c[1])) * std::f64::consts::FRAC_1_SQRT_2
            }
            Modulation::Qam16 => Complex64::new(
                qam16_axis(c[0] & 1, c[1] & 1),
                qam16_axis(c[2] & 1, c[3] & 1),
            ),
        })
        .collect())
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// LLRs `ln P(b=0|y)/P(b=1|y)` for an axis with per-dimension noise variance `var`.
fn axis_llrs(y: f64, var: f64, levels: &[(u8, u8, f64)], rule: Demapper) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (bit, o) in out.iter_mut().enumerate() {
        let (mut zero, mut one) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(b0, b1, lv) in levels {
            let d = y - lv * QAM16_SCALE;
            let metric = -d * d / (2.0 * var);
            let label = if bit == 0 { b0 } else { b1 };
            let slot = if label == 0 { &mut zero } else { &mut one };
            *slot = match rule {
                Demapper::MaxLog => slot.max(metric),
                Demapper::Exact => log_sum_exp(*slot, metric),
            };
        }
        *o = zero - one;
    }
    out
}

/// Soft demapping given complex noise variance `noise_var` (split equally over I and Q).
pub fn demodulate_soft(
    symbols: &[Complex64],
    noise_var: f64,
    scheme: Modulation,
    rule: Demapper,
) -> Vec<f64> {
    let var = (noise_var / 2.0).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(symbols.len() * scheme.bits_per_symbol());
    for y in symbols {
        match scheme {
            Modulation::Bpsk => out.push(2.0 * y.re / var),
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                out.push(2.0 * a * y.re / var);
                out.push(2.0 * a * y.im / var);
            }
            Modulation::Qam16 => {
                out.extend(axis_llrs(y.re, var, &QAM16_LEVELS, rule));
                out.extend(axis_llrs(y.im, var, &QAM16_LEVELS, rule));
            }
        }
    }
    out
}

pub fn hard_decision(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l < 0.0)).collect()
}
