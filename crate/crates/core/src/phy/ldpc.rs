//! Quasi-cyclic LDPC codes of the 802.11ad family (n = 672, Z = 42).

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, HdaError, Result};

pub const BLOCK_LEN: usize = 672;
/// Magnitude at which channel LLRs are clipped before decoding.
pub const LLR_CLIP: f64 = 20.0;
pub const MIN_SUM_SCALE: f64 = 0.8;
pub const DEFAULT_MAX_ITERS: usize = 20;

const R12_TEXT: &str = include_str!("../../data/ldpc_672_r12.txt");
const R34_TEXT: &str = include_str!("../../data/ldpc_672_r34.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeRate {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/4")]
    ThreeQuarters,
}

impl CodeRate {
    pub fn value(self) -> f64 {
        match self {
            CodeRate::Half => 0.5,
            CodeRate::ThreeQuarters => 0.75,
        }
    }

    pub fn info_len(self) -> usize {
        match self {
            CodeRate::Half => BLOCK_LEN / 2,
            CodeRate::ThreeQuarters => BLOCK_LEN * 3 / 4,
        }
    }
}

/// Parity-check structure plus a systematic encoder `c = [info ‖ parity]`.
#[derive(Debug)]
pub struct LdpcCode {
    rate: CodeRate,
    n: usize,
    k: usize,
    checks: Vec<Vec<usize>>,
    // row i: bits of P⁻¹A selecting the info bits that feed parity bit i
    parity_rows: Vec<Vec<u64>>,
}

/// Result of belief-propagation decoding of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutput {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Parses the sparse text format: `#` comments, then one `check: col col …` line per check.
pub fn parse_sparse(text: &str, n: usize) -> Result<Vec<Vec<usize>>> {
    let mut checks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || HdaError::Config(format!("parity matrix line {}: malformed", lineno + 1));
        let (idx, cols) = line.split_once(':').ok_or_else(bad)?;
        let idx: usize = idx.trim().parse().map_err(|_| bad())?;
        if idx != checks.len() {
            return Err(bad());
        }
        let cols = cols
            .split_whitespace()
            .map(|c| c.parse::<usize>().ok().filter(|&c| c < n))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)?;
        checks.push(cols);
    }
    Ok(checks)
}

impl LdpcCode {
    /// Shared instance for `rate`, built on first use.
    pub fn get(rate: CodeRate) -> &'static LdpcCode {
        static HALF: OnceLock<LdpcCode> = OnceLock::new();
        static THREE_Q: OnceLock<LdpcCode> = OnceLock::new();
        match rate {
            CodeRate::Half => HALF.get_or_init(|| {
                LdpcCode::from_checks(
                    rate,
                    parse_sparse(R12_TEXT, BLOCK_LEN).expect("embedded matrix"),
                )
                .expect("embedded matrix")
            }),
            CodeRate::ThreeQuarters => THREE_Q.get_or_init(|| {
                LdpcCode::from_checks(
                    rate,
                    parse_sparse(R34_TEXT, BLOCK_LEN).expect("embedded matrix"),
                )
                .expect("embedded matrix")
            }),
        }
    }

    /// Builds the encoder by inverting the parity part of `H` over GF(2).
    pub fn from_checks(rate: CodeRate, checks: Vec<Vec<usize>>) -> Result<Self> {
        let n = BLOCK_LEN;
        let k = rate.info_len();
        let m = n - k;
        if checks.len() != m {
            return Err(HdaError::Config(format!(
                "expected {m} checks, got {}",
                checks.len()
            )));
        }
        let words = n.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = checks
            .iter()
            .map(|cols| {
                let mut r = vec![0u64; words];
                for &c in cols {
                    r[c / 64] ^= 1 << (c % 64);
                }
                r
            })
            .collect();
        let bit = |r: &[u64], c: usize| (r[c / 64] >> (c % 64)) & 1 == 1;
        // Gauss-Jordan on the parity columns k..n
        for p in 0..m {
            let col = k + p;
            let pivot = (p..m)
                .find(|&i| bit(&rows[i], col))
                .ok_or_else(|| HdaError::Config("parity part of H is singular".into()))?;
            rows.swap(p, pivot);
            let prow = rows[p].clone();
            for (i, r) in rows.iter_mut().enumerate() {
                if i != p && bit(r, col) {
                    for (a, b) in r.iter_mut().zip(&prow) {
                        *a ^= b;
                    }
                }
            }
        }
        let info_words = k.div_ceil(64);
        let parity_rows = rows
            .iter()
            .map(|r| {
                let mut out = vec![0u64; info_words];
                for c in 0..k {
                    if bit(r, c) {
                        out[c / 64] |= 1 << (c % 64);
                    }
                }
                out
            })
            .collect();
        Ok(LdpcCode {
            rate,
            n,
            k,
            checks,
            parity_rows,
        })
    }

    pub fn rate(&self) -> CodeRate {
        self.rate
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn syndrome_ok(&self, codeword: &[u8]) -> bool {
        self.checks
            .iter()
            .all(|cols| cols.iter().fold(0u8, |acc, &c| acc ^ (codeword[c] & 1)) == 0)
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k {
            return dim_err(format!(
                "LDPC encoder needs {} info bits, got {}",
                self.k,
                info.len()
            ));
        }
        let mut words = vec![0u64; self.k.div_ceil(64)];
        for (i, &b) in info.iter().enumerate() {
            if b & 1 == 1 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        let mut cw = Vec::with_capacity(self.n);
        cw.extend(info.iter().map(|b| b & 1));
        cw.extend(self.parity_rows.iter().map(|r| {
            let ones: u32 = r
                .iter()
                .zip(&words)
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            (ones & 1) as u8
        }));
        Ok(cw)
    }

    /// Normalized min-sum decoding with early exit once every check is satisfied.
    ///
    /// When the checks are still unsatisfied after `max_iters`, the systematic bits are
    /// returned as hard decisions on the channel LLRs.
    ///
    /// LLRs follow the `ln P(0)/P(1)` convention and are clipped to `±LLR_CLIP`.
    pub fn decode(&self, llrs: &[f64], max_iters: usize) -> Result<DecodeOutput> {
        if llrs.len() != self.n {
            return dim_err(format!(
                "LDPC decoder needs {} LLRs, got {}",
                self.n,
                llrs.len()
            ));
        }
        let channel: Vec<f64> = llrs
            .iter()
            .map(|v| {
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(-LLR_CLIP, LLR_CLIP)
                }
            })
            .collect();
        let n_edges: usize = self.checks.iter().map(Vec::len).sum();
        let mut c2v = vec![0.0; n_edges];
        let mut total = channel.clone();
        let mut hard = vec![0u8; self.n];
        let mut iterations = 0;
        let mut converged = false;
        let mut v2c: Vec<f64> = Vec::with_capacity(16);
        while iterations < max_iters.max(1) {
            iterations += 1;
            let mut e = 0;
            let mut next = channel.clone();
            for cols in &self.checks {
                v2c.clear();
                v2c.extend(cols.iter().enumerate().map(|(j, &c)| total[c] - c2v[e + j]));
                let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, 0);
                let mut sign = 1.0;
                for (j, &v) in v2c.iter().enumerate() {
                    let a = v.abs();
                    if v < 0.0 {
                        sign = -sign;
                    }
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        arg = j;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for (j, &c) in cols.iter().enumerate() {
                    let mag = if j == arg { min2 } else { min1 };
                    let s = if v2c[j] < 0.0 { -sign } else { sign };
                    let msg = MIN_SUM_SCALE * s * mag;
                    c2v[e + j] = msg;
                    next[c] += msg;
                }
                e += cols.len();
            }
            total = next;
            for (h, t) in hard.iter_mut().zip(&total) {
                *h = u8::from(*t < 0.0);
            }
            if self.syndrome_ok(&hard) {
                converged = true;
                break;
            }
        }
        if !converged {
            // a failed search is no better than the raw systematic observations
            for (h, c) in hard.iter_mut().zip(&channel) {
                *h = u8::from(*c < 0.0);
            }
        }
        hard.truncate(self.k);
        Ok(DecodeOutput {
            bits: hard,
            converged,
            iterations,
        })
    }
}
