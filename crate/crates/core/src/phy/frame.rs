//! Block framing of a bit string onto LDPC codewords and constellation symbols.

use num_complex::Complex64;
use rayon::prelude::*;

use super::amc::AmcEntry;
use super::ldpc::{LdpcCode, BLOCK_LEN};
use super::modulation::{demodulate_soft, modulate, Demapper};
use crate::error::{HdaError, Result};

/// Control header sent ahead of the digital symbols: block count `u16`, padding bits `u16`,
/// AMC index `u8`, little-endian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhyHeader {
    pub blocks: u16,
    pub padding_bits: u16,
    pub amc_index: u8,
}

impl PhyHeader {
    pub const LEN: usize = 5;

    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let b = self.blocks.to_le_bytes();
        let p = self.padding_bits.to_le_bytes();
        [b[0], b[1], p[0], p[1], self.amc_index]
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::LEN {
            return Err(HdaError::Framing(format!(
                "PHY header is {} bytes, expected 5",
                bytes.len()
            )));
        }
        Ok(PhyHeader {
            blocks: u16::from_le_bytes([bytes[0], bytes[1]]),
            padding_bits: u16::from_le_bytes([bytes[2], bytes[3]]),
            amc_index: bytes[4],
        })
    }
}

/// Decoded payload and per-block convergence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceivedBits {
    pub bits: Vec<u8>,
    pub blocks_failed: usize,
}

/// Channel symbols used by `blocks` codewords under `entry`.
pub fn symbols_for_blocks(blocks: usize, entry: &AmcEntry) -> usize {
    blocks * BLOCK_LEN / entry.modulation.bits_per_symbol()
}

/// Zero-pads `bits` to whole blocks, encodes and modulates them.
pub fn transmit_bits(
    bits: &[u8],
    entry: &AmcEntry,
    amc_index: u8,
) -> Result<(PhyHeader, Vec<Complex64>)> {
    let code = LdpcCode::get(entry.rate);
    let k = code.k();
    let blocks = bits.len().div_ceil(k);
    let padding = blocks * k - bits.len();
    let blocks16 = u16::try_from(blocks)
        .map_err(|_| HdaError::Framing(format!("{blocks} blocks exceed the header field")))?;
    let mut coded = Vec::with_capacity(blocks * BLOCK_LEN);
    for b in 0..blocks {
        let mut info = vec![0u8; k];
        let end = ((b + 1) * k).min(bits.len());
        info[..end - b * k].copy_from_slice(&bits[b * k..end]);
        coded.extend(code.encode(&info)?);
    }
    let symbols = modulate(&coded, entry.modulation)?;
    Ok((
        PhyHeader {
            blocks: blocks16,
            padding_bits: padding as u16,
            amc_index,
        },
        symbols,
    ))
}

/// Demaps and decodes detected symbols `x̂` with effective noise variance `noise_var`.
pub fn receive_blocks(
    symbols: &[Complex64],
    noise_var: f64,
    header: &PhyHeader,
    entry: &AmcEntry,
    demapper: Demapper,
    max_iters: usize,
) -> Result<ReceivedBits> {
    let code = LdpcCode::get(entry.rate);
    let blocks = header.blocks as usize;
    let need = symbols_for_blocks(blocks, entry);
    if symbols.len() < need {
        return Err(HdaError::Framing(format!(
            "header announces {need} symbols, only {} received",
            symbols.len()
        )));
    }
    let llrs = demodulate_soft(&symbols[..need], noise_var, entry.modulation, demapper);
    let decoded: Vec<_> = llrs
        .par_chunks(BLOCK_LEN)
        .map(|block| code.decode(block, max_iters))
        .collect::<Result<_>>()?;
    let blocks_failed = decoded.iter().filter(|d| !d.converged).count();
    let mut bits: Vec<u8> = decoded.into_iter().flat_map(|d| d.bits).collect();
    let keep = bits
        .len()
        .checked_sub(header.padding_bits as usize)
        .ok_or_else(|| HdaError::Framing("padding longer than payload".into()))?;
    bits.truncate(keep);
    Ok(ReceivedBits {
        bits,
        blocks_failed,
    })
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Packs bits MSB-first; a trailing partial byte is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}
