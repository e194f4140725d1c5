use super::range_coder::{FrequencyTable, RangeDecoder, RangeEncoder};
use crate::error::{HdaError, Result};

pub const BITSTREAM_MAGIC: u32 = 0x4844_4143;
pub const BITSTREAM_VERSION: u8 = 1;
pub const FLAG_ENCRYPTED: u8 = 1;

/// Header plus range-coded payload.
///
/// Serialized little-endian as magic `u32`, version `u8`, channel count `u16`, one `u32`
/// symbol count per channel, flags `u8`, then the payload bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub symbol_counts: Vec<u32>,
    pub encrypted: bool,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn header_len(channels: usize) -> usize {
        4 + 1 + 2 + 4 * channels + 1
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(Self::header_len(self.symbol_counts.len()) + self.payload.len());
        out.extend_from_slice(&BITSTREAM_MAGIC.to_le_bytes());
        out.push(BITSTREAM_VERSION);
        out.extend_from_slice(&(self.symbol_counts.len() as u16).to_le_bytes());
        for c in &self.symbol_counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.push(if self.encrypted { FLAG_ENCRYPTED } else { 0 });
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let framing = |m: &str| HdaError::Framing(m.to_string());
        if bytes.len() < 7 {
            return Err(framing("stream shorter than the fixed header"));
        }
        let magic = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
        if magic != BITSTREAM_MAGIC {
            return Err(framing("bad magic"));
        }
        if bytes[4] != BITSTREAM_VERSION {
            return Err(HdaError::Framing(format!(
                "unsupported version {}",
                bytes[4]
            )));
        }
        let channels = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
        let hl = Self::header_len(channels);
        if bytes.len() < hl {
            return Err(framing("truncated channel table"));
        }
        let symbol_counts = (0..channels)
            .map(|c| u32::from_le_bytes(bytes[7 + 4 * c..11 + 4 * c].try_into().expect("4 bytes")))
            .collect();
        let flags = bytes[hl - 1];
        if flags & !FLAG_ENCRYPTED != 0 {
            return Err(HdaError::Framing(format!("unknown flag bits {flags:#04x}")));
        }
        Ok(Bitstream {
            symbol_counts,
            encrypted: flags & FLAG_ENCRYPTED != 0,
            payload: bytes[hl..].to_vec(),
        })
    }

    /// Total serialized size in bits.
    pub fn bit_len(&self) -> usize {
        8 * (Self::header_len(self.symbol_counts.len()) + self.payload.len())
    }
}

/// Codes every channel's symbols in channel order with that channel's table.
pub fn range_encode(symbols: &[Vec<i32>], tables: &[FrequencyTable]) -> Result<Bitstream> {
    if symbols.len() != tables.len() {
        return Err(HdaError::Encoding(format!(
            "{} symbol channels but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    if symbols.len() > u16::MAX as usize {
        return Err(HdaError::Encoding("too many channels".into()));
    }
    let mut enc = RangeEncoder::new();
    let mut counts = Vec::with_capacity(symbols.len());
    let mut any = false;
    for (ch, table) in symbols.iter().zip(tables) {
        counts.push(
            u32::try_from(ch.len()).map_err(|_| HdaError::Encoding("channel too long".into()))?,
        );
        for &s in ch {
            enc.encode(s, table)?;
            any = true;
        }
    }
    Ok(Bitstream {
        symbol_counts: counts,
        encrypted: false,
        payload: if any { enc.finish() } else { Vec::new() },
    })
}

pub fn range_decode(stream: &Bitstream, tables: &[FrequencyTable]) -> Result<Vec<Vec<i32>>> {
    if stream.symbol_counts.len() != tables.len() {
        return Err(HdaError::Framing(format!(
            "stream has {} channels, density has {}",
            stream.symbol_counts.len(),
            tables.len()
        )));
    }
    let mut dec = RangeDecoder::new(&stream.payload);
    Ok(stream
        .symbol_counts
        .iter()
        .zip(tables)
        .map(|(&n, t)| (0..n).map(|_| dec.decode(t)).collect())
        .collect())
}
