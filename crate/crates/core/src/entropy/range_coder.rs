//! 32-bit range coder over 16-bit frequency tables.
//!
//! The encoder keeps a 33-bit `low` and propagates carries through a cached byte plus a run
//! of pending `0xFF` bytes, so `range` always stays ≥ 2^24 and every table of total 2^16 keeps
//! at least 8 bits of interval precision.

use crate::error::{HdaError, Result};

pub const TABLE_BITS: u32 = 16;
pub const TABLE_TOTAL: u32 = 1 << TABLE_BITS;
const TOP: u32 = 1 << 24;

/// Canonical integer frequency table over a contiguous symbol range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    offset: i32,
    freqs: Vec<u32>,
    cum: Vec<u32>,
}

impl FrequencyTable {
    /// Quantizes probabilities for symbols `offset, offset+1, …` to frequencies summing to
    /// [`TABLE_TOTAL`], with every symbol receiving at least one count.
    ///
    /// Leftover counts go to the bins with the largest fractional remainder (lowest index on ties).
    pub fn from_probabilities(offset: i32, probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        if n == 0 || n as u32 > TABLE_TOTAL {
            return Err(HdaError::Encoding(format!(
                "cannot build a table over {n} symbols"
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(HdaError::Encoding(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(HdaError::Encoding("probabilities sum to zero".into()));
        }
        let spare = f64::from(TABLE_TOTAL - n as u32);
        let mut freqs = Vec::with_capacity(n);
        let mut remainders = Vec::with_capacity(n);
        for (i, p) in probs.iter().enumerate() {
            let exact = p / total * spare;
            let fl = exact.floor();
            freqs.push(1 + fl as u32);
            remainders.push((exact - fl, i));
        }
        let assigned: u32 = freqs.iter().sum();
        let mut left = TABLE_TOTAL - assigned;
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut k = 0;
        while left > 0 {
            freqs[remainders[k % n].1] += 1;
            left -= 1;
            k += 1;
        }
        Ok(Self::from_freqs(offset, freqs))
    }

    fn from_freqs(offset: i32, freqs: Vec<u32>) -> Self {
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0;
        cum.push(0);
        for f in &freqs {
            acc += f;
            cum.push(acc);
        }
        debug_assert_eq!(acc, TABLE_TOTAL);
        FrequencyTable { offset, freqs, cum }
    }

    pub fn uniform(offset: i32, n: usize) -> Result<Self> {
        Self::from_probabilities(offset, &vec![1.0; n])
    }

    pub fn min_symbol(&self) -> i32 {
        self.offset
    }

    pub fn max_symbol(&self) -> i32 {
        self.offset + self.freqs.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Probability the coder actually assigns to `symbol`.
    pub fn probability(&self, symbol: i32) -> Option<f64> {
        self.index(symbol)
            .map(|i| f64::from(self.freqs[i]) / f64::from(TABLE_TOTAL))
    }

    /// Ideal code length of a sequence under this table, in bits.
    pub fn cross_entropy_bits(&self, symbols: &[i32]) -> Option<f64> {
        symbols
            .iter()
            .map(|&s| self.probability(s).map(|p| -p.log2()))
            .sum()
    }

    fn index(&self, symbol: i32) -> Option<usize> {
        let i = symbol.checked_sub(self.offset)?;
        (i >= 0 && (i as usize) < self.freqs.len()).then_some(i as usize)
    }

    fn lookup(&self, target: u32) -> usize {
        // largest i with cum[i] <= target
        self.cum.partition_point(|&c| c <= target) - 1
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, symbol: i32, table: &FrequencyTable) -> Result<()> {
        let i = table.index(symbol).ok_or_else(|| {
            HdaError::Encoding(format!(
                "symbol {symbol} outside table support [{}, {}]",
                table.min_symbol(),
                table.max_symbol()
            ))
        })?;
        let r = self.range >> TABLE_BITS;
        self.low += u64::from(r) * u64::from(table.cum[i]);
        self.range = r * table.freqs[i];
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            while self.pending > 0 {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        // the first byte is the initial cache slot and always zero
        self.out.remove(0);
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            input,
            pos: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    pub fn decode(&mut self, table: &FrequencyTable) -> i32 {
        let r = self.range >> TABLE_BITS;
        let target = (self.code / r).min(TABLE_TOTAL - 1);
        let i = table.lookup(target);
        self.code -= r * table.cum[i];
        self.range = r * table.freqs[i];
        while self.range < TOP {
            self.code = (self.code << 8) | u32::from(self.next_byte());
            self.range <<= 8;
        }
        table.offset + i as i32
    }
}
