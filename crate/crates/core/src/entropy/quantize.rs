use log::warn;

/// Integer symbols with the number of values that had to be saturated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quantized {
    pub symbols: Vec<i32>,
    pub saturated: usize,
}

/// Round half away from zero, saturating at `±bound`.
pub fn quantize(values: &[f64], bound: i32) -> Quantized {
    let b = bound as f64;
    let mut saturated = 0;
    let symbols = values
        .iter()
        .map(|&v| {
            let r = v.round();
            if r > b || r < -b || r.is_nan() {
                saturated += 1;
                if r.is_nan() {
                    0
                } else {
                    r.clamp(-b, b) as i32
                }
            } else {
                r as i32
            }
        })
        .collect();
    if saturated > 0 {
        warn!(
            "quantizer saturated {saturated} of {} values at ±{bound}",
            values.len()
        );
    }
    Quantized { symbols, saturated }
}

pub fn dequantize(symbols: &[i32]) -> Vec<f64> {
    symbols.iter().map(|&s| f64::from(s)).collect()
}
