use super::density::FactorizedDensity;
use crate::error::Result;
use crate::nn::{Binding, Tape, Var};

/// Rate term: mean `−ln p` per symbol (nats per symbol).
pub fn loss_rate(
    tape: &mut Tape,
    bind: &Binding,
    density: &FactorizedDensity,
    values: Var,
) -> Result<Var> {
    let count = tape.shape(values).iter().product::<usize>() as f64;
    let p = density.likelihoods(tape, bind, values)?;
    let nll = tape.ln(p);
    let total = tape.sum(nll);
    Ok(tape.scale(total, -1.0 / count))
}

/// Mean `−ln p` per symbol for a plain list of likelihoods.
pub fn rate_from_likelihoods(likelihoods: &[f64]) -> f64 {
    -likelihoods.iter().map(|p| p.ln()).sum::<f64>() / likelihoods.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_entropy_in_nats() {
        let r = rate_from_likelihoods(&vec![1.0 / 256.0; 1000]);
        assert!((r - 256f64.ln()).abs() < 1e-12);
        assert!((r - 5.545).abs() < 1e-3);
    }
}
