use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// Compares the tape gradient of a scalar-valued `op` at `input` with central differences.
///
/// Returns `max_i |analytic_i − numeric_i| / (|analytic_i| + epsilon)`.
pub fn finite_difference_check<F>(op: F, input: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |x: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let out = op(&mut tape, v)?;
        scalar_of(&tape, out)
    };
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let out = op(&mut tape, x)?;
    scalar_of(&tape, out)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(input.shape()));

    let mut worst: f64 = 0.0;
    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / (a.abs() + epsilon));
    }
    Ok(worst)
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return dim_err(format!(
            "gradient check needs a scalar output, got {:?}",
            t.shape()
        ));
    }
    Ok(t.item())
}
