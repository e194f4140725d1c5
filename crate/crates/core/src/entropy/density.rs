//! Univariate non-parametric cumulative density, one independent model per channel.
//!
//! Each channel owns a stack of `K` monotone layers `x ← softplus(H)·x + b`, the first `K−1`
//! followed by `x ← x + tanh(a)⊙tanh(x)`. The final scalar is the logit of the cumulative.

use rand::Rng;

use super::range_coder::FrequencyTable;
use super::{PROB_FLOOR, SUPPORT_BOUND};
use crate::error::{dim_err, HdaError, Result};
use crate::nn::{sigmoid, softplus, Binding, ParamStore, Tape, Tensor, Var};

/// Filter widths between the layers of every channel's cumulative model.
pub const DENSITY_FILTERS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = DENSITY_FILTERS.len() - 1;
const INIT_SCALE: f64 = 10.0;

/// Parameter layout of the factorized prior, stored under `density.*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FactorizedDensity {
    pub channels: usize,
}

fn matrix_name(k: usize) -> String {
    format!("density.matrix{k}")
}

fn bias_name(k: usize) -> String {
    format!("density.bias{k}")
}

fn factor_name(k: usize) -> String {
    format!("density.factor{k}")
}

impl FactorizedDensity {
    pub fn new(channels: usize) -> Self {
        FactorizedDensity { channels }
    }

    /// Initializes a broad unimodal prior: the composed slope is about `1/INIT_SCALE`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let c = self.channels;
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        for k in 0..LAYERS {
            let (fi, fo) = (DENSITY_FILTERS[k], DENSITY_FILTERS[k + 1]);
            let init = (1.0 / scale / fo as f64).exp_m1().ln();
            store.insert(matrix_name(k), Tensor::full(&[c, fo, fi], init));
            let b = (0..c * fo).map(|_| rng.random_range(-0.5..0.5)).collect();
            store.insert(
                bias_name(k),
                Tensor::new(&[c, fo, 1], b).expect("bias shape"),
            );
            if k + 1 < LAYERS {
                store.insert(factor_name(k), Tensor::zeros(&[c, fo, 1]));
            }
        }
    }

    /// Cumulative logits of `x: [C×1×N]` on the tape.
    fn logits(&self, tape: &mut Tape, bind: &Binding, mut x: Var) -> Result<Var> {
        for k in 0..LAYERS {
            let m = bind.get(&matrix_name(k))?;
            let m = tape.softplus(m);
            x = tape.channel_matmul(m, x)?;
            x = tape.add(x, bind.get(&bias_name(k))?)?;
            if k + 1 < LAYERS {
                let f = bind.get(&factor_name(k))?;
                let f = tape.tanh(f);
                let t = tape.tanh(x);
                let ft = tape.mul(f, t)?;
                x = tape.add(x, ft)?;
            }
        }
        Ok(x)
    }

    /// Bin likelihoods of `values: [B×C×h×w]`, floored at `2⁻¹⁶`; result is `[C×1×N]` with
    /// `N = B·h·w` and columns in batch-major order.
    pub fn likelihoods(&self, tape: &mut Tape, bind: &Binding, values: Var) -> Result<Var> {
        let shape = tape.shape(values).to_vec();
        if shape.len() != 4 || shape[1] != self.channels {
            return dim_err(format!(
                "density expects [B×{}×h×w], got {shape:?}",
                self.channels
            ));
        }
        let n = shape[0] * shape[2] * shape[3];
        let v = tape.swap_leading(values)?;
        let v = tape.reshape(v, &[self.channels, 1, n])?;
        let hi = tape.offset(v, 0.5);
        let lo = tape.offset(v, -0.5);
        let upper = self.logits(tape, bind, hi)?;
        let lower = self.logits(tape, bind, lo)?;
        // evaluate on the side of the sigmoid where the difference is best conditioned
        let sign: Vec<f64> = tape
            .value(upper)
            .data()
            .iter()
            .zip(tape.value(lower).data())
            .map(|(u, l)| if u + l > 0.0 { -1.0 } else { 1.0 })
            .collect();
        let sign = tape.constant(Tensor::new(&[self.channels, 1, n], sign)?);
        let su = tape.mul(upper, sign)?;
        let sl = tape.mul(lower, sign)?;
        let pu = tape.sigmoid(su);
        let pl = tape.sigmoid(sl);
        let d = tape.sub(pu, pl)?;
        let p = tape.abs(d);
        Ok(tape.clamp(p, PROB_FLOOR, 1.0))
    }

    /// Frozen, tape-free evaluator over the parameters in `store`.
    pub fn evaluator(&self, store: &ParamStore) -> Result<DensityEvaluator> {
        let get = |name: String| {
            store
                .get(&name)
                .cloned()
                .ok_or_else(|| HdaError::Config(format!("missing parameter '{name}'")))
        };
        let mut layers = Vec::with_capacity(LAYERS);
        for k in 0..LAYERS {
            let (fi, fo) = (DENSITY_FILTERS[k], DENSITY_FILTERS[k + 1]);
            let m = get(matrix_name(k))?;
            let b = get(bias_name(k))?;
            if m.shape() != [self.channels, fo, fi] || b.shape() != [self.channels, fo, 1] {
                return dim_err(format!("density layer {k} has the wrong shape"));
            }
            let f = if k + 1 < LAYERS {
                let f = get(factor_name(k))?;
                if f.shape() != [self.channels, fo, 1] {
                    return dim_err(format!("density factor {k} has the wrong shape"));
                }
                Some(f.map(f64::tanh))
            } else {
                None
            };
            layers.push(EvalLayer {
                fi,
                fo,
                matrix: m.map(softplus),
                bias: b,
                factor: f,
            });
        }
        Ok(DensityEvaluator {
            channels: self.channels,
            layers,
        })
    }
}

#[derive(Clone, Debug)]
struct EvalLayer {
    fi: usize,
    fo: usize,
    matrix: Tensor,
    bias: Tensor,
    factor: Option<Tensor>,
}

/// Scalar evaluation of the per-channel cumulative model and its coding tables.
#[derive(Clone, Debug)]
pub struct DensityEvaluator {
    channels: usize,
    layers: Vec<EvalLayer>,
}

impl DensityEvaluator {
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Logit of the cumulative `c(v)` for one channel.
    pub fn cumulative_logit(&self, channel: usize, v: f64) -> f64 {
        let mut x = [v, 0.0, 0.0];
        let mut y = [0.0; 3];
        for l in &self.layers {
            let m = &l.matrix.data()[channel * l.fo * l.fi..][..l.fo * l.fi];
            let b = &l.bias.data()[channel * l.fo..][..l.fo];
            for o in 0..l.fo {
                y[o] = b[o] + (0..l.fi).map(|i| m[o * l.fi + i] * x[i]).sum::<f64>();
            }
            if let Some(f) = &l.factor {
                let f = &f.data()[channel * l.fo..][..l.fo];
                for o in 0..l.fo {
                    y[o] += f[o] * y[o].tanh();
                }
            }
            x[..l.fo].copy_from_slice(&y[..l.fo]);
        }
        x[0]
    }

    pub fn cumulative(&self, channel: usize, v: f64) -> f64 {
        sigmoid(self.cumulative_logit(channel, v))
    }

    /// `c(bin+½) − c(bin−½)` before flooring.
    pub fn raw_bin_probability(&self, channel: usize, bin: f64) -> f64 {
        let u = self.cumulative_logit(channel, bin + 0.5);
        let l = self.cumulative_logit(channel, bin - 0.5);
        let s = if u + l > 0.0 { -1.0 } else { 1.0 };
        (sigmoid(s * u) - sigmoid(s * l)).abs()
    }

    /// Floored bin probabilities over `[−SUPPORT_BOUND, SUPPORT_BOUND]`, renormalized to sum to one.
    pub fn support_probabilities(&self, channel: usize) -> Vec<f64> {
        let p: Vec<f64> = (-SUPPORT_BOUND..=SUPPORT_BOUND)
            .map(|b| {
                self.raw_bin_probability(channel, f64::from(b))
                    .max(PROB_FLOOR)
            })
            .collect();
        let total: f64 = p.iter().sum();
        p.into_iter().map(|v| v / total).collect()
    }

    /// Probability of integer `bin`; zero outside the support.
    pub fn bin_probability(&self, bin: i32, channel: usize) -> f64 {
        if bin.abs() > SUPPORT_BOUND || channel >= self.channels {
            return 0.0;
        }
        self.support_probabilities(channel)[(bin + SUPPORT_BOUND) as usize]
    }

    /// Canonical 16-bit coding tables, one per channel.
    pub fn tables(&self) -> Result<Vec<FrequencyTable>> {
        (0..self.channels)
            .map(|c| {
                FrequencyTable::from_probabilities(-SUPPORT_BOUND, &self.support_probabilities(c))
            })
            .collect()
    }
}
