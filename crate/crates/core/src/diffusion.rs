//! Diffusion-based refinement of detected analog symbols and a one-step denoiser baseline.
//!
//! Signals live in a real domain where a unit-power complex frame becomes interleaved
//! `(re, im)` pairs scaled by `√2`, so both the clean signal and the noise have unit
//! variance per real dimension.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim_err, HdaError, Result};
use crate::hda::{to_complex, to_interleaved};
use crate::nn::{Binding, Linear, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE};

pub const DEFAULT_STEPS: usize = 50;
pub const EMBED_DIM: usize = 32;

/// `γ(t) = 0.5·t/T`, signal coefficient `ᾱ(t) = √∏(1−γ)`, noise coefficient `γ̄(t) = √(1−ᾱ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    steps: usize,
    gamma: Vec<f64>,
    signal: Vec<f64>,
    noise: Vec<f64>,
}

pub fn build_schedule(steps: usize) -> Result<DiffusionSchedule> {
    if steps < 1 {
        return Err(HdaError::Config("diffusion needs at least one step".into()));
    }
    let mut gamma = vec![0.0; steps + 1];
    let mut signal = vec![1.0; steps + 1];
    let mut noise = vec![0.0; steps + 1];
    let mut prod = 1.0;
    for t in 1..=steps {
        gamma[t] = 0.5 * t as f64 / steps as f64;
        prod *= 1.0 - gamma[t];
        signal[t] = prod.sqrt();
        noise[t] = (1.0 - prod).sqrt();
    }
    Ok(DiffusionSchedule {
        steps,
        gamma,
        signal,
        noise,
    })
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    /// `ᾱ(t)`, with `ᾱ(0) = 1`.
    pub fn signal(&self, t: usize) -> f64 {
        self.signal[t]
    }

    /// `γ̄(t)`, with `γ̄(0) = 0`.
    pub fn noise(&self, t: usize) -> f64 {
        self.noise[t]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(HdaError::Step {
                step: t,
                horizon: self.steps,
            });
        }
        Ok(())
    }
}

/// `x_t = ᾱ(t)·x0 + γ̄(t)·ε`.
pub fn forward_sample(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x0.len() != eps.len() {
        return dim_err(format!(
            "signal has {} values, noise {}",
            x0.len(),
            eps.len()
        ));
    }
    let (a, g) = (schedule.signal(t), schedule.noise(t));
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + g * e).collect())
}

/// Complex symbols to the `√2`-scaled interleaved real domain.
pub fn to_diffusion_domain(symbols: &[Complex64]) -> Vec<f64> {
    let s = std::f64::consts::SQRT_2;
    to_interleaved(symbols).into_iter().map(|v| v * s).collect()
}

pub fn from_diffusion_domain(x: &[f64]) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    to_complex(&x.iter().map(|v| v * s).collect::<Vec<_>>())
}

/// `x̃ = x̂ / √(1+σ_ñ²)`.
pub fn rescale_detected(x_hat: &[f64], noise_var: f64) -> Result<Vec<f64>> {
    if !(noise_var >= 0.0) {
        return Err(HdaError::Domain(format!(
            "noise variance {noise_var} is negative"
        )));
    }
    let k = 1.0 / (1.0 + noise_var).sqrt();
    Ok(x_hat.iter().map(|v| v * k).collect())
}

/// Signal and noise coefficients of the rescaled detection.
pub fn rescale_coefficients(noise_var: f64) -> (f64, f64) {
    let d = (1.0 + noise_var).sqrt();
    (1.0 / d, noise_var.sqrt() / d)
}

/// Largest step whose signal coefficient still reaches `1/√(1+σ²)` (ties go to the smaller step).
pub fn map_noise_to_step(noise_var: f64, schedule: &DiffusionSchedule) -> usize {
    let a = 1.0 / (1.0 + noise_var.max(0.0)).sqrt();
    let target = a * (1.0 - 1e-12);
    (0..=schedule.steps)
        .rev()
        .find(|&t| schedule.signal(t) >= target)
        .unwrap_or(0)
}

/// Anything that predicts the injected noise of a diffused signal at step `t`.
pub trait NoisePredictor {
    fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// `x^(t−1) = (x^(t) − γ(t)/γ̄(t)·ε̂) / √(1−γ(t))`.
pub fn reverse_step(
    x: &[f64],
    eps: &[f64],
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x.len() != eps.len() {
        return dim_err("predictor output length differs from its input");
    }
    let c = schedule.gamma(t) / schedule.noise(t);
    let k = 1.0 / (1.0 - schedule.gamma(t)).sqrt();
    Ok(x.iter().zip(eps).map(|(v, e)| k * (v - c * e)).collect())
}

/// Deterministic reverse process started at the step matched to `noise_var`.
pub fn dynamic_sample(
    x_tilde: &[f64],
    noise_var: f64,
    predictor: &impl NoisePredictor,
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    let start = map_noise_to_step(noise_var, schedule);
    let mut x = x_tilde.to_vec();
    for t in (1..=start).rev() {
        let eps = predictor.predict(&x, t)?;
        x = reverse_step(&x, &eps, t, schedule)?;
    }
    Ok(x)
}

/// Sinusoidal embedding of step `t` (`EMBED_DIM` values).
pub fn step_embedding(t: usize) -> Vec<f64> {
    let half = EMBED_DIM / 2;
    let mut e = Vec::with_capacity(EMBED_DIM);
    for k in 0..half {
        let freq = (-(1000f64.ln()) * k as f64 / half as f64).exp();
        e.push((t as f64 * freq).sin());
    }
    for k in 0..half {
        let freq = (-(1000f64.ln()) * k as f64 / half as f64).exp();
        e.push((t as f64 * freq).cos());
    }
    e
}

/// Dense noise predictor: three hidden layers of `width`, an output layer, and a
/// per-dimension gain on the input added to the output.
///
/// With `schedule_steps > 0` the network is conditioned: every hidden layer and the gain
/// receive a projection of the step embedding, and the dense stack estimates the clean
/// signal `D`, from which the noise follows as `ε̂ = (x − ᾱ(t)·D)/γ̄(t)`. Otherwise the
/// network is blind to the noise level and its output is the noise estimate itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenoiserNet {
    pub prefix: String,
    pub dim: usize,
    pub width: usize,
    pub schedule_steps: usize,
}

impl DenoiserNet {
    pub fn diffusion(dim: usize, width: usize, schedule_steps: usize) -> Self {
        DenoiserNet {
            prefix: "denoiser".into(),
            dim,
            width,
            schedule_steps: schedule_steps.max(1),
        }
    }

    pub fn one_step(dim: usize, width: usize) -> Self {
        DenoiserNet {
            prefix: "onestep".into(),
            dim,
            width,
            schedule_steps: 0,
        }
    }

    pub fn conditioned(&self) -> bool {
        self.schedule_steps > 0
    }

    fn dense(&self) -> [Linear; 4] {
        let p = &self.prefix;
        [
            Linear::new(format!("{p}.fc1"), self.dim, self.width),
            Linear::new(format!("{p}.fc2"), self.width, self.width),
            Linear::new(format!("{p}.fc3"), self.width, self.width),
            Linear::new(format!("{p}.fc4"), self.width, self.dim),
        ]
    }

    fn embeds(&self) -> [Linear; 4] {
        let p = &self.prefix;
        [
            Linear::new(format!("{p}.emb1"), EMBED_DIM, self.width),
            Linear::new(format!("{p}.emb2"), EMBED_DIM, self.width),
            Linear::new(format!("{p}.emb3"), EMBED_DIM, self.width),
            Linear::new(format!("{p}.gain"), EMBED_DIM, self.dim),
        ]
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in &self.dense() {
            l.init(store, rng);
        }
        if self.conditioned() {
            for l in &self.embeds() {
                l.init(store, rng);
            }
            // the clean-signal estimate starts as the input itself
            let w = store
                .get_mut(&format!("{}.gain.w", self.prefix))
                .expect("just inserted");
            w.data_mut().fill(0.0);
            let b = store
                .get_mut(&format!("{}.gain.b", self.prefix))
                .expect("just inserted");
            b.data_mut().fill(1.0);
        } else {
            store.insert(format!("{}.gain", self.prefix), Tensor::zeros(&[self.dim]));
        }
        let w = store
            .get_mut(&format!("{}.fc4.w", self.prefix))
            .expect("just inserted");
        for v in w.data_mut() {
            *v *= 0.1;
        }
    }

    /// `ε̂` for a `B×dim` batch; `steps` holds one step per row and is ignored when blind.
    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var, steps: &[usize]) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        if s.len() != 2 || s[1] != self.dim {
            return dim_err(format!("denoiser expects B×{}, got {s:?}", self.dim));
        }
        let dense = self.dense();
        let emb = if self.conditioned() {
            if steps.len() != s[0] {
                return dim_err("one diffusion step per row is required");
            }
            let e: Vec<f64> = steps.iter().flat_map(|&t| step_embedding(t)).collect();
            Some(tape.constant(Tensor::new(&[s[0], EMBED_DIM], e)?))
        } else {
            None
        };
        let embeds = self.embeds();
        let mut h = x;
        for (i, layer) in dense.iter().take(3).enumerate() {
            h = layer.forward(tape, bind, h)?;
            if let Some(e) = emb {
                let p = embeds[i].forward(tape, bind, e)?;
                h = tape.add(h, p)?;
            }
            h = tape.leaky_relu(h, LEAKY_SLOPE);
        }
        let out = dense[3].forward(tape, bind, h)?;
        let gain = match emb {
            Some(e) => embeds[3].forward(tape, bind, e)?,
            None => {
                let g = bind.get(&format!("{}.gain", self.prefix))?;
                tape.reshape(g, &[1, self.dim])?
            }
        };
        let gx = tape.mul(gain, x)?;
        let d = tape.add(out, gx)?;
        if emb.is_none() {
            return Ok(d);
        }
        let schedule = build_schedule(self.schedule_steps)?;
        for &t in steps {
            schedule.check_step(t)?;
        }
        let a: Vec<f64> = steps.iter().map(|&t| schedule.signal(t)).collect();
        let g: Vec<f64> = steps.iter().map(|&t| 1.0 / schedule.noise(t)).collect();
        let a = tape.constant(Tensor::new(&[s[0], 1], a)?);
        let g = tape.constant(Tensor::new(&[s[0], 1], g)?);
        let ad = tape.mul(d, a)?;
        let r = tape.sub(x, ad)?;
        tape.mul(r, g)
    }

    fn predict_rows(&self, store: &ParamStore, x: &[f64], t: usize) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return dim_err(format!(
                "denoiser expects {} values, got {}",
                self.dim,
                x.len()
            ));
        }
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, |_| false);
        let xv = tape.constant(Tensor::new(&[1, self.dim], x.to_vec())?);
        let out = self.forward(&mut tape, &bind, xv, &[t])?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// A network with its parameters and a training-status flag.
pub struct TrainedDenoiser<'a> {
    pub net: &'a DenoiserNet,
    pub store: &'a ParamStore,
    pub trained: bool,
}

impl NoisePredictor for TrainedDenoiser<'_> {
    fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(HdaError::Refused(format!(
                "{} has not been trained",
                self.net.prefix
            )));
        }
        self.net.predict_rows(self.store, x, t)
    }
}

/// `E‖ε − ε̂(ᾱ(t)x0 + γ̄(t)ε, t)‖²` with `t` uniform on `1..=T` and `ε ~ N(0, I)`, per sample.
pub fn diffusion_loss(
    tape: &mut Tape,
    bind: &Binding,
    net: &DenoiserNet,
    x0: &Tensor,
    schedule: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Result<Var> {
    let steps: Vec<usize> = (0..x0.shape()[0])
        .map(|_| rng.random_range(1..=schedule.steps()))
        .collect();
    diffusion_loss_at(tape, bind, net, x0, &steps, schedule, rng)
}

/// [`diffusion_loss`] with the step of every row given.
pub fn diffusion_loss_at(
    tape: &mut Tape,
    bind: &Binding,
    net: &DenoiserNet,
    x0: &Tensor,
    steps: &[usize],
    schedule: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Result<Var> {
    let (b, d) = (x0.shape()[0], x0.shape()[1]);
    if steps.len() != b {
        return dim_err("one step per row is required");
    }
    let eps: Vec<f64> = (0..b * d).map(|_| StandardNormal.sample(rng)).collect();
    let mut xt = Vec::with_capacity(b * d);
    for (i, &t) in steps.iter().enumerate() {
        let row = forward_sample(
            &x0.data()[i * d..(i + 1) * d],
            t,
            &eps[i * d..(i + 1) * d],
            schedule,
        )?;
        xt.extend(row);
    }
    let xt = tape.constant(Tensor::new(&[b, d], xt)?);
    let target = tape.constant(Tensor::new(&[b, d], eps)?);
    let pred = net.forward(tape, bind, xt, steps)?;
    per_sample_squared_error(tape, pred, target)
}

fn per_sample_squared_error(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let per = tape.sum_rows(sq)?;
    Ok(tape.mean(per))
}

/// Blind residual training: the network sees `x0 + σ·ε` and must output `σ·ε`.
pub fn one_step_loss(
    tape: &mut Tape,
    bind: &Binding,
    net: &DenoiserNet,
    x0: &Tensor,
    noise_vars: &[f64],
    rng: &mut impl Rng,
) -> Result<Var> {
    let (b, d) = (x0.shape()[0], x0.shape()[1]);
    if noise_vars.len() != b {
        return dim_err("one noise variance per row is required");
    }
    let mut noisy = Vec::with_capacity(b * d);
    let mut target = Vec::with_capacity(b * d);
    for (i, &v) in noise_vars.iter().enumerate() {
        let s = v.sqrt();
        for &x in &x0.data()[i * d..(i + 1) * d] {
            let e: f64 = StandardNormal.sample(rng);
            noisy.push(x + s * e);
            target.push(s * e);
        }
    }
    let xv = tape.constant(Tensor::new(&[b, d], noisy)?);
    let tv = tape.constant(Tensor::new(&[b, d], target)?);
    let pred = net.forward(tape, bind, xv, &[])?;
    per_sample_squared_error(tape, pred, tv)
}

/// Undoes the rescaling and subtracts the baseline's noise estimate once.
pub fn one_step_denoise(
    x_tilde: &[f64],
    noise_var: f64,
    baseline: &TrainedDenoiser,
) -> Result<Vec<f64>> {
    if !baseline.trained {
        return Err(HdaError::Refused(
            "one-step baseline has not been trained".into(),
        ));
    }
    let x_hat: Vec<f64> = x_tilde
        .iter()
        .map(|v| v * (1.0 + noise_var).sqrt())
        .collect();
    let n = baseline.net.predict_rows(baseline.store, &x_hat, 0)?;
    Ok(x_hat.iter().zip(&n).map(|(x, e)| x - e).collect())
}
