//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines reach the test log. Criteria that
//! fail are reported, not asserted, so a failing trend does not hide the others.

use std::time::Instant;

use hda_core::channel::{apply_channel, average_power, sample_channel, ChannelKind};
use hda_core::diffusion::{
    build_schedule, diffusion_loss, dynamic_sample, one_step_denoise, rescale_detected, DenoiserNet,
};
use hda_core::entropy::{loss_rate, range_decode, range_encode, FactorizedDensity, FrequencyTable};
use hda_core::harness::{
    held_out_images, run_da_ratio_sweep, run_security_eval, run_snr_sweep, write_metrics_csv,
    write_security_csv, SweepSettings,
};
use hda_core::hda::{loss_channel_distortion, AnalogCodec, HyperCodec, QuantMode};
use hda_core::nn::{finite_difference_check, ParamStore, Tape, Tensor, Var};
use hda_core::phy::{
    demodulate_soft, hard_decision, receive_blocks, transmit_bits, AmcEntry, CodeRate, Demapper,
    LdpcCode, Modulation, BLOCK_LEN,
};
use hda_core::pipeline::{
    analog_frames, encode_checkpoint, generate_textures, infer, train_all, train_stage1,
    train_stage2, train_stage3, training_images, Config, DenoiserMode, EavesdropperMode, HdaModel,
    InferOptions,
};
use hda_core::rng::seeded;
use hda_core::semantic::{batch_images, semantic_loss, SemanticCodec};
use hda_core::Result;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn report(id: usize, name: &str, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let (pass, detail) = match f() {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{} {id} {name}: {detail} [{secs:.1}s]",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------------------------------------
// 1. entropy coder

fn entropy_coder() -> Result<Outcome> {
    let mut rng = seeded(101);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let n = rng.random_range(2..64);
        let probs: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.0f64..1.0).powi(3) + 1e-3)
            .collect();
        let table = FrequencyTable::from_probabilities(-(n as i32) / 2, &probs)?;
        // draw from the table's own distribution
        let cdf: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let total = cdf[n - 1];
        let len = rng.random_range(1..400);
        let symbols: Vec<i32> = (0..len)
            .map(|_| {
                let u = rng.random_range(0.0..total);
                table.min_symbol() + cdf.partition_point(|&c| c <= u).min(n - 1) as i32
            })
            .collect();
        let tables = [table];
        let stream = range_encode(std::slice::from_ref(&symbols), &tables)?;
        if range_decode(&stream, &tables)?[0] != symbols {
            return outcome(false, "a sequence failed to round-trip");
        }
        let ideal = tables[0]
            .cross_entropy_bits(&symbols)
            .expect("symbols in support");
        let coded = (stream.payload.len() * 8) as f64;
        worst_excess = worst_excess.max(coded - (1.02 * ideal + 32.0));
    }
    outcome(
        worst_excess <= 0.0,
        format!("10^4 sequences exact; worst coded − (1.02·H + 32) = {worst_excess:.1} bits"),
    )
}

// ---------------------------------------------------------------------------------------------
// 2. LDPC

fn awgn(symbols: &mut [Complex64], var: f64, rng: &mut impl Rng) {
    let sd = (var / 2.0).sqrt();
    for s in symbols {
        *s += Complex64::new(sd * gaussian(rng), sd * gaussian(rng));
    }
}

fn ldpc() -> Result<Outcome> {
    let mut rng = seeded(202);
    for rate in [CodeRate::Half, CodeRate::ThreeQuarters] {
        let code = LdpcCode::get(rate);
        for _ in 0..50 {
            let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
            let word = code.encode(&info)?;
            let llrs: Vec<f64> = word
                .iter()
                .map(|&b| if b == 0 { 10.0 } else { -10.0 })
                .collect();
            if code.decode(&llrs, 20)?.bits[..code.k()] != info[..] {
                return outcome(
                    false,
                    format!("noiseless rate {} block decoded with errors", rate.value()),
                );
            }
        }
    }
    let entry = AmcEntry {
        rate: CodeRate::Half,
        modulation: Modulation::Qpsk,
        threshold_db: 0.0,
    };
    let k = LdpcCode::get(CodeRate::Half).k();
    let mut details = Vec::new();
    let mut ordered = true;
    let mut ber_8db = 1.0;
    for snr in [0.0, 2.0, 4.0, 6.0, 8.0] {
        let var = 10f64.powf(-snr / 10.0);
        let target = if snr == 8.0 { 1_000_000 } else { 100_000 };
        let (mut coded_err, mut uncoded_err, mut total) = (0usize, 0usize, 0usize);
        while total < target {
            let bits: Vec<u8> = (0..k * 50).map(|_| rng.random_range(0..2)).collect();
            let (h, mut s) = transmit_bits(&bits, &entry, 1)?;
            awgn(&mut s, var, &mut rng);
            let r = receive_blocks(&s, var, &h, &entry, Demapper::Exact, 20)?;
            coded_err += r.bits.iter().zip(&bits).filter(|(a, b)| a != b).count();
            // uncoded reference on the same channel: hard decisions on the systematic bits
            let hard = hard_decision(&demodulate_soft(&s, var, Modulation::Qpsk, Demapper::Exact));
            uncoded_err += hard
                .chunks(BLOCK_LEN)
                .zip(bits.chunks(k))
                .map(|(h, b)| h[..k].iter().zip(b).filter(|(x, y)| x != y).count())
                .sum::<usize>();
            total += bits.len();
        }
        let coded = coded_err as f64 / total as f64;
        let uncoded = uncoded_err as f64 / total as f64;
        ordered &= coded <= uncoded;
        if snr == 8.0 {
            ber_8db = coded;
        }
        details.push(format!("{snr} dB {coded:.1e}/{uncoded:.1e}"));
    }
    outcome(
        ordered && ber_8db < 1e-5,
        format!(
            "noiseless exact at both rates; coded/uncoded BER {}",
            details.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// 3. gradients

const FD_EPS: f64 = 1e-6;

/// Worst relative finite-difference error over every listed parameter tensor.
fn param_gradients(
    store: &ParamStore,
    names: &[String],
    loss: impl Fn(&mut Tape, &hda_core::nn::Binding) -> Result<Var>,
) -> Result<(f64, String)> {
    let mut worst = (0.0, String::new());
    for name in names {
        let p = store.get(name).expect("listed parameter").clone();
        let err = finite_difference_check(
            |t, v| {
                let mut bind = store.bind(t, |_| false);
                bind.insert(name.clone(), v);
                loss(t, &bind)
            },
            &p,
            FD_EPS,
        )?;
        if err > worst.0 {
            worst = (err, name.clone());
        }
    }
    Ok(worst)
}

fn with_prefix(store: &ParamStore, prefixes: &[&str]) -> Vec<String> {
    store
        .names()
        .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
        .map(String::from)
        .collect()
}

fn gradients() -> Result<Outcome> {
    let mut rng = seeded(303);
    let mut store = ParamStore::new();
    let sem = SemanticCodec::new([4, 6], 4);
    sem.init(&mut store, &mut rng);
    let hyper = HyperCodec::new(4, 3, 2);
    hyper.init(&mut store, &mut rng);
    let analog = AnalogCodec::new(4 * 4 * 4, 12, 10);
    analog.init(&mut store, &mut rng);
    let density = FactorizedDensity::new(2);
    density.init(&mut store, &mut rng);
    let denoiser = DenoiserNet::diffusion(8, 6, 10);
    denoiser.init(&mut store, &mut rng);

    let images = generate_textures(7, 0, 2, 16);
    let refs: Vec<_> = images.iter().collect();
    let x = batch_images(&refs)?;
    let noise: Vec<f64> = (0..2 * 20).map(|_| 0.3 * gaussian(&mut rng)).collect();
    let noise = Tensor::new(&[2, 20], noise)?;
    let z_const = {
        let mut t = Tape::new();
        let b = store.bind(&mut t, |_| false);
        let xv = t.constant(x.clone());
        let z = sem.encode(&mut t, &b, xv)?;
        t.value(z).clone()
    };
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;

    // pixel + Fourier distortion through the semantic codec
    let (e, n) = param_gradients(&store, &with_prefix(&store, &["sem_"]), |t, b| {
        let xv = t.constant(x.clone());
        let z = sem.encode(t, b, xv)?;
        let r = sem.decode(t, b, z)?;
        semantic_loss(t, xv, r, 0.1, true)
    })?;
    worst = worst.max(e);
    lines.push(format!("semantic {e:.1e} ({n})"));

    // channel distortion through allocation, analog codec, a fixed noise draw and fusion
    let (e, n) = param_gradients(
        &store,
        &with_prefix(&store, &["hyper_", "analog_"]),
        |t, b| {
            let z = t.constant(z_const.clone());
            let a = hyper.allocate(t, b, z, QuantMode::Train, &mut seeded(9))?;
            let tx = analog.encode(t, b, a.z_a)?;
            let nv = t.constant(noise.clone());
            let rx = t.add(tx, nv)?;
            let za = analog.decode(t, b, rx, &[4, 4, 4])?;
            let z_hat = hyper.fuse(t, b, za, a.z_d_tilde)?;
            loss_channel_distortion(t, z, z_hat, a.coarse, 0.1, false)
        },
    )?;
    worst = worst.max(e);
    lines.push(format!("channel {e:.1e} ({n})"));

    // rate under the factorized density, both in its parameters and in the hyper encoder
    let (e, n) = param_gradients(
        &store,
        &with_prefix(&store, &["density.", "hyper_enc"]),
        |t, b| {
            let z = t.constant(z_const.clone());
            let a = hyper.allocate(t, b, z, QuantMode::Train, &mut seeded(9))?;
            loss_rate(t, b, &density, a.z_d_tilde)
        },
    )?;
    worst = worst.max(e);
    lines.push(format!("rate {e:.1e} ({n})"));

    let x0 = Tensor::new(&[3, 8], (0..24).map(|_| gaussian(&mut rng)).collect())?;
    let schedule = build_schedule(10)?;
    let (e, n) = param_gradients(&store, &with_prefix(&store, &["denoiser."]), |t, b| {
        diffusion_loss(t, b, &denoiser, &x0, &schedule, &mut seeded(11))
    })?;
    worst = worst.max(e);
    lines.push(format!("diffusion {e:.1e} ({n})"));

    outcome(
        worst < 1e-3,
        format!("worst relative error per loss: {}", lines.join(", ")),
    )
}

// ---------------------------------------------------------------------------------------------
// 4. schedule

fn schedule_identities() -> Result<Outcome> {
    let s = build_schedule(50)?;
    let gammas = (s.gamma(1) - 0.01).abs() < 1e-15 && (s.gamma(50) - 0.5).abs() < 1e-15;
    let identity =
        (0..=50).all(|t| (s.signal(t).powi(2) + s.noise(t).powi(2) - 1.0).abs() <= 1e-12);
    let direct: f64 = (1..=50)
        .map(|t| 1.0 - 0.5 * t as f64 / 50.0)
        .product::<f64>()
        .sqrt();
    let matches_product = (s.signal(50) - direct).abs() <= 1e-15;
    let first_order = (-6.375f64).exp();
    let rel = (s.signal(50) - first_order).abs() / first_order;
    outcome(
        gammas && identity && matches_product && rel <= 0.2,
        format!(
            "γ ends ok: {gammas}; ᾱ²+γ̄²=1: {identity}; ᾱ(50) = {:.4e} equals the product: {matches_product}; \
             vs e^-6.375 = {first_order:.4e}: {:.0}% off",
            s.signal(50),
            100.0 * rel
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// desk-scale models shared by 5–8

fn desk_config(analog_symbols: usize, digital_symbols: usize) -> Config {
    let mut c = Config::default();
    let m = &mut c.model;
    m.image_size = 32;
    m.semantic_hidden = [16, 32];
    m.latent_channels = 8;
    m.hyper_hidden = 16;
    m.digital_channels = 8;
    m.analog_hidden = 512;
    m.analog_symbols = analog_symbols;
    m.digital_symbols = digital_symbols;
    m.denoiser_width = 256;
    let t = &mut c.train;
    t.textures = 400;
    t.learning_rate = 1e-3;
    t.squared_channel_loss = true;
    t.stage1_epochs = 60;
    t.stage2_epochs = 60;
    t.stage3_epochs = 30;
    t.denoiser_epochs = 20;
    t.denoiser_frames = 2000;
    c.link.cipher_key =
        Some("4f2c1d9e8b7a65544332211000ffeeddccbbaa99887766554433221100abcdef".into());
    let e = &mut c.eval;
    e.snr_db = vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0];
    e.trials = 2;
    e.images = 16;
    c
}

/// Total budget `L = 1680` complex symbols split by DA ratio.
const DA_SPLITS: [(f64, usize, usize); 3] = [(0.25, 1344, 336), (1.0, 840, 840), (3.0, 420, 1260)];

struct Desk {
    /// DA ratio 1, all stages and both denoisers.
    main: HdaModel,
    by_ratio: Vec<HdaModel>,
}

fn train_desk() -> Result<Desk> {
    let mut by_ratio = Vec::new();
    let mut main = None;
    for (ratio, l_a, l_d) in DA_SPLITS {
        let start = Instant::now();
        let mut m = HdaModel::new(desk_config(l_a, l_d))?;
        let images = training_images(&m)?;
        if ratio == 1.0 {
            train_all(&mut m, &images)?;
            main = Some(m.clone());
        } else {
            train_stage1(&mut m, &images)?;
            train_stage2(&mut m, &images)?;
            train_stage3(&mut m, &images)?;
        }
        eprintln!(
            "desk model at DA ratio {ratio} trained in {:.0}s",
            start.elapsed().as_secs_f64()
        );
        by_ratio.push(m);
    }
    Ok(Desk {
        main: main.expect("ratio 1 is in the list"),
        by_ratio,
    })
}

// ---------------------------------------------------------------------------------------------
// 5. diffusion denoising gain

/// One-sided paired bootstrap: share of resampled mean differences `a − b` that are ≤ 0.
fn bootstrap_p(a: &[f64], b: &[f64], rng: &mut impl Rng) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let rounds = 2000;
    let mut not_better = 0;
    for _ in 0..rounds {
        let m: f64 = (0..n).map(|_| d[rng.random_range(0..n)]).sum::<f64>() / n as f64;
        if m <= 0.0 {
            not_better += 1;
        }
    }
    not_better as f64 / rounds as f64
}

fn denoising_gain(desk: &Desk) -> Result<Outcome> {
    let model = &desk.main;
    let frames = analog_frames(model, &held_out_images(model, 1000))?;
    let d = frames.shape()[1];
    let net = model.denoiser();
    let base = model.one_step();
    let schedule = model.schedule()?;
    let mut rng = seeded(505);
    // 0 dB: unit noise variance per complex symbol, i.e. per real value in this domain
    let var = 1.0;
    let (mut raw, mut diff, mut one) = (Vec::new(), Vec::new(), Vec::new());
    let mse = |x0: &[f64], y: &[f64]| {
        x0.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / d as f64
    };
    for x0 in frames.data().chunks(d) {
        let noisy: Vec<f64> = x0.iter().map(|v| v + gaussian(&mut rng)).collect();
        let xt = rescale_detected(&noisy, var)?;
        raw.push(mse(x0, &noisy));
        diff.push(mse(
            x0,
            &dynamic_sample(&xt, var, &model.trained_denoiser(&net), &schedule)?,
        ));
        one.push(mse(
            x0,
            &one_step_denoise(&xt, var, &model.trained_denoiser(&base))?,
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let p_raw = bootstrap_p(&raw, &diff, &mut rng);
    let p_one = bootstrap_p(&one, &diff, &mut rng);
    let (r, m, o) = (mean(&raw), mean(&diff), mean(&one));
    outcome(
        m < r && p_raw < 0.05 && m <= o && p_one < 0.05,
        format!("{} frames, MSE raw {r:.4}, multi-step {m:.4} (p {p_raw:.3}), one-step {o:.4} (p {p_one:.3})", raw.len()),
    )
}

// ---------------------------------------------------------------------------------------------
// 6. lossless digital path

fn lossless_digital(desk: &Desk) -> Result<Outcome> {
    let model = &desk.main;
    let mut exact = 0;
    let images = held_out_images(model, 16);
    for (i, img) in images.iter().enumerate() {
        let opts = InferOptions {
            seed: i as u64,
            ..InferOptions::default()
        };
        let r = infer(model, img, &opts)?.report;
        if r.z_d_received.as_ref() == Some(&r.z_d_sent) {
            exact += 1;
        }
    }
    // allocation followed by fusion with quantization disabled
    let hyper = model.hyper();
    let sem = model.semantic();
    let mut worst: f64 = 0.0;
    for img in &images {
        let z = sem.encode_image(img, &model.params)?.z;
        let mut batched = vec![1];
        batched.extend_from_slice(z.shape());
        let z = z.reshape(&batched)?;
        let mut t = Tape::new();
        let b = model.params.bind(&mut t, |_| false);
        let zv = t.constant(z.clone());
        let a = hyper.allocate(&mut t, &b, zv, QuantMode::Identity, &mut seeded(0))?;
        let fused = hyper.fuse(&mut t, &b, a.z_a, a.z_d_tilde)?;
        for (x, y) in t.value(fused).data().iter().zip(z.data()) {
            worst = worst.max((x - y).abs() / (f64::EPSILON * y.abs().max(1.0)));
        }
    }
    outcome(
        exact == images.len() && worst <= 4.0,
        format!(
            "z̃_D bit-identical on {exact}/{} noiseless frames; fuse∘allocate within {worst:.1} ulp",
            images.len()
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// 7. trends

fn trends(desk: &Desk) -> Result<Outcome> {
    let model = &desk.main;
    let images = held_out_images(model, model.config.eval.images);
    let mut settings = SweepSettings::from_model(model)?;
    let snrs = model.config.eval.snr_db.clone();
    let rows = run_snr_sweep(model, &images, &snrs, &settings)?;
    let psnr: Vec<f64> = rows.iter().map(|r| r.psnr_db).collect();
    let monotone = psnr.windows(2).all(|w| w[1] >= w[0] - 0.3);

    let da_rows = run_da_ratio_sweep(
        &desk.by_ratio,
        &images,
        model.config.eval.fixed_snr_db,
        &settings,
    )?;
    let da: Vec<f64> = da_rows.iter().map(|r| r.psnr_db).collect();
    let da_ok = da.windows(2).all(|w| w[1] <= w[0]);

    let mut at0 = Vec::new();
    for mode in [DenoiserMode::Off, DenoiserMode::Diffusion] {
        settings.denoiser = mode;
        at0.push(run_snr_sweep(model, &images, &[0.0], &settings)?[0].psnr_db);
    }
    let denoise_ok = at0[1] >= at0[0];
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|p| format!("{p:.2}"))
            .collect::<Vec<_>>()
            .join("/")
    };
    outcome(
        monotone && da_ok && denoise_ok,
        format!(
            "PSNR over {:?} dB: {} (monotone {monotone}); over DA 0.25/1/3: {} (non-increasing {da_ok}); \
             at 0 dB off {:.2} vs diffusion {:.2} ({denoise_ok})",
            snrs,
            fmt(&psnr),
            fmt(&da),
            at0[0],
            at0[1]
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// 8. security

fn security(desk: &Desk) -> Result<Outcome> {
    let model = &desk.main;
    let images = held_out_images(model, model.config.eval.images);
    let settings = SweepSettings::from_model(model)?;
    let rows = run_security_eval(model, &images, model.config.eval.fixed_snr_db, &settings)?;
    let identical = rows
        .iter()
        .all(|r| r.psnr_legitimate_db.to_bits() == r.psnr_plain_db.to_bits());
    let gap = rows.iter().map(|r| r.gap_db).sum::<f64>() / rows.len() as f64;
    // the other reading of the eavesdropper, for the record
    let mut zeroing = model.clone();
    zeroing.config.link.eavesdropper = EavesdropperMode::Zero;
    let rows_zero =
        run_security_eval(&zeroing, &images, model.config.eval.fixed_snr_db, &settings)?;
    let gap_zero = rows_zero.iter().map(|r| r.gap_db).sum::<f64>() / rows_zero.len() as f64;
    outcome(
        identical && gap >= 6.0,
        format!(
            "keyed receiver bit-identical to plain: {identical}; eavesdropper gap {gap:.2} dB over {} trials \
             at {} dB (digital branch zeroed instead: {gap_zero:.2} dB)",
            rows.len(),
            model.config.eval.fixed_snr_db
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// 9. determinism

fn sweep_csvs(model: &HdaModel) -> Result<(Vec<u8>, Vec<u8>)> {
    let images = held_out_images(model, model.config.eval.images);
    let settings = SweepSettings::from_model(model)?;
    let mut a = Vec::new();
    write_metrics_csv(
        &mut a,
        &run_snr_sweep(model, &images, &model.config.eval.snr_db, &settings)?,
    )?;
    let mut b = Vec::new();
    write_security_csv(&mut b, &run_security_eval(model, &images, 10.0, &settings)?)?;
    Ok((a, b))
}

fn determinism(desk: &Desk) -> Result<Outcome> {
    let same_sweeps = sweep_csvs(&desk.main)? == sweep_csvs(&desk.main)?;
    // a complete small experiment from scratch, twice
    let mut c = desk_config(64, 336);
    c.model.image_size = 16;
    c.model.analog_hidden = 32;
    c.model.denoiser_width = 16;
    c.train.textures = 16;
    (
        c.train.stage1_epochs,
        c.train.stage2_epochs,
        c.train.stage3_epochs,
    ) = (2, 2, 2);
    (c.train.denoiser_epochs, c.train.denoiser_frames) = (2, 16);
    c.eval.images = 4;
    let run = || -> Result<(Vec<u8>, (Vec<u8>, Vec<u8>))> {
        let mut m = HdaModel::new(c.clone())?;
        let images = training_images(&m)?;
        train_all(&mut m, &images)?;
        Ok((encode_checkpoint(&m), sweep_csvs(&m)?))
    };
    let (ck_a, csv_a) = run()?;
    let (ck_b, csv_b) = run()?;
    let fresh = ck_a == ck_b && csv_a == csv_b;
    outcome(
        same_sweeps && fresh,
        format!("desk sweeps rerun bitwise: {same_sweeps}; retrained checkpoint and CSVs bitwise: {fresh}"),
    )
}

// ---------------------------------------------------------------------------------------------
// 10. channel statistics

fn channel_statistics() -> Result<Outcome> {
    let mut rng = seeded(1010);
    let n = 1_000_000;
    let x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, i as f64 * 0.61))
        .collect();
    let mut worst_snr: f64 = 0.0;
    for target in [0.0, 10.0, 20.0] {
        let mut r = sample_channel(ChannelKind::Awgn, &mut rng);
        let y = apply_channel(&x, &mut r, Some(target), &mut rng);
        let noise: Vec<Complex64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let snr = 10.0 * (average_power(&x) / average_power(&noise)).log10();
        worst_snr = worst_snr.max((snr - target).abs());
    }
    let power = (0..n)
        .map(|_| sample_channel(ChannelKind::Rayleigh, &mut rng).h.norm_sqr())
        .sum::<f64>()
        / n as f64;
    let mean = (0..n)
        .map(|_| sample_channel(ChannelKind::Rician { k_factor: 1.0 }, &mut rng).h)
        .sum::<Complex64>()
        / n as f64;
    let target = 0.5f64.sqrt();
    let mean_err = (mean.norm() - target).abs() / target;
    outcome(
        worst_snr <= 0.1 && (power - 1.0).abs() <= 0.005 && mean_err <= 0.01,
        format!(
            "SNR error ≤ {worst_snr:.4} dB; Rayleigh E|h|² = {power:.4}; Rician |E h| = {:.4} ({:.2}% off √½)",
            mean.norm(),
            100.0 * mean_err
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut passed = 0;
    passed += report(1, "entropy coder exactness", entropy_coder) as usize;
    passed += report(2, "LDPC correctness", ldpc) as usize;
    passed += report(3, "gradient suite", gradients) as usize;
    passed += report(4, "schedule identities", schedule_identities) as usize;
    passed += report(10, "channel statistics", channel_statistics) as usize;
    match train_desk() {
        Ok(desk) => {
            passed += report(5, "diffusion denoising gain", || denoising_gain(&desk)) as usize;
            passed += report(6, "lossless digital path", || lossless_digital(&desk)) as usize;
            passed += report(7, "trend reproduction", || trends(&desk)) as usize;
            passed += report(8, "security experiment", || security(&desk)) as usize;
            passed += report(9, "determinism", || determinism(&desk)) as usize;
        }
        Err(e) => {
            for (id, name) in [
                (5, "diffusion denoising gain"),
                (6, "lossless digital path"),
                (7, "trend reproduction"),
                (8, "security experiment"),
                (9, "determinism"),
            ] {
                println!("FAIL {id} {name}: desk training failed: {e}");
            }
        }
    }
    println!(
        "acceptance: {passed}/10 criteria pass [{:.0}s]",
        start.elapsed().as_secs_f64()
    );
}
