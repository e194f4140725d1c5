//! Quick checks of the building blocks that need no trained model.

use std::io::Write;

use hda_core::channel::{rician_mean, sample_channel, ChannelKind};
use hda_core::diffusion::build_schedule;
use hda_core::entropy::{range_decode, range_encode, FrequencyTable};
use hda_core::harness::{decrypt_bits, encrypt_bits, psnr, KeystreamCipher};
use hda_core::nn::Tensor;
use hda_core::phy::{CodeRate, LdpcCode};
use hda_core::rng::seeded;
use hda_core::Result;
use rand::Rng;

type Check = fn(u64) -> std::result::Result<(), String>;

const CHECKS: [(&str, Check); 6] = [
    ("range coder round trip", range_coder),
    ("ldpc noiseless round trip", ldpc),
    ("variance schedule identities", schedule),
    ("channel second moments", channel),
    ("keystream involution", cipher),
    ("psnr cap", metrics),
];

/// Runs every check, prints one PASS/FAIL line each and returns the number of failures.
pub fn run(seed: u64, out: &mut dyn Write) -> Result<usize> {
    let mut failures = 0;
    for (name, check) in CHECKS {
        match check(seed) {
            Ok(()) => writeln!(out, "PASS {name}")?,
            Err(why) => {
                failures += 1;
                writeln!(out, "FAIL {name}: {why}")?;
            }
        }
    }
    out.flush()?;
    Ok(failures)
}

fn range_coder(seed: u64) -> std::result::Result<(), String> {
    let mut rng = seeded(seed);
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let table = FrequencyTable::from_probabilities(-(n as i32) / 2, &probs)
            .map_err(|e| e.to_string())?;
        let len = rng.random_range(0..300);
        let symbols: Vec<i32> = (0..len)
            .map(|_| table.min_symbol() + rng.random_range(0..n as i32))
            .collect();
        let tables = [table];
        let stream =
            range_encode(std::slice::from_ref(&symbols), &tables).map_err(|e| e.to_string())?;
        let back = range_decode(&stream, &tables).map_err(|e| e.to_string())?;
        if back[0] != symbols {
            return Err(format!("sequence of {len} symbols decoded differently"));
        }
    }
    Ok(())
}

fn ldpc(seed: u64) -> std::result::Result<(), String> {
    let mut rng = seeded(seed);
    for rate in [CodeRate::Half, CodeRate::ThreeQuarters] {
        let code = LdpcCode::get(rate);
        let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
        let word = code.encode(&info).map_err(|e| e.to_string())?;
        if !code.syndrome_ok(&word) {
            return Err(format!("rate {} codeword fails its checks", rate.value()));
        }
        let llrs: Vec<f64> = word
            .iter()
            .map(|&b| if b == 0 { 8.0 } else { -8.0 })
            .collect();
        let out = code.decode(&llrs, 20).map_err(|e| e.to_string())?;
        if out.bits[..code.k()] != info[..] {
            return Err(format!("rate {} block decoded with errors", rate.value()));
        }
    }
    Ok(())
}

fn schedule(_: u64) -> std::result::Result<(), String> {
    let s = build_schedule(50).map_err(|e| e.to_string())?;
    if (s.gamma(1) - 0.01).abs() > 1e-15 || (s.gamma(50) - 0.5).abs() > 1e-15 {
        return Err("γ(1) or γ(T) off".into());
    }
    match (0..=50).find(|&t| (s.signal(t).powi(2) + s.noise(t).powi(2) - 1.0).abs() > 1e-12) {
        Some(t) => Err(format!("signal/noise identity broken at step {t}")),
        None => Ok(()),
    }
}

fn channel(seed: u64) -> std::result::Result<(), String> {
    let mut rng = seeded(seed);
    let n = 100_000;
    let power: f64 = (0..n)
        .map(|_| sample_channel(ChannelKind::Rayleigh, &mut rng).h.norm_sqr())
        .sum::<f64>()
        / n as f64;
    if (power - 1.0).abs() > 0.02 {
        return Err(format!("Rayleigh E|h|² = {power:.4}"));
    }
    let kind = ChannelKind::Rician { k_factor: 1.0 };
    let mean: f64 = (0..n)
        .map(|_| sample_channel(kind, &mut rng).h.re)
        .sum::<f64>()
        / n as f64;
    if (mean - rician_mean(1.0)).abs() > 0.02 {
        return Err(format!("Rician mean {mean:.4}"));
    }
    Ok(())
}

fn cipher(seed: u64) -> std::result::Result<(), String> {
    let mut rng = seeded(seed);
    let mut key = [0u8; 32];
    rng.fill(&mut key);
    let c = KeystreamCipher::new(key, seed);
    let payload: Vec<u8> = (0..512).map(|_| rng.random()).collect();
    let stream = hda_core::entropy::Bitstream {
        symbol_counts: vec![3, 4],
        encrypted: false,
        payload,
    };
    let enc = encrypt_bits(&stream, &c);
    if !enc.encrypted || enc.payload == stream.payload {
        return Err("encryption left the payload or flag unchanged".into());
    }
    if decrypt_bits(&enc, &c) != stream {
        return Err("decryption with the key did not restore the stream".into());
    }
    Ok(())
}

fn metrics(_: u64) -> std::result::Result<(), String> {
    let a = Tensor::full(&[3, 16, 16], 0.25);
    match psnr(&a, &a) {
        Ok(v) if v == 100.0 => Ok(()),
        Ok(v) => Err(format!("identical images give {v} dB")),
        Err(e) => Err(e.to_string()),
    }
}
