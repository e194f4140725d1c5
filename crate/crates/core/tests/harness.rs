//! Metrics against a direct re-derivation, and sweep edge cases.

use hda_core::harness::{
    ms_ssim, psnr, run_da_ratio_sweep, SweepSettings, MS_SSIM_WEIGHTS, SSIM_SIGMA, SSIM_WINDOW,
};
use hda_core::nn::Tensor;
use hda_core::pipeline::{Config, HdaModel};
use hda_core::rng::seeded;
use hda_core::semantic::LUMA;
use hda_core::HdaError;
use proptest::prelude::*;
use rand::Rng;

fn oracle_psnr(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.len() {
        sum += (a[i] - b[i]).powi(2);
    }
    let mse = sum / a.len() as f64;
    if mse == 0.0 {
        100.0
    } else {
        (-10.0 * mse.log10()).min(100.0)
    }
}

/// MS-SSIM written out with a full 2-D window and explicit loops.
fn oracle_ms_ssim(a: &[f64], b: &[f64], side: usize) -> f64 {
    let n = side * side;
    let gray = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| LUMA[0] * x[i] + LUMA[1] * x[n + i] + LUMA[2] * x[2 * n + i])
            .collect()
    };
    let (mut pa, mut pb, mut s) = (gray(a), gray(b), side);
    let k = SSIM_WINDOW;
    let mut win = vec![vec![0.0; k]; k];
    let mut total = 0.0;
    for (y, row) in win.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let dy = y as f64 - 5.0;
            let dx = x as f64 - 5.0;
            *v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            total += *v;
        }
    }
    let mut scales = 0;
    while scales < 5 && s >> scales >= k {
        scales += 1;
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut score = 1.0;
    for scale in 0..scales {
        let o = s - k + 1;
        let (mut ssim, mut cs) = (0.0, 0.0);
        for y in 0..o {
            for x in 0..o {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let w = win[i][j] / total;
                        let p = pa[(y + i) * s + x + j];
                        let q = pb[(y + i) * s + x + j];
                        ma += w * p;
                        mb += w * q;
                        aa += w * p * p;
                        bb += w * q * q;
                        ab += w * p * q;
                    }
                }
                let c = (2.0 * (ab - ma * mb) + c2) / (aa - ma * ma + bb - mb * mb + c2);
                cs += c;
                ssim += c * (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            }
        }
        let term = if scale + 1 == scales { ssim } else { cs } / (o * o) as f64;
        score *= term.max(0.0).powf(MS_SSIM_WEIGHTS[scale] / wsum);
        let h = s / 2;
        let pool = |p: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; h * h];
            for y in 0..h {
                for x in 0..h {
                    out[y * h + x] = (p[2 * y * s + 2 * x]
                        + p[2 * y * s + 2 * x + 1]
                        + p[(2 * y + 1) * s + 2 * x]
                        + p[(2 * y + 1) * s + 2 * x + 1])
                        / 4.0;
                }
            }
            out
        };
        pa = pool(&pa);
        pb = pool(&pb);
        s = h;
    }
    score.clamp(0.0, 1.0)
}

fn image(side: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(&[3, side, side], data).unwrap()
}

#[test]
fn metrics_match_the_direct_oracle() {
    let mut rng = seeded(42);
    for trial in 0..100 {
        let side = rng.random_range(11..48);
        let a: Vec<f64> = (0..3 * side * side)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let noise = rng.random_range(0.0..0.5);
        let b: Vec<f64> = a
            .iter()
            .map(|v| (v + noise * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0))
            .collect();
        let (ta, tb) = (image(side, a.clone()), image(side, b.clone()));
        assert!(
            (psnr(&ta, &tb).unwrap() - oracle_psnr(&a, &b)).abs() < 1e-9,
            "trial {trial}"
        );
        let got = ms_ssim(&ta, &tb).unwrap();
        let want = oracle_ms_ssim(&a, &b, side);
        assert!(
            (got - want).abs() < 1e-9,
            "trial {trial}: side {side}, {got} vs {want}"
        );
    }
}

#[test]
fn negative_image_scores_low() {
    let mut rng = seeded(7);
    let side = 32;
    let a: Vec<f64> = (0..3 * side * side)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let neg: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
    let s = ms_ssim(&image(side, a), &image(side, neg)).unwrap();
    assert!(s < 0.2, "{s}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ms_ssim_is_symmetric_and_bounded(seed in any::<u64>(), side in 11usize..40) {
        let mut rng = seeded(seed);
        let a: Vec<f64> = (0..3 * side * side).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..3 * side * side).map(|_| rng.random_range(0.0..1.0)).collect();
        let (ta, tb) = (image(side, a), image(side, b));
        let ab = ms_ssim(&ta, &tb).unwrap();
        prop_assert!((ab - ms_ssim(&tb, &ta).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ms_ssim(&ta, &ta).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(psnr(&ta, &tb).unwrap(), psnr(&tb, &ta).unwrap());
    }
}

fn small_config(analog: usize, digital: usize) -> Config {
    let mut c = Config::default();
    c.model.image_size = 16;
    c.model.analog_symbols = analog;
    c.model.digital_symbols = digital;
    c
}

#[test]
fn da_sweep_rejects_mixed_budgets() {
    let a = HdaModel::new(small_config(336, 672)).unwrap();
    let b = HdaModel::new(small_config(64, 672)).unwrap();
    let settings = SweepSettings::from_model(&a).unwrap();
    let err = run_da_ratio_sweep(&[a, b], &[], 10.0, &settings).unwrap_err();
    assert!(matches!(err, HdaError::Config(_)), "{err}");
}
