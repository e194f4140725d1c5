use std::path::Path;

use image::imageops::FilterType;
use rand::Rng;

use crate::error::{HdaError, Result};
use crate::nn::Tensor;
use crate::rng::{derive_seed, seeded};
use crate::semantic::ImageSample;

/// Loads every readable PNG/PPM image in `dir` (sorted by file name), center-cropped to a
/// square and resized to `size × size`.
pub fn load_dataset(dir: &Path, size: usize) -> Result<Vec<ImageSample>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm"))
        })
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        match load_image(&p, size) {
            Ok(img) => out.push(img),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if out.is_empty() {
        return Err(HdaError::Config(format!(
            "no readable images in {}",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn load_image(path: &Path, size: usize) -> Result<ImageSample> {
    let img = image::open(path).map_err(|e| HdaError::Config(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let side = w.min(h);
    let cropped =
        image::imageops::crop_imm(&rgb, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let resized = if side as usize == size {
        cropped
    } else {
        image::imageops::resize(&cropped, size as u32, size as u32, FilterType::Triangle)
    };
    let mut data = vec![0.0; 3 * size * size];
    for (x, y, px) in resized.enumerate_pixels() {
        for c in 0..3 {
            data[(c * size + y as usize) * size + x as usize] = px[c] as f64 / 255.0;
        }
    }
    ImageSample::new(
        Tensor::new(&[3, size, size], data)?,
        path.display().to_string(),
    )
}

/// Writes an image as 8-bit PNG.
pub fn save_png(image: &ImageSample, path: &Path) -> Result<()> {
    let (h, w) = (image.height(), image.width());
    let d = image.pixels.data();
    let buf = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |c: usize| (d[(c * h + y as usize) * w + x as usize] * 255.0).round() as u8;
        image::Rgb([at(0), at(1), at(2)])
    });
    buf.save(path)
        .map_err(|e| HdaError::Io(std::io::Error::other(e)))
}

/// Procedural texture `index` of the set seeded by `seed`: a few oriented sinusoids and soft
/// blobs over a colour gradient, so images have both smooth regions and edges.
pub fn generate_texture(seed: u64, index: usize, size: usize) -> ImageSample {
    let mut rng = seeded(derive_seed(seed, &[0x7e47, index as u64]));
    let s = size as f64;
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    let grad: [[f64; 2]; 3] =
        std::array::from_fn(|_| [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]);
    let waves: Vec<([f64; 3], f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let freq = rng.random_range(1.0..6.0) * 2.0 * std::f64::consts::PI / s;
            let amp: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.2..0.2));
            (
                amp,
                theta.cos() * freq,
                theta.sin() * freq,
                rng.random_range(0.0..6.3),
            )
        })
        .collect();
    let blobs: Vec<([f64; 3], f64, f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| {
            let col: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.4..0.4));
            (
                col,
                rng.random_range(0.0..s),
                rng.random_range(0.0..s),
                rng.random_range(0.08..0.3) * s,
            )
        })
        .collect();
    let mut data = vec![0.0; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / s - 0.5, y as f64 / s - 0.5);
            for c in 0..3 {
                let mut val = base[c] + grad[c][0] * u + grad[c][1] * v;
                for (amp, kx, ky, ph) in &waves {
                    val += amp[c] * (kx * x as f64 + ky * y as f64 + ph).sin();
                }
                for (col, cx, cy, r) in &blobs {
                    let d2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (r * r);
                    // steep logistic edge at the blob radius
                    val += col[c] / (1.0 + (8.0 * (d2 - 1.0)).exp());
                }
                data[(c * size + y) * size + x] = val.clamp(0.0, 1.0);
            }
        }
    }
    ImageSample::new(
        Tensor::new(&[3, size, size], data).expect("shape is consistent"),
        format!("texture-{index}"),
    )
    .expect("generator output lies in range")
}

/// `count` textures starting at `first`.
pub fn generate_textures(seed: u64, first: usize, count: usize, size: usize) -> Vec<ImageSample> {
    (first..first + count)
        .map(|i| generate_texture(seed, i, size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_valid_and_seeded() {
        let a = generate_textures(3, 0, 100, 32);
        for t in &a {
            assert!(t.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(a[5], generate_texture(3, 5, 32));
        assert_ne!(a[5].pixels, a[6].pixels);
    }

    #[test]
    fn directory_loading() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path(), 16),
            Err(HdaError::Config(_))
        ));
        save_png(&generate_texture(1, 0, 24), &dir.path().join("b.png")).unwrap();
        save_png(&generate_texture(1, 1, 16), &dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("c.png"), b"not an image").unwrap();
        let first = load_dataset(dir.path(), 16).unwrap();
        assert_eq!(first.len(), 2);
        assert!(first[0].source.ends_with("a.png"));
        assert_eq!(first, load_dataset(dir.path(), 16).unwrap());
        let direct = generate_texture(1, 1, 16);
        let err = first[0]
            .pixels
            .data()
            .iter()
            .zip(direct.pixels.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 0.5 / 255.0 + 1e-12);
    }
}
