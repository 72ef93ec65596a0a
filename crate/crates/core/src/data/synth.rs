//! Synthetic chest-film stand-in: smooth fields for `normal`, the same kind of
//! field with bright peripheral patches on both sides for `covid19`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::image::{encode_pnm, Raster};
use crate::data::manifest::{write_manifest, Label, ManifestEntry};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.csv";

const NOISE_SD: f64 = 6.0;

fn field<R: Rng>(rng: &mut R, size: usize) -> Vec<f64> {
    let base = rng.random_range(90.0..130.0);
    let gx = rng.random_range(-30.0..30.0);
    let gy = rng.random_range(-30.0..30.0);
    let amp = rng.random_range(5.0..15.0);
    let (fx, fy) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
    let (px, py) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let tau = std::f64::consts::TAU;
    let noise = Normal::new(0.0, NOISE_SD).expect("valid sd");
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let v = (y as f64 + 0.5) / size as f64;
        for x in 0..size {
            let u = (x as f64 + 0.5) / size as f64;
            let low = amp * (tau * (fx * u + px)).sin() * (tau * (fy * v + py)).cos();
            out.push(base + gx * (u - 0.5) + gy * (v - 0.5) + low + noise.sample(rng));
        }
    }
    out
}

/// Adds 4 to 7 Gaussian patches, alternating between the left and right periphery.
fn add_patches<R: Rng>(rng: &mut R, img: &mut [f64], size: usize) {
    let count = rng.random_range(4..=7);
    let s = size as f64;
    for i in 0..count {
        let cu = if i % 2 == 0 { rng.random_range(0.08..0.30) } else { rng.random_range(0.70..0.92) };
        let cv = rng.random_range(0.15..0.85);
        let amp = rng.random_range(45.0..70.0);
        let sigma = rng.random_range(0.04..0.07) * s;
        let (cx, cy) = (cu * s, cv * s);
        for y in 0..size {
            for x in 0..size {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                img[y * size + x] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
}

fn quantize(img: &[f64], target_mean: f64) -> Vec<u8> {
    let shift = target_mean - img.iter().sum::<f64>() / img.len() as f64;
    img.iter().map(|&v| (v + shift).round().clamp(0.0, 255.0) as u8).collect()
}

/// Writes `n_per_class` PGM images per class plus `manifest.csv` into `out_dir`
/// and returns the manifest path. Image `i` of both classes is shifted to the
/// same mean intensity.
pub fn gen_synthetic(n_per_class: usize, image_size: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
    }
    if image_size < 8 {
        return Err(Error::InvalidArgument(format!("image_size {image_size} is too small (minimum 8)")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let target = rng.random_range(100.0..120.0);
        for label in [Label::Normal, Label::Covid19] {
            let mut img = field(&mut rng, image_size);
            if label == Label::Covid19 {
                add_patches(&mut rng, &mut img, image_size);
            }
            let raster = Raster::new(image_size, image_size, 1, quantize(&img, target))?;
            let name = format!("{label}_{i:03}.pgm");
            let path = out_dir.join(&name);
            fs::write(&path, encode_pnm(&raster)).map_err(|e| Error::io(&path, e))?;
            entries.push(ManifestEntry { image_path: name, label });
        }
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
