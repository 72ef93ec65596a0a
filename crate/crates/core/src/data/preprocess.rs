use serde::{Deserialize, Serialize};

use crate::data::image::Raster;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { target_size: 64 }
    }
}

/// Source coordinate and blend weight for each destination index (half-pixel centres).
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Smallest accepted `target_size`.
pub const MIN_TARGET_SIZE: usize = 32;

/// Bilinear resize with half-pixel centres. Returns `[channels, out_h, out_w]`
/// planes in raw sample units.
pub fn resize_bilinear(raster: &Raster, out_h: usize, out_w: usize) -> Result<Vec<f64>> {
    if raster.height == 0 || raster.width == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("cannot resize a zero-extent raster".into()));
    }
    let ys = taps(raster.height, out_h);
    let xs = taps(raster.width, out_w);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let mut out = Vec::with_capacity(raster.channels * out_h * out_w);
    for c in 0..raster.channels {
        let at = |y: usize, x: usize| raster.sample(y, x, c) as f64;
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = lerp(at(y0, x0), at(y0, x1), fx);
                let bottom = lerp(at(y1, x0), at(y1, x1), fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    Ok(out)
}

/// Resize to `S×S`, scale to `[0, 1]` and lay out as `[3, S, S]`.
/// Grayscale rasters are replicated across the three channels.
pub fn preprocess(raster: &Raster, config: &PreprocessConfig) -> Result<Tensor<f32>> {
    let s = config.target_size;
    if s < MIN_TARGET_SIZE {
        return Err(Error::Config(format!("target_size must be >= {MIN_TARGET_SIZE}, got {s}")));
    }
    let planes = resize_bilinear(raster, s, s)?;
    let n = s * s;
    let out = (0..3 * n)
        .map(|i| {
            let c = if raster.channels == 1 { 0 } else { i / n };
            (planes[c * n + i % n] / 255.0) as f32
        })
        .collect();
    Tensor::new(vec![3, s, s], out)
}
