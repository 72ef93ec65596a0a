//! Per-channel batch normalization over `[B, C, H, W]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept by the running statistics at each training step.
pub const BN_MOMENTUM: f64 = 0.9;

/// Saved forward state needed by [`batch_norm_backward`].
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: Vec<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

/// Batch statistics observed by a training-mode forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn check<T: Scalar>(input: &Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<[usize; 4]> {
    let dims = input.dims4("batch_norm")?;
    let c = dims[1];
    if scale.shape() != [c] || shift.shape() != [c] {
        return Err(Error::shape(
            "batch_norm",
            format!("{c} channels vs scale {:?} / shift {:?}", scale.shape(), shift.shape()),
        ));
    }
    Ok(dims)
}

fn for_channel(dims: [usize; 4], c: usize, mut f: impl FnMut(usize)) {
    let [b, ch, h, w] = dims;
    let hw = h * w;
    for n in 0..b {
        let base = (n * ch + c) * hw;
        for i in base..base + hw {
            f(i);
        }
    }
}

/// Training mode: normalize by the batch mean and biased variance of each channel.
pub fn batch_norm_train<T: Scalar>(
    input: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>, BatchStats<T>)> {
    let dims = check(input, scale, shift)?;
    let [b, c, h, w] = dims;
    let count = b * h * w;
    if count < 2 {
        return Err(Error::shape("batch_norm", "training mode needs at least two values per channel"));
    }
    let x = input.data();
    let nf = T::lit(count as f64);
    let eps = T::lit(BN_EPSILON);
    let mut out = vec![T::zero(); x.len()];
    let mut normalized = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(c);
    let mut stats = BatchStats { mean: Vec::with_capacity(c), var: Vec::with_capacity(c) };
    for ch in 0..c {
        let mut sum = T::zero();
        for_channel(dims, ch, |i| sum = sum + x[i]);
        let mean = sum / nf;
        let mut sq = T::zero();
        for_channel(dims, ch, |i| {
            let d = x[i] - mean;
            sq = sq + d * d;
        });
        let var = sq / nf;
        let is = T::one() / (var + eps).sqrt();
        let (g, s) = (scale.data()[ch], shift.data()[ch]);
        for_channel(dims, ch, |i| {
            let xh = (x[i] - mean) * is;
            normalized[i] = xh;
            out[i] = g * xh + s;
        });
        inv_std.push(is);
        stats.mean.push(mean);
        stats.var.push(var);
    }
    let y = Tensor::new(input.shape().to_vec(), out)?.ensure_finite("batch_norm")?;
    Ok((y, BatchNormCache { normalized, inv_std, train: true }, stats))
}

/// Inference mode: normalize with frozen running statistics.
pub fn batch_norm_infer<T: Scalar>(
    input: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    running_mean: &[T],
    running_var: &[T],
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let dims = check(input, scale, shift)?;
    let c = dims[1];
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::shape("batch_norm", "running statistics do not match channel count"));
    }
    let x = input.data();
    let eps = T::lit(BN_EPSILON);
    let mut out = vec![T::zero(); x.len()];
    let mut normalized = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let is = T::one() / (running_var[ch] + eps).sqrt();
        let (g, s, m) = (scale.data()[ch], shift.data()[ch], running_mean[ch]);
        for_channel(dims, ch, |i| {
            let xh = (x[i] - m) * is;
            normalized[i] = xh;
            out[i] = g * xh + s;
        });
        inv_std.push(is);
    }
    let y = Tensor::new(input.shape().to_vec(), out)?.ensure_finite("batch_norm")?;
    Ok((y, BatchNormCache { normalized, inv_std, train: false }))
}

pub fn batch_norm_backward<T: Scalar>(
    input_shape: &[usize],
    scale: &Tensor<T>,
    cache: &BatchNormCache<T>,
    dy: &[T],
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let dims: [usize; 4] = input_shape
        .try_into()
        .map_err(|_| Error::shape("batch_norm", "rank-4 input expected"))?;
    let [b, c, h, w] = dims;
    let nf = T::lit((b * h * w) as f64);
    let xh = &cache.normalized;
    let mut dx = vec![T::zero(); dy.len()];
    let mut dscale = Vec::with_capacity(c);
    let mut dshift = Vec::with_capacity(c);
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for_channel(dims, ch, |i| {
            sum_dy = sum_dy + dy[i];
            sum_dy_xh = sum_dy_xh + dy[i] * xh[i];
        });
        let g = scale.data()[ch];
        let is = cache.inv_std[ch];
        if cache.train {
            // dx = g*is/N * (N*dy - sum(dy) - xh*sum(dy*xh))
            let k = g * is / nf;
            for_channel(dims, ch, |i| {
                dx[i] = k * (nf * dy[i] - sum_dy - xh[i] * sum_dy_xh);
            });
        } else {
            let k = g * is;
            for_channel(dims, ch, |i| dx[i] = k * dy[i]);
        }
        dscale.push(sum_dy_xh);
        dshift.push(sum_dy);
    }
    Ok((
        Tensor::new(input_shape.to_vec(), dx)?,
        Tensor::new(vec![c], dscale)?,
        Tensor::new(vec![c], dshift)?,
    ))
}

/// `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running<T: Scalar>(running: &mut [T], batch: &[T], momentum: f64) {
    let m = T::lit(momentum);
    let one_m = T::lit(1.0 - momentum);
    for (r, &v) in running.iter_mut().zip(batch) {
        *r = m * *r + one_m * v;
    }
}
