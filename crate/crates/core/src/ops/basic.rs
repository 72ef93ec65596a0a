//! Activation, softmax, loss, dropout and merge kernels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities before taking `-ln p`.
pub const CE_EPSILON: f64 = 1e-12;

/// Elementwise `max(0, x)`.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, dy: &[T]) -> Result<Tensor<T>> {
    let data = input
        .data()
        .iter()
        .zip(dy)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Row-wise softmax of `[B, K]` logits with max subtraction.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = input.dims2("softmax")?;
    if k < 2 {
        return Err(Error::shape("softmax", "needs at least two classes"));
    }
    if !input.is_finite() {
        return Err(Error::NonFinite { op: "softmax" });
    }
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::new(input.shape().to_vec(), out)?.ensure_finite("softmax")
}

pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, dy: &[T]) -> Result<Tensor<T>> {
    let [_, k] = probs.dims2("softmax")?;
    let mut dx = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks(k).zip(dy.chunks(k)) {
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        dx.extend(p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)));
    }
    Tensor::new(probs.shape().to_vec(), dx)
}

/// Index of the single 1 in each one-hot target row.
pub fn target_classes<T: Scalar>(targets: &Tensor<T>) -> Result<Vec<usize>> {
    let [_, k] = targets.dims2("cross_entropy")?;
    targets
        .data()
        .chunks(k)
        .enumerate()
        .map(|(r, row)| {
            let ones = row.iter().filter(|&&v| v == T::one()).count();
            let zeros = row.iter().filter(|&&v| v == T::zero()).count();
            if ones != 1 || zeros != k - 1 {
                return Err(Error::InvalidArgument(format!("target row {r} is not one-hot")));
            }
            Ok(row.iter().position(|&v| v == T::one()).unwrap())
        })
        .collect()
}

/// Mean over the batch of `-ln(max(p_true, eps))`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{:?} vs targets {:?}", probs.shape(), targets.shape()),
        ));
    }
    let [b, k] = probs.dims2("cross_entropy")?;
    let classes = target_classes(targets)?;
    let eps = T::lit(CE_EPSILON);
    let total = classes
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (r, &c)| acc - probs.data()[r * k + c].max(eps).ln());
    let loss = total / T::lit(b as f64);
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite { op: "cross_entropy" })
    }
}

pub fn cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, classes: &[usize], dloss: T) -> Result<Tensor<T>> {
    let [b, k] = probs.dims2("cross_entropy")?;
    let eps = T::lit(CE_EPSILON);
    let scale = dloss / T::lit(b as f64);
    let mut dx = vec![T::zero(); b * k];
    for (r, &c) in classes.iter().enumerate() {
        let p = probs.data()[r * k + c];
        // the clamp is flat below eps
        if p > eps {
            dx[r * k + c] = -scale / p;
        }
    }
    Tensor::new(vec![b, k], dx)
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<T>> {
    check_rate(rate)?;
    let keep = T::lit(1.0 / (1.0 - rate));
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect())
}

pub fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")))
    }
}

/// Concatenates `[B, Ci, H, W]` tensors along the channel axis in argument order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?
        .dims4("concat")?;
    let [b, _, h, w] = first;
    let mut channels = Vec::with_capacity(inputs.len());
    for t in inputs {
        let [tb, tc, th, tw] = t.dims4("concat")?;
        if (tb, th, tw) != (b, h, w) {
            return Err(Error::shape(
                "concat",
                format!("{:?} does not match batch/spatial extents of {first:?}", t.shape()),
            ));
        }
        channels.push(tc);
    }
    let total: usize = channels.iter().sum();
    let hw = h * w;
    let mut out = Vec::with_capacity(b * total * hw);
    for n in 0..b {
        for (t, &c) in inputs.iter().zip(&channels) {
            out.extend_from_slice(&t.data()[n * c * hw..(n + 1) * c * hw]);
        }
    }
    Tensor::new(vec![b, total, h, w], out)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn split_channels<T: Scalar>(dy: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let [b, total, h, w] = dy.dims4("concat")?;
    let hw = h * w;
    let mut parts: Vec<Vec<T>> = channels.iter().map(|&c| Vec::with_capacity(b * c * hw)).collect();
    for n in 0..b {
        let mut offset = n * total * hw;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&dy.data()[offset..offset + c * hw]);
            offset += c * hw;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(p, &c)| Tensor::new(vec![b, c, h, w], p))
        .collect()
}

/// Elementwise sum of two or more identically shaped tensors.
pub fn add_all<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if inputs.len() < 2 {
        return Err(Error::shape("add", "needs at least two inputs"));
    }
    let mut acc = inputs[0].clone();
    for t in &inputs[1..] {
        if t.shape() != acc.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", acc.shape(), t.shape())));
        }
        acc.add_assign(t)?;
    }
    acc.ensure_finite("add")
}
