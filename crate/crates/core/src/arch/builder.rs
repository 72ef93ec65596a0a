use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::model::{BlockInfo, BlockKind, Layer, LayerKind, Model, RunningStats};
use crate::arch::{round_half_up, ArchConfig, FamilyId, STAGES};
use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::ops::conv::output_extent;
use crate::ops::PoolKind;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted-residual expansion ratio.
const EXPANSION: usize = 4;
/// Dropout in front of the inception classifier.
const INCEPTION_HEAD_DROPOUT: f64 = 0.2;

struct Builder<T> {
    layers: Vec<Layer>,
    blocks: Vec<BlockInfo>,
    params: ParamStore<T>,
    running: Vec<RunningStats<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<T> {
    fn new(config: &ArchConfig) -> Self {
        let input = Layer {
            name: "input".into(),
            kind: LayerKind::Input,
            inputs: vec![],
            out_shape: vec![config.input_channels, config.input_size, config.input_size],
        };
        Self {
            layers: vec![input],
            blocks: Vec::new(),
            params: ParamStore::new(),
            running: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.init_seed),
        }
    }

    fn chw(&self, x: usize) -> (usize, usize, usize) {
        match self.layers[x].out_shape[..] {
            [c, h, w] => (c, h, w),
            _ => panic!("layer {} is not a feature map", self.layers[x].name),
        }
    }

    fn channels(&self, x: usize) -> usize {
        self.chw(x).0
    }

    fn push(&mut self, name: String, kind: LayerKind, inputs: Vec<usize>, out_shape: Vec<usize>) -> usize {
        self.layers.push(Layer { name, kind, inputs, out_shape });
        self.layers.len() - 1
    }

    /// Fan-in scaled uniform weights in `[-sqrt(6/fan_in), sqrt(6/fan_in)]`.
    fn weight(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) -> Result<ParamId> {
        let limit = (6.0 / fan_in as f64).sqrt();
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::lit(rng.random_range(-limit..limit)))?;
        self.params.add(format!("{name}.weight"), t)
    }

    fn zeros(&mut self, name: String, n: usize) -> Result<ParamId> {
        self.params.add(name, Tensor::zeros(vec![n])?)
    }

    fn conv(&mut self, name: &str, x: usize, out: usize, kernel: usize, stride: usize) -> Result<usize> {
        let (c, h, w) = self.chw(x);
        let padding = kernel / 2;
        let oh = output_extent(h, kernel, stride, padding)?;
        let ow = output_extent(w, kernel, stride, padding)?;
        let weight = self.weight(name, vec![out, c, kernel, kernel], c * kernel * kernel)?;
        let bias = Some(self.zeros(format!("{name}.bias"), out)?);
        let kind = LayerKind::Conv { weight, bias, kernel, stride, padding };
        Ok(self.push(name.into(), kind, vec![x], vec![out, oh, ow]))
    }

    fn depthwise(&mut self, name: &str, x: usize, kernel: usize, stride: usize) -> Result<usize> {
        let (c, h, w) = self.chw(x);
        let padding = kernel / 2;
        let oh = output_extent(h, kernel, stride, padding)?;
        let ow = output_extent(w, kernel, stride, padding)?;
        let weight = self.weight(name, vec![c, 1, kernel, kernel], kernel * kernel)?;
        let bias = Some(self.zeros(format!("{name}.bias"), c)?);
        let kind = LayerKind::DepthwiseConv { weight, bias, kernel, stride, padding };
        Ok(self.push(name.into(), kind, vec![x], vec![c, oh, ow]))
    }

    fn bn(&mut self, name: &str, x: usize) -> Result<usize> {
        let c = self.channels(x);
        let scale = self.params.add(format!("{name}.scale"), Tensor::full(vec![c], T::one())?)?;
        let shift = Some(self.zeros(format!("{name}.shift"), c)?);
        self.running.push(RunningStats { mean: vec![T::zero(); c], var: vec![T::one(); c] });
        let kind = LayerKind::BatchNorm { scale, shift, state: self.running.len() - 1 };
        let shape = self.layers[x].out_shape.clone();
        Ok(self.push(name.into(), kind, vec![x], shape))
    }

    fn relu(&mut self, name: &str, x: usize) -> usize {
        let shape = self.layers[x].out_shape.clone();
        self.push(name.into(), LayerKind::Relu, vec![x], shape)
    }

    fn pool(&mut self, name: &str, x: usize, kind: PoolKind, window: usize, stride: usize, padding: usize) -> Result<usize> {
        let (c, h, w) = self.chw(x);
        let (oh, ow) = match kind {
            PoolKind::GlobalAvg => (1, 1),
            _ => (output_extent(h, window, stride, padding)?, output_extent(w, window, stride, padding)?),
        };
        let kind = LayerKind::Pool { kind, window, stride, padding };
        Ok(self.push(name.into(), kind, vec![x], vec![c, oh, ow]))
    }

    fn concat(&mut self, name: &str, xs: &[usize]) -> usize {
        let (_, h, w) = self.chw(xs[0]);
        let c = xs.iter().map(|&x| self.channels(x)).sum();
        self.push(name.into(), LayerKind::Concat, xs.to_vec(), vec![c, h, w])
    }

    fn add(&mut self, name: &str, xs: &[usize]) -> usize {
        let shape = self.layers[xs[0]].out_shape.clone();
        debug_assert!(xs.iter().all(|&x| self.layers[x].out_shape == shape));
        self.push(name.into(), LayerKind::Add, xs.to_vec(), shape)
    }

    /// conv → batch norm → relu.
    fn conv_bn_relu(&mut self, name: &str, x: usize, out: usize, kernel: usize, stride: usize) -> Result<usize> {
        let y = self.conv(&format!("{name}.conv"), x, out, kernel, stride)?;
        let y = self.bn(&format!("{name}.bn"), y)?;
        Ok(self.relu(&format!("{name}.relu"), y))
    }

    /// batch norm → relu → conv (pre-activation ordering).
    fn bn_relu_conv(&mut self, name: &str, x: usize, out: usize, kernel: usize, stride: usize) -> Result<usize> {
        let y = self.bn(&format!("{name}.bn"), x)?;
        let y = self.relu(&format!("{name}.relu"), y);
        self.conv(&format!("{name}.conv"), y, out, kernel, stride)
    }

    /// Depthwise 3×3 followed by a pointwise 1×1 projection.
    fn separable(&mut self, name: &str, x: usize, out: usize, stride: usize) -> Result<usize> {
        let y = self.depthwise(&format!("{name}.dw"), x, 3, stride)?;
        self.conv(&format!("{name}.pw"), y, out, 1, 1)
    }

    fn block<F>(&mut self, name: &str, kind: BlockKind, stride: usize, entry: usize, body: F) -> Result<usize>
    where
        F: FnOnce(&mut Self) -> Result<usize>,
    {
        let start = self.layers.len();
        let in_channels = self.channels(entry);
        let out = body(self)?;
        debug_assert_eq!(out, self.layers.len() - 1);
        let out_channels = self.layers[out].out_shape[0];
        self.blocks.push(BlockInfo {
            name: name.into(),
            kind,
            stride,
            in_channels,
            out_channels,
            entry,
            layers: start..self.layers.len(),
        });
        Ok(out)
    }

    fn head(&mut self, x: usize, classes: usize, dropout: f64) -> Result<usize> {
        self.block("head", BlockKind::Head, 1, x, |b| {
            let y = b.pool("head.gap", x, PoolKind::GlobalAvg, 1, 1, 0)?;
            let c = b.channels(y);
            let mut y = b.push("head.flatten".into(), LayerKind::Flatten, vec![y], vec![c]);
            if dropout > 0.0 {
                y = b.push("head.dropout".into(), LayerKind::Dropout { rate: dropout }, vec![y], vec![c]);
            }
            let weight = b.weight("head.dense", vec![c, classes], c)?;
            let bias = b.zeros("head.dense.bias".into(), classes)?;
            let y = b.push("head.dense".into(), LayerKind::Dense { weight, bias }, vec![y], vec![classes]);
            Ok(b.push("head.softmax".into(), LayerKind::Softmax, vec![y], vec![classes]))
        })
    }

    /// Whether a per-channel constant added to layer `i` is cancelled by
    /// batch norm on every path: shifts pass unchanged through concat, add,
    /// local pooling and unpadded convolutions, and batch norm subtracts the
    /// channel mean.
    fn shift_absorbed(&self, i: usize, consumers: &[Vec<usize>]) -> bool {
        !consumers[i].is_empty()
            && consumers[i].iter().all(|&c| match self.layers[c].kind {
                LayerKind::BatchNorm { .. } => true,
                LayerKind::Concat
                | LayerKind::Add
                | LayerKind::Pool { kind: PoolKind::Max | PoolKind::Avg, .. }
                | LayerKind::Conv { padding: 0, .. }
                | LayerKind::DepthwiseConv { padding: 0, .. } => self.shift_absorbed(c, consumers),
                _ => false,
            })
    }

    /// Drops convolution biases and batch-norm shifts that a later batch norm
    /// would cancel, since their gradient is identically zero.
    fn prune_absorbed_biases(&mut self) -> Result<()> {
        let mut consumers = vec![Vec::new(); self.layers.len()];
        for (i, l) in self.layers.iter().enumerate() {
            for &x in &l.inputs {
                consumers[x].push(i);
            }
        }
        let mut dropped = vec![false; self.params.len()];
        for i in 0..self.layers.len() {
            if let LayerKind::Conv { bias: Some(b), .. }
            | LayerKind::DepthwiseConv { bias: Some(b), .. }
            | LayerKind::BatchNorm { shift: Some(b), .. } = self.layers[i].kind
            {
                if self.shift_absorbed(i, &consumers) {
                    dropped[b.index()] = true;
                }
            }
        }
        let mut remap = vec![None; self.params.len()];
        let mut kept = ParamStore::new();
        for (old, p) in self.params.iter().enumerate() {
            if !dropped[old] {
                remap[old] = Some(kept.add(p.name.clone(), p.value.clone())?);
            }
        }
        let id = |p: ParamId| remap[p.index()].expect("kept parameter");
        for l in &mut self.layers {
            match &mut l.kind {
                LayerKind::Conv { weight, bias, .. } | LayerKind::DepthwiseConv { weight, bias, .. } => {
                    *weight = id(*weight);
                    *bias = bias.and_then(|b| remap[b.index()]);
                }
                LayerKind::BatchNorm { scale, shift, .. } => {
                    *scale = id(*scale);
                    *shift = shift.and_then(|b| remap[b.index()]);
                }
                LayerKind::Dense { weight, bias } => {
                    *weight = id(*weight);
                    *bias = id(*bias);
                }
                _ => {}
            }
        }
        self.params = kept;
        Ok(())
    }

    fn finish(mut self, family: FamilyId, config: &ArchConfig) -> Result<Model<T>> {
        self.prune_absorbed_biases()?;
        Ok(Model {
            family,
            config: config.clone(),
            layers: self.layers,
            blocks: self.blocks,
            params: self.params,
            running: self.running,
        })
    }
}

/// Builds a freshly initialised model of `family`.
///
/// Weights are fan-in scaled uniform draws from a generator seeded with
/// `config.init_seed`, so equal configs give bit-identical models.
pub fn build_family<T: Scalar>(family: FamilyId, config: &ArchConfig) -> Result<Model<T>> {
    config.validate()?;
    let mut b = Builder::<T>::new(config);
    let bps = config.blocks_per_stage();
    let x = match family {
        FamilyId::Vgg => vgg(&mut b, config, bps)?,
        FamilyId::DenseNet => densenet(&mut b, config, bps)?,
        FamilyId::Inception => inception(&mut b, config, bps)?,
        FamilyId::ResNetV2 => resnet_v2(&mut b, config, bps)?,
        FamilyId::InceptionResNetV2 => inception_resnet_v2(&mut b, config, bps)?,
        FamilyId::Xception => xception(&mut b, config, bps)?,
        FamilyId::MobileNetV2 => mobilenet_v2(&mut b, config, bps)?,
    };
    let dropout = if family == FamilyId::Inception { INCEPTION_HEAD_DROPOUT } else { 0.0 };
    b.head(x, config.num_classes, dropout)?;
    b.finish(family, config)
}

fn reject_variant(family: FamilyId, config: &ArchConfig) -> Result<()> {
    match config.variant {
        Some(v) => Err(Error::Config(format!("{family} has no depth variant {v}"))),
        None => Ok(()),
    }
}

fn stem<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, activate: bool) -> Result<usize> {
    let c = config.stem_channels();
    b.block("stem", BlockKind::Stem, 1, 0, |b| {
        if activate {
            b.conv_bn_relu("stem", 0, c, 3, 1)
        } else {
            b.conv("stem.conv", 0, c, 3, 1)
        }
    })
}

fn vgg<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    let last_stage_convs = match config.variant.unwrap_or(19) {
        16 => 2,
        19 => 3,
        v => return Err(Error::Config(format!("vgg depth variant must be 16 or 19, got {v}"))),
    };
    let mut x = stem(b, config, true)?;
    for s in 0..STAGES {
        if s > 0 {
            let name = format!("s{s}.pool");
            x = b.block(&name, BlockKind::Downsample, 2, x, |b| b.pool(&name, x, PoolKind::Max, 2, 2, 0))?;
        }
        let c = config.stage_channels(s);
        let convs = if s == STAGES - 1 { last_stage_convs } else { 2 };
        for i in 0..bps {
            let name = format!("s{s}.b{i}");
            x = b.block(&name, BlockKind::Plain, 1, x, |b| {
                let mut y = x;
                for j in 0..convs {
                    y = b.conv_bn_relu(&format!("{name}.c{j}"), y, c, 3, 1)?;
                }
                Ok(y)
            })?;
        }
    }
    Ok(x)
}

fn densenet<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    let base_layers = match config.variant.unwrap_or(201) {
        121 => 3,
        201 => 4,
        v => return Err(Error::Config(format!("densenet depth variant must be 121 or 201, got {v}"))),
    };
    let layers_per_block = base_layers * bps;
    let growth = config.growth_rate();
    let mut x = stem(b, config, true)?;
    for s in 0..STAGES {
        if s > 0 {
            let name = format!("s{s}.transition");
            let out = (b.channels(x) / 2).max(1);
            x = b.block(&name, BlockKind::Transition, 2, x, |b| {
                let y = b.bn_relu_conv(&name, x, out, 1, 1)?;
                b.pool(&format!("{name}.pool"), y, PoolKind::Avg, 2, 2, 0)
            })?;
        }
        let name = format!("s{s}.dense");
        x = b.block(&name, BlockKind::Dense, 1, x, |b| dense_block(b, &name, x, layers_per_block, growth))?;
    }
    let name = "final";
    b.block(name, BlockKind::Plain, 1, x, |b| {
        let y = b.bn(&format!("{name}.bn"), x)?;
        Ok(b.relu(&format!("{name}.relu"), y))
    })
}

/// Each layer sees the channel concatenation of the block entry and every
/// earlier layer output; the block emits the concatenation of all of them.
fn dense_block<T: Scalar>(
    b: &mut Builder<T>,
    name: &str,
    entry: usize,
    layers: usize,
    growth: usize,
) -> Result<usize> {
    let mut features = vec![entry];
    for l in 0..layers {
        let input = if features.len() == 1 {
            entry
        } else {
            b.concat(&format!("{name}.l{l}.cat"), &features)
        };
        let y = b.bn_relu_conv(&format!("{name}.l{l}"), input, growth, 3, 1)?;
        features.push(y);
    }
    Ok(b.concat(&format!("{name}.out"), &features))
}

/// Branches {1×1}, {1×1 → 3×3} and {3×3 max-pool → 1×1}, concatenated.
fn inception_branches<T: Scalar>(b: &mut Builder<T>, name: &str, x: usize, out: usize) -> Result<usize> {
    let quarter = round_half_up(out as f64 / 4.0).max(1);
    let half = out.saturating_sub(2 * quarter).max(1);
    let b1 = b.conv_bn_relu(&format!("{name}.b1x1"), x, quarter, 1, 1)?;
    let b2 = b.conv_bn_relu(&format!("{name}.b3x3.reduce"), x, quarter, 1, 1)?;
    let b2 = b.conv_bn_relu(&format!("{name}.b3x3"), b2, half, 3, 1)?;
    let b3 = b.pool(&format!("{name}.bpool.pool"), x, PoolKind::Max, 3, 1, 1)?;
    let b3 = b.conv_bn_relu(&format!("{name}.bpool"), b3, quarter, 1, 1)?;
    Ok(b.concat(&format!("{name}.cat"), &[b1, b2, b3]))
}

fn inception<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    reject_variant(FamilyId::Inception, config)?;
    let mut x = stem(b, config, true)?;
    for s in 0..STAGES {
        if s > 0 {
            let name = format!("s{s}.pool");
            x = b.block(&name, BlockKind::Downsample, 2, x, |b| b.pool(&name, x, PoolKind::Max, 3, 2, 1))?;
        }
        let c = config.stage_channels(s);
        for i in 0..bps {
            let name = format!("s{s}.b{i}");
            x = b.block(&name, BlockKind::Inception, 1, x, |b| inception_branches(b, &name, x, c))?;
        }
    }
    Ok(x)
}

fn resnet_v2<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    reject_variant(FamilyId::ResNetV2, config)?;
    let mut x = stem(b, config, false)?;
    for s in 0..STAGES {
        let c = config.stage_channels(s);
        for i in 0..bps {
            let stride = if s > 0 && i == 0 { 2 } else { 1 };
            let name = format!("s{s}.b{i}");
            x = b.block(&name, BlockKind::Residual, stride, x, |b| {
                let pre = b.bn(&format!("{name}.pre.bn"), x)?;
                let pre = b.relu(&format!("{name}.pre.relu"), pre);
                let r = b.conv(&format!("{name}.c0.conv"), pre, c, 3, stride)?;
                let r = b.bn_relu_conv(&format!("{name}.c1"), r, c, 3, 1)?;
                let skip = if stride != 1 || b.channels(x) != c {
                    b.conv(&format!("{name}.proj"), pre, c, 1, stride)?
                } else {
                    x
                };
                Ok(b.add(&format!("{name}.add"), &[skip, r]))
            })?;
        }
    }
    let name = "final";
    b.block(name, BlockKind::Plain, 1, x, |b| {
        let y = b.bn(&format!("{name}.bn"), x)?;
        Ok(b.relu(&format!("{name}.relu"), y))
    })
}

fn inception_resnet_v2<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    reject_variant(FamilyId::InceptionResNetV2, config)?;
    let mut x = stem(b, config, true)?;
    for s in 0..STAGES {
        let c = config.stage_channels(s);
        if s > 0 {
            let name = format!("s{s}.reduce");
            x = b.block(&name, BlockKind::Downsample, 2, x, |b| b.conv_bn_relu(&name, x, c, 3, 2))?;
        }
        for i in 0..bps {
            let name = format!("s{s}.b{i}");
            x = b.block(&name, BlockKind::InceptionResidual, 1, x, |b| {
                let cat = inception_branches(b, &name, x, c)?;
                // linear 1×1 projection back to the trunk width
                let proj = b.conv(&format!("{name}.proj"), cat, c, 1, 1)?;
                let sum = b.add(&format!("{name}.add"), &[x, proj]);
                Ok(b.relu(&format!("{name}.relu"), sum))
            })?;
        }
    }
    Ok(x)
}

fn xception<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    reject_variant(FamilyId::Xception, config)?;
    let mut x = stem(b, config, true)?;
    for s in 0..STAGES {
        let c = config.stage_channels(s);
        for i in 0..bps {
            let stride = if s > 0 && i == 0 { 2 } else { 1 };
            let name = format!("s{s}.b{i}");
            x = b.block(&name, BlockKind::Separable, stride, x, |b| {
                let r = b.relu(&format!("{name}.relu0"), x);
                let r = b.separable(&format!("{name}.sep0"), r, c, 1)?;
                let r = b.bn(&format!("{name}.sep0.bn"), r)?;
                let r = b.relu(&format!("{name}.relu1"), r);
                let r = b.separable(&format!("{name}.sep1"), r, c, 1)?;
                let mut r = b.bn(&format!("{name}.sep1.bn"), r)?;
                if stride != 1 {
                    r = b.pool(&format!("{name}.pool"), r, PoolKind::Max, 3, stride, 1)?;
                }
                let skip = if stride != 1 || b.channels(x) != c {
                    let p = b.conv(&format!("{name}.proj"), x, c, 1, stride)?;
                    b.bn(&format!("{name}.proj.bn"), p)?
                } else {
                    x
                };
                Ok(b.add(&format!("{name}.add"), &[skip, r]))
            })?;
        }
    }
    let name = "final";
    b.block(name, BlockKind::Plain, 1, x, |b| Ok(b.relu(&format!("{name}.relu"), x)))
}

/// Expand (1×1, ratio t) → depthwise 3×3 → linear 1×1 projection, with an
/// additive skip only when the stride is 1 and the channel count is unchanged.
fn inverted_residual<T: Scalar>(
    b: &mut Builder<T>,
    name: &str,
    x: usize,
    out: usize,
    stride: usize,
) -> Result<usize> {
    let cin = b.channels(x);
    let e = b.conv_bn_relu(&format!("{name}.expand"), x, cin * EXPANSION, 1, 1)?;
    let d = b.depthwise(&format!("{name}.dw"), e, 3, stride)?;
    let d = b.bn(&format!("{name}.dw.bn"), d)?;
    let d = b.relu(&format!("{name}.dw.relu"), d);
    let p = b.conv(&format!("{name}.project"), d, out, 1, 1)?;
    let p = b.bn(&format!("{name}.project.bn"), p)?;
    if stride == 1 && cin == out {
        Ok(b.add(&format!("{name}.add"), &[x, p]))
    } else {
        Ok(p)
    }
}

fn mobilenet_v2<T: Scalar>(b: &mut Builder<T>, config: &ArchConfig, bps: usize) -> Result<usize> {
    reject_variant(FamilyId::MobileNetV2, config)?;
    let mut x = stem(b, config, true)?;
    for s in 0..STAGES {
        let c = config.stage_channels(s);
        for i in 0..bps {
            let stride = if s > 0 && i == 0 { 2 } else { 1 };
            let name = format!("s{s}.b{i}");
            x = b.block(&name, BlockKind::InvertedResidual, stride, x, |b| inverted_residual(b, &name, x, c, stride))?;
        }
    }
    Ok(x)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn toy_builder(channels: usize, size: usize) -> (Builder<f64>, usize) {
        let config = ArchConfig { input_channels: channels, input_size: size.max(32), ..Default::default() };
        let mut b = Builder::<f64>::new(&config);
        b.layers[0].out_shape = vec![channels, size, size];
        (b, 0)
    }

    #[test]
    fn dense_block_channel_arithmetic() {
        let (mut b, x) = toy_builder(8, 8);
        let out = dense_block(&mut b, "d", x, 3, 4).unwrap();
        assert_eq!(b.channels(out), 8 + 3 * 4);
    }

    #[test]
    fn inverted_residual_skip_rule() {
        let (mut b, x) = toy_builder(8, 8);
        let y = inverted_residual(&mut b, "keep", x, 8, 1).unwrap();
        assert_eq!(b.layers[y].kind, LayerKind::Add);
        let z = inverted_residual(&mut b, "down", y, 8, 2).unwrap();
        assert_ne!(b.layers[z].kind, LayerKind::Add);
        let w = inverted_residual(&mut b, "widen", z, 16, 1).unwrap();
        assert_ne!(b.layers[w].kind, LayerKind::Add);
    }

    #[test]
    fn single_conv_parameter_count() {
        let (mut b, x) = toy_builder(3, 8);
        b.conv("c", x, 8, 3, 1).unwrap();
        assert_eq!(b.params.element_count(), 3 * 3 * 3 * 8 + 8);
    }

    #[test]
    fn unsupported_variant_rejected() {
        let cfg = ArchConfig { variant: Some(50), ..Default::default() };
        assert!(build_family::<f32>(FamilyId::Vgg, &cfg).is_err());
        assert!(build_family::<f32>(FamilyId::Xception, &cfg).is_err());
        let cfg = ArchConfig { variant: Some(121), ..Default::default() };
        assert!(build_family::<f32>(FamilyId::DenseNet, &cfg).is_ok());
    }
}
