use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{ArchConfig, FamilyId};
use crate::autodiff::{Mode, NodeId, ParamId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::ops::norm::{self, BatchStats};
use crate::ops::PoolKind;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Input,
    Conv {
        weight: ParamId,
        /// Absent when every consumer normalizes the channel mean away.
        bias: Option<ParamId>,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    DepthwiseConv {
        weight: ParamId,
        bias: Option<ParamId>,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        scale: ParamId,
        /// Absent when a later batch norm would cancel it.
        shift: Option<ParamId>,
        state: usize,
    },
    Relu,
    Pool {
        kind: PoolKind,
        window: usize,
        stride: usize,
        padding: usize,
    },
    Concat,
    Add,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        weight: ParamId,
        bias: ParamId,
    },
    Softmax,
}

impl LayerKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv { .. } => "conv2d",
            LayerKind::DepthwiseConv { .. } => "depthwise_conv2d",
            LayerKind::BatchNorm { .. } => "batch_norm",
            LayerKind::Relu => "relu",
            LayerKind::Pool { kind: PoolKind::Max, .. } => "max_pool",
            LayerKind::Pool { kind: PoolKind::Avg, .. } => "avg_pool",
            LayerKind::Pool { kind: PoolKind::GlobalAvg, .. } => "global_avg_pool",
            LayerKind::Concat => "concat",
            LayerKind::Add => "add",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        match *self {
            LayerKind::Conv { weight, bias, .. } | LayerKind::DepthwiseConv { weight, bias, .. } => {
                std::iter::once(weight).chain(bias).collect()
            }
            LayerKind::Dense { weight, bias } => vec![weight, bias],
            LayerKind::BatchNorm { scale, shift, .. } => std::iter::once(scale).chain(shift).collect(),
            _ => vec![],
        }
    }
}

/// One node of the layer graph. `inputs` index earlier layers; layer 0 is the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
    /// Output shape without the batch axis.
    pub out_shape: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Stem,
    Plain,
    Downsample,
    Dense,
    Transition,
    Inception,
    Residual,
    InceptionResidual,
    Separable,
    InvertedResidual,
    Head,
}

/// A named group of consecutive layers forming one architectural block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockInfo {
    pub name: String,
    pub kind: BlockKind,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Layer feeding the block.
    pub entry: usize,
    /// Layers created by the block; the last one is its output.
    pub layers: Range<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRow {
    pub name: String,
    pub layer_type: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// Result of recording a model's forward pass on a tape.
pub struct ForwardPass<T> {
    pub output: NodeId,
    /// Batch statistics per batch-norm state, present in training mode.
    pub batch_stats: Vec<Option<BatchStats<T>>>,
}

#[derive(Clone, Debug)]
pub struct Model<T = f32> {
    pub(crate) family: FamilyId,
    pub(crate) config: ArchConfig,
    pub(crate) layers: Vec<Layer>,
    pub(crate) blocks: Vec<BlockInfo>,
    pub params: ParamStore<T>,
    pub running: Vec<RunningStats<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn family(&self) -> FamilyId {
        self.family
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn parameter_count(&self) -> usize {
        self.params.element_count()
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<usize> {
        let [b, c, h, w] = batch.dims4("forward")?;
        let s = self.config.input_size;
        if c != self.config.input_channels || h != s || w != s {
            return Err(Error::shape(
                "forward",
                format!(
                    "model expects [B, {}, {s}, {s}], got {:?}",
                    self.config.input_channels,
                    batch.shape()
                ),
            ));
        }
        Ok(b)
    }

    fn bias_node(&self, tape: &mut Tape<T>, weight: ParamId, bias: Option<ParamId>) -> Result<NodeId> {
        Ok(match bias {
            Some(b) => tape.param(&self.params, b),
            None => tape.input(Tensor::zeros(vec![self.params.value(weight).shape()[0]])?),
        })
    }

    /// Records the forward pass of `input` (already on `tape`) and returns the
    /// softmax output node.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        input: NodeId,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass<T>> {
        self.check_input(tape.value(input))?;
        let mut nodes: Vec<NodeId> = Vec::with_capacity(self.layers.len());
        let mut batch_stats = vec![None; self.running.len()];
        for layer in &self.layers {
            let x = |k: usize| nodes[layer.inputs[k]];
            let id = match &layer.kind {
                LayerKind::Input => input,
                LayerKind::Conv { weight, bias, stride, padding, .. } => {
                    let w = tape.param(&self.params, *weight);
                    let b = self.bias_node(tape, *weight, *bias)?;
                    tape.conv2d(x(0), w, b, *stride, *padding)?
                }
                LayerKind::DepthwiseConv { weight, bias, stride, padding, .. } => {
                    let w = tape.param(&self.params, *weight);
                    let b = self.bias_node(tape, *weight, *bias)?;
                    tape.depthwise_conv2d(x(0), w, b, *stride, *padding)?
                }
                LayerKind::BatchNorm { scale, shift, state } => {
                    let g = tape.param(&self.params, *scale);
                    let h = self.bias_node(tape, *scale, *shift)?;
                    let rs = &self.running[*state];
                    let (id, stats) = tape.batch_norm(x(0), g, h, mode, &rs.mean, &rs.var)?;
                    batch_stats[*state] = stats;
                    id
                }
                LayerKind::Relu => tape.relu(x(0))?,
                LayerKind::Pool { kind, window, stride, padding } => {
                    tape.pool2d(x(0), *kind, *window, *stride, *padding)?
                }
                LayerKind::Concat => {
                    let xs: Vec<NodeId> = layer.inputs.iter().map(|&i| nodes[i]).collect();
                    tape.concat(&xs)?
                }
                LayerKind::Add => {
                    let xs: Vec<NodeId> = layer.inputs.iter().map(|&i| nodes[i]).collect();
                    tape.add(&xs)?
                }
                LayerKind::Dropout { rate } => tape.dropout(x(0), *rate, mode, rng)?,
                LayerKind::Flatten => tape.flatten(x(0))?,
                LayerKind::Dense { weight, bias } => {
                    let w = tape.param(&self.params, *weight);
                    let b = tape.param(&self.params, *bias);
                    tape.dense(x(0), w, b)?
                }
                LayerKind::Softmax => tape.softmax(x(0))?,
            };
            nodes.push(id);
        }
        let output = *nodes.last().expect("model has layers");
        Ok(ForwardPass { output, batch_stats })
    }

    /// Inference-mode class probabilities for a batch.
    pub fn predict_proba(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.input(batch.clone());
        // inference never draws from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = self.forward(&mut tape, x, Mode::Infer, &mut rng)?;
        Ok(tape.value(pass.output).clone())
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[Option<BatchStats<T>>], momentum: f64) {
        for (rs, s) in self.running.iter_mut().zip(stats) {
            if let Some(s) = s {
                norm::update_running(&mut rs.mean, &s.mean, momentum);
                norm::update_running(&mut rs.var, &s.var, momentum);
            }
        }
    }

    /// One row per layer with its output shape for a batch of `batch` images.
    pub fn describe(&self, batch: usize) -> Vec<LayerRow> {
        self.layers
            .iter()
            .map(|l| {
                let mut shape = vec![batch];
                shape.extend_from_slice(&l.out_shape);
                LayerRow {
                    name: l.name.clone(),
                    layer_type: l.kind.type_name(),
                    output_shape: shape,
                    params: l.kind.params().iter().map(|&p| self.params.value(p).len()).sum(),
                }
            })
            .collect()
    }

    /// Copy of this model with every parameter and statistic converted to `U`.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            family: self.family,
            config: self.config.clone(),
            layers: self.layers.clone(),
            blocks: self.blocks.clone(),
            params: self.params.cast(),
            running: self
                .running
                .iter()
                .map(|r| RunningStats {
                    mean: r.mean.iter().map(|&v| U::lit(v.as_f64())).collect(),
                    var: r.var.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}
