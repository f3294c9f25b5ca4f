//! Parameterised building blocks over the tape.

use rand::Rng;

use super::params::{kaiming_uniform, Bindings, ParamId, ParamStore};
use crate::autodiff::{ConvSpec, DeformableConvSpec, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Conv {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), kaiming_uniform(&spec.weight_shape(), rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        Conv { spec, weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        tape.conv2d(x, b.var(self.weight), Some(b.var(self.bias)), &self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub groups: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Self {
        GroupNorm {
            groups,
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        tape.group_norm(x, b.var(self.gamma), b.var(self.beta), self.groups)
    }
}

/// conv → group norm → ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv,
    pub norm: GroupNorm,
}

impl ConvBlock {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, groups: usize, rng: &mut impl Rng) -> Self {
        ConvBlock {
            conv: Conv::new(store, name, spec, rng),
            norm: GroupNorm::new(store, &format!("{name}.norm"), spec.out_channels, groups),
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let y = self.conv.forward(tape, b, x)?;
        let y = self.norm.forward(tape, b, y)?;
        Ok(tape.relu(y))
    }
}

/// Deformable convolution with zero-initialised offset kernels, so a fresh
/// layer computes exactly the plain convolution of its base weights.
#[derive(Debug, Clone)]
pub struct DeformConv {
    pub spec: DeformableConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
    pub offset_rows: ParamId,
    pub offset_cols: ParamId,
}

impl DeformConv {
    pub fn new(store: &mut ParamStore, name: &str, spec: DeformableConvSpec, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), kaiming_uniform(&spec.base.weight_shape(), rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.base.out_channels]));
        let offset_rows = store.add(format!("{name}.offset_rows"), Tensor::zeros(&spec.offset_kernel_shape()));
        let offset_cols = store.add(format!("{name}.offset_cols"), Tensor::zeros(&spec.offset_kernel_shape()));
        DeformConv {
            spec,
            weight,
            bias,
            offset_rows,
            offset_cols,
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        tape.deformable_conv2d(
            x,
            &self.spec,
            b.var(self.weight),
            Some(b.var(self.bias)),
            b.var(self.offset_rows),
            b.var(self.offset_cols),
        )
    }

    /// The same weights applied as a standard convolution.
    pub fn forward_plain(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        tape.conv2d(x, b.var(self.weight), Some(b.var(self.bias)), &self.spec.base)
    }
}
