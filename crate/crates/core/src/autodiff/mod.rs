//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. A node whose
//! inputs carry no gradient requirement is stored as a constant, so the same
//! tape serves for inference. [`Tape::backward`] replays the nodes in reverse
//! recording order and leaves `dLoss/dNode` in the gradient slot of every
//! node that requires a gradient.

mod conv;
mod deform;
pub mod gradcheck;
mod norm;
pub mod optim;
mod resample;

pub use conv::ConvSpec;
pub use deform::{bilinear_sample_value, DeformableConvSpec};
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{optimizer_step, AdamState};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => {
                // Split on sign so exp never overflows.
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Clamp applied to probabilities inside the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    DeformSample {
        input: Var,
        offset_rows: Var,
        offset_cols: Var,
        spec: ConvSpec,
    },
    BilinearSample {
        field: Var,
        coords: Var,
    },
    AvgPool {
        input: Var,
        factor: usize,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    GroupNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        stats: Vec<(f64, f64)>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    ConcatChannels {
        a: Var,
        b: Var,
    },
    Reshape {
        input: Var,
    },
    Sum {
        input: Var,
    },
    Mse {
        a: Var,
        b: Var,
    },
    Bce {
        prob: Var,
        target: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of operations. Confined to one thread; distinct tapes are
/// independent.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor; its `requires_grad` flag is kept.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    /// Copy of `v`'s value cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = Tensor::new(self.value(v).shape(), self.value(v).data().to_vec())
            .expect("shape matches its own data");
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: value.with_requires_grad(requires_grad),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: &ConvSpec,
    ) -> Result<Var> {
        let out = conv::forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            spec,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            out,
            &inputs,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec: *spec,
            },
        ))
    }

    /// Gathers bilinear samples of `input` at the kernel taps displaced by
    /// the per-tap offset maps. Output layout is `[N, C·k·k, H', W']`, the
    /// column matrix a plain convolution would build, so that a 1×1
    /// convolution with the reshaped kernel completes the deformable conv.
    pub fn deform_sample(
        &mut self,
        input: Var,
        offset_rows: Var,
        offset_cols: Var,
        spec: &ConvSpec,
    ) -> Result<Var> {
        let out = deform::sample_forward(
            self.value(input),
            self.value(offset_rows),
            self.value(offset_cols),
            spec,
        )?;
        Ok(self.push(
            out,
            &[input, offset_rows, offset_cols],
            Op::DeformSample {
                input,
                offset_rows,
                offset_cols,
                spec: *spec,
            },
        ))
    }

    /// Deformable convolution: per-tap row/column offsets are produced by
    /// convolving the input with `offset_kernel_rows` / `offset_kernel_cols`,
    /// the input is sampled bilinearly at the displaced taps and the samples
    /// are weighted by `weight`.
    pub fn deformable_conv2d(
        &mut self,
        input: Var,
        spec: &DeformableConvSpec,
        weight: Var,
        bias: Option<Var>,
        offset_kernel_rows: Var,
        offset_kernel_cols: Var,
    ) -> Result<Var> {
        let offset_spec = spec.offset_spec();
        let rows = self.conv2d(input, offset_kernel_rows, None, &offset_spec)?;
        let cols = self.conv2d(input, offset_kernel_cols, None, &offset_spec)?;
        let samples = self.deform_sample(input, rows, cols, &spec.base)?;
        let base = &spec.base;
        let taps = base.in_channels * base.kernel_size * base.kernel_size;
        let kernel = self.reshape(weight, &[base.out_channels, taps, 1, 1])?;
        let pointwise = ConvSpec::new(taps, base.out_channels, 1);
        self.conv2d(samples, kernel, bias, &pointwise)
    }

    /// Differentiable bilinear read of a `[C, H, W]` field at the fractional
    /// position held in the two-element `coords` tensor `(row, col)`.
    pub fn bilinear_sample(&mut self, field: Var, coords: Var) -> Result<Var> {
        let f = self.value(field);
        let (c, h, w) = match f.shape() {
            &[c, h, w] => (c, h, w),
            s => return Err(Error::Dimension(format!("field must be [C,H,W], got {s:?}"))),
        };
        let p = self.value(coords);
        if p.numel() != 2 {
            return Err(Error::Dimension("coords must hold (row, col)".into()));
        }
        let values = bilinear_sample_value(f.data(), c, h, w, p.data()[0], p.data()[1]);
        let out = Tensor::new(&[c], values)?;
        Ok(self.push(out, &[field, coords], Op::BilinearSample { field, coords }))
    }

    pub fn avg_pool2d(&mut self, input: Var, factor: usize) -> Result<Var> {
        let out = resample::avg_pool_forward(self.value(input), factor)?;
        Ok(self.push(out, &[input], Op::AvgPool { input, factor }))
    }

    pub fn upsample_bilinear(&mut self, input: Var, factor: usize) -> Result<Var> {
        let out = resample::upsample_forward(self.value(input), factor)?;
        Ok(self.push(out, &[input], Op::Upsample { input, factor }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| kind.apply(v)).collect();
        let out = Tensor::new(x.shape(), data).expect("same shape");
        self.push(out, &[input], Op::Activation { input, kind })
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        self.activation(input, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn group_norm(&mut self, input: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let (out, stats) = norm::forward(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            groups,
        )?;
        Ok(self.push(
            out,
            &[input, gamma, beta],
            Op::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                stats,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "add")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape(), data)?;
        Ok(self.push(out, &[a, b], Op::Add { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(x.shape(), data).expect("same shape");
        self.push(out, &[input], Op::Scale { input, factor })
    }

    /// Concatenates two `[N, C, H, W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Dimension(format!(
                "concat of [{n},{ca},{h},{w}] with [{nb},{cb},{hb},{wb}]"
            )));
        }
        let plane = h * w;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&da[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&db[i * cb * plane..(i + 1) * cb * plane]);
        }
        let out = Tensor::new(&[n, ca + cb, h, w], data)?;
        Ok(self.push(out, &[a, b], Op::ConcatChannels { a, b }))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(input).reshaped(shape)?;
        Ok(self.push(out, &[input], Op::Reshape { input }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).data().iter().sum();
        self.push(Tensor::scalar(total), &[input], Op::Sum { input })
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let n = self.value(input).numel().max(1);
        let s = self.sum(input);
        self.scale(s, 1.0 / n as f64)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "mse")?;
        let n = ta.numel().max(1) as f64;
        let total: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Tensor::scalar(total / n), &[a, b], Op::Mse { a, b }))
    }

    /// Mean binary cross-entropy of probabilities `prob` against targets,
    /// with `prob` clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, prob: Var, target: Var) -> Result<Var> {
        let (p, y) = (self.value(prob), self.value(target));
        same_shape(p, y, "bce")?;
        let n = p.numel().max(1) as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &y)| {
                let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln()
            })
            .sum();
        Ok(self.push(
            Tensor::scalar(total / n),
            &[prob, target],
            Op::Bce { prob, target },
        ))
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = &self.nodes[loss.0].value;
        if root.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape()
            )));
        }
        if !root.requires_grad() {
            return Err(Error::Usage(
                "backward on a tensor that is detached from every parameter".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            self.nodes[idx].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let need = conv::Needs {
                    input: self.requires_grad(*input),
                    weight: self.requires_grad(*weight),
                    bias: bias.is_some_and(|b| self.requires_grad(b)),
                };
                let res = conv::backward(self.value(*input), self.value(*weight), spec, g, need);
                if let Some(dx) = res.input {
                    self.accumulate(grads, *input, dx);
                }
                if let Some(dw) = res.weight {
                    self.accumulate(grads, *weight, dw);
                }
                if let (Some(b), Some(db)) = (bias, res.bias) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::DeformSample {
                input,
                offset_rows,
                offset_cols,
                spec,
            } => {
                let need_offsets =
                    self.requires_grad(*offset_rows) || self.requires_grad(*offset_cols);
                let res = deform::sample_backward(
                    self.value(*input),
                    self.value(*offset_rows),
                    self.value(*offset_cols),
                    spec,
                    g,
                    self.requires_grad(*input),
                    need_offsets,
                );
                if let Some(dx) = res.input {
                    self.accumulate(grads, *input, dx);
                }
                if let Some((du, dv)) = res.offsets {
                    self.accumulate(grads, *offset_rows, du);
                    self.accumulate(grads, *offset_cols, dv);
                }
            }
            Op::BilinearSample { field, coords } => {
                let f = self.value(*field);
                let (c, h, w) = (f.shape()[0], f.shape()[1], f.shape()[2]);
                let p = self.value(*coords).data();
                let (dfield, dy, dx) =
                    deform::bilinear_sample_backward(f.data(), c, h, w, p[0], p[1], g);
                self.accumulate(grads, *field, dfield);
                self.accumulate(grads, *coords, vec![dy, dx]);
            }
            Op::AvgPool { input, factor } => {
                let dx = resample::avg_pool_backward(self.value(*input), *factor, g);
                self.accumulate(grads, *input, dx);
            }
            Op::Upsample { input, factor } => {
                let dx = resample::upsample_backward(self.value(*input), *factor, g);
                self.accumulate(grads, *input, dx);
            }
            Op::Activation { input, kind } => {
                let x = self.value(*input).data();
                let dx = x
                    .iter()
                    .zip(out.data())
                    .zip(g)
                    .map(|((&x, &y), &g)| g * kind.derivative(x, y))
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                stats,
            } => {
                let res = norm::backward(
                    self.value(*input),
                    self.value(*gamma),
                    *groups,
                    stats,
                    g,
                );
                self.accumulate(grads, *input, res.input);
                self.accumulate(grads, *gamma, res.gamma);
                self.accumulate(grads, *beta, res.beta);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Scale { input, factor } => {
                self.accumulate(grads, *input, g.iter().map(|v| v * factor).collect());
            }
            Op::ConcatChannels { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4()?;
                let cb = self.value(*b).dims4()?.1;
                let plane = h * w;
                let mut ga = Vec::with_capacity(n * ca * plane);
                let mut gb = Vec::with_capacity(n * cb * plane);
                for i in 0..n {
                    let base = i * (ca + cb) * plane;
                    ga.extend_from_slice(&g[base..base + ca * plane]);
                    gb.extend_from_slice(&g[base + ca * plane..base + (ca + cb) * plane]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Reshape { input } => self.accumulate(grads, *input, g.to_vec()),
            Op::Sum { input } => {
                let n = self.value(*input).numel();
                self.accumulate(grads, *input, vec![g[0]; n]);
            }
            Op::Mse { a, b } => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let k = 2.0 * g[0] / ta.len().max(1) as f64;
                let da: Vec<f64> = ta.iter().zip(tb).map(|(x, y)| k * (x - y)).collect();
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, da.iter().map(|v| -v).collect());
                }
                self.accumulate(grads, *a, da);
            }
            Op::Bce { prob, target } => {
                let (p, y) = (self.value(*prob).data(), self.value(*target).data());
                let k = g[0] / p.len().max(1) as f64;
                if self.requires_grad(*prob) {
                    let dp = p
                        .iter()
                        .zip(y)
                        .map(|(&p, &y)| {
                            if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                                0.0
                            } else {
                                k * (-y / p + (1.0 - y) / (1.0 - p))
                            }
                        })
                        .collect();
                    self.accumulate(grads, *prob, dp);
                }
                if self.requires_grad(*target) {
                    let dy = p
                        .iter()
                        .map(|&p| {
                            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                            k * ((1.0 - pc).ln() - pc.ln())
                        })
                        .collect();
                    self.accumulate(grads, *target, dy);
                }
            }
        }
        Ok(())
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}
