//! Bilinear sampling and the sampling half of deformable convolution.
//!
//! Sampling happens on the zero-padded input, and coordinates falling
//! outside the padded field are clamped to its edge. With zero offsets every
//! tap lands on an integer position of the padded field, so the gathered
//! columns equal those of a zero-padded standard convolution.

use super::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution with learned per-pixel tap displacements. The base
/// geometry is a regular convolution with dilation 1; the offset kernels
/// (one output channel per tap for rows, the same for columns) share its
/// stride and padding so the offset maps have the output's spatial shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeformableConvSpec {
    pub base: ConvSpec,
}

impl DeformableConvSpec {
    /// `k×k` kernel, stride 1, "same" padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        DeformableConvSpec {
            base: ConvSpec::new(in_channels, out_channels, kernel_size).padding(kernel_size / 2),
        }
    }

    pub fn offset_spec(&self) -> ConvSpec {
        let k = self.base.kernel_size;
        ConvSpec::new(self.base.in_channels, k * k, k)
            .stride(self.base.stride)
            .padding(self.base.padding)
    }

    pub fn offset_kernel_shape(&self) -> [usize; 4] {
        self.offset_spec().weight_shape()
    }
}

/// Interpolation support along one axis of extent `n`.
#[derive(Debug, Clone, Copy)]
struct AxisTap {
    lo: usize,
    hi: usize,
    frac: f64,
    /// Whether the coordinate derivative is live (false when clamped).
    active: bool,
}

fn axis_tap(coord: f64, n: usize) -> AxisTap {
    let max = (n - 1) as f64;
    let c = coord.clamp(0.0, max);
    let lo = c.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    AxisTap {
        lo,
        hi,
        frac: c - lo as f64,
        active: (0.0..=max).contains(&coord) && hi != lo,
    }
}

/// Bilinear read of every channel of a `[C, H, W]` field at `(y, x)`, with
/// clamp-to-edge outside the grid.
pub fn bilinear_sample_value(field: &[f64], c: usize, h: usize, w: usize, y: f64, x: f64) -> Vec<f64> {
    let ty = axis_tap(y, h);
    let tx = axis_tap(x, w);
    (0..c)
        .map(|ci| {
            let plane = &field[ci * h * w..(ci + 1) * h * w];
            let v = |r: usize, q: usize| plane[r * w + q];
            (1.0 - ty.frac) * (1.0 - tx.frac) * v(ty.lo, tx.lo)
                + (1.0 - ty.frac) * tx.frac * v(ty.lo, tx.hi)
                + ty.frac * (1.0 - tx.frac) * v(ty.hi, tx.lo)
                + ty.frac * tx.frac * v(ty.hi, tx.hi)
        })
        .collect()
}

pub(crate) fn bilinear_sample_backward(
    field: &[f64],
    c: usize,
    h: usize,
    w: usize,
    y: f64,
    x: f64,
    g: &[f64],
) -> (Vec<f64>, f64, f64) {
    let ty = axis_tap(y, h);
    let tx = axis_tap(x, w);
    let mut dfield = vec![0.0; field.len()];
    let (mut dy, mut dx) = (0.0, 0.0);
    for ci in 0..c {
        let off = ci * h * w;
        let v = |r: usize, q: usize| field[off + r * w + q];
        let gc = g[ci];
        dfield[off + ty.lo * w + tx.lo] += gc * (1.0 - ty.frac) * (1.0 - tx.frac);
        dfield[off + ty.lo * w + tx.hi] += gc * (1.0 - ty.frac) * tx.frac;
        dfield[off + ty.hi * w + tx.lo] += gc * ty.frac * (1.0 - tx.frac);
        dfield[off + ty.hi * w + tx.hi] += gc * ty.frac * tx.frac;
        if ty.active {
            dy += gc
                * ((1.0 - tx.frac) * (v(ty.hi, tx.lo) - v(ty.lo, tx.lo))
                    + tx.frac * (v(ty.hi, tx.hi) - v(ty.lo, tx.hi)));
        }
        if tx.active {
            dx += gc
                * ((1.0 - ty.frac) * (v(ty.lo, tx.hi) - v(ty.lo, tx.lo))
                    + ty.frac * (v(ty.hi, tx.hi) - v(ty.hi, tx.lo)));
        }
    }
    (dfield, dy, dx)
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

fn check(x: &Tensor, rows: &Tensor, cols: &Tensor, spec: &ConvSpec) -> Result<Geometry> {
    let (n, c, h, w) = x.dims4()?;
    if c != spec.in_channels {
        return Err(Error::Dimension(format!(
            "deformable sampling expects {} channels, got {c}",
            spec.in_channels
        )));
    }
    let (ho, wo) = spec.output_size(h, w)?;
    let k = spec.kernel_size;
    let expected = [n, k * k, ho, wo];
    for t in [rows, cols] {
        if t.shape() != expected {
            return Err(Error::Dimension(format!(
                "offset map shape {:?}, expected {expected:?}",
                t.shape()
            )));
        }
    }
    Ok(Geometry { n, c, h, w, ho, wo })
}

/// Padded-field sample position of tap `(ki, kj)` at output `(oy, ox)`.
fn tap_position(spec: &ConvSpec, oy: usize, ox: usize, ki: usize, kj: usize, du: f64, dv: f64) -> (f64, f64) {
    (
        (oy * spec.stride + ki * spec.dilation) as f64 + du,
        (ox * spec.stride + kj * spec.dilation) as f64 + dv,
    )
}

pub(crate) fn sample_forward(x: &Tensor, rows: &Tensor, cols: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let g = check(x, rows, cols, spec)?;
    let k = spec.kernel_size;
    let (hp, wp) = (g.h + 2 * spec.padding, g.w + 2 * spec.padding);
    let pad = spec.padding;
    let p = g.ho * g.wo;
    let mut out = vec![0.0; g.n * g.c * k * k * p];
    for i in 0..g.n {
        for ci in 0..g.c {
            let plane = &x.data()[(i * g.c + ci) * g.h * g.w..(i * g.c + ci + 1) * g.h * g.w];
            let read = |r: usize, q: usize| {
                if r < pad || q < pad || r >= pad + g.h || q >= pad + g.w {
                    0.0
                } else {
                    plane[(r - pad) * g.w + (q - pad)]
                }
            };
            for ki in 0..k {
                for kj in 0..k {
                    let tap = ki * k + kj;
                    let off = (i * k * k + tap) * p;
                    let dst = ((i * g.c + ci) * k * k + tap) * p;
                    for oy in 0..g.ho {
                        for ox in 0..g.wo {
                            let q = oy * g.wo + ox;
                            let (y, xx) = tap_position(spec, oy, ox, ki, kj, rows.data()[off + q], cols.data()[off + q]);
                            let ty = axis_tap(y, hp);
                            let tx = axis_tap(xx, wp);
                            out[dst + q] = (1.0 - ty.frac) * (1.0 - tx.frac) * read(ty.lo, tx.lo)
                                + (1.0 - ty.frac) * tx.frac * read(ty.lo, tx.hi)
                                + ty.frac * (1.0 - tx.frac) * read(ty.hi, tx.lo)
                                + ty.frac * tx.frac * read(ty.hi, tx.hi);
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[g.n, g.c * k * k, g.ho, g.wo], out)
}

pub(crate) struct SampleGrads {
    pub input: Option<Vec<f64>>,
    pub offsets: Option<(Vec<f64>, Vec<f64>)>,
}

pub(crate) fn sample_backward(
    x: &Tensor,
    rows: &Tensor,
    cols: &Tensor,
    spec: &ConvSpec,
    gout: &[f64],
    need_input: bool,
    need_offsets: bool,
) -> SampleGrads {
    let g = check(x, rows, cols, spec).expect("validated in forward");
    let k = spec.kernel_size;
    let (hp, wp) = (g.h + 2 * spec.padding, g.w + 2 * spec.padding);
    let pad = spec.padding;
    let p = g.ho * g.wo;
    let mut dx = need_input.then(|| vec![0.0; x.numel()]);
    let mut doff = need_offsets.then(|| (vec![0.0; rows.numel()], vec![0.0; cols.numel()]));

    for i in 0..g.n {
        for ci in 0..g.c {
            let base = (i * g.c + ci) * g.h * g.w;
            let plane = &x.data()[base..base + g.h * g.w];
            let inside = |r: usize, q: usize| r >= pad && q >= pad && r < pad + g.h && q < pad + g.w;
            let read = |r: usize, q: usize| {
                if inside(r, q) {
                    plane[(r - pad) * g.w + (q - pad)]
                } else {
                    0.0
                }
            };
            for ki in 0..k {
                for kj in 0..k {
                    let tap = ki * k + kj;
                    let off = (i * k * k + tap) * p;
                    let src = ((i * g.c + ci) * k * k + tap) * p;
                    for oy in 0..g.ho {
                        for ox in 0..g.wo {
                            let q = oy * g.wo + ox;
                            let gv = gout[src + q];
                            if gv == 0.0 {
                                continue;
                            }
                            let (y, xx) = tap_position(spec, oy, ox, ki, kj, rows.data()[off + q], cols.data()[off + q]);
                            let ty = axis_tap(y, hp);
                            let tx = axis_tap(xx, wp);
                            if let Some(dx) = dx.as_mut() {
                                let mut put = |r: usize, c: usize, wgt: f64| {
                                    if inside(r, c) {
                                        dx[base + (r - pad) * g.w + (c - pad)] += gv * wgt;
                                    }
                                };
                                put(ty.lo, tx.lo, (1.0 - ty.frac) * (1.0 - tx.frac));
                                put(ty.lo, tx.hi, (1.0 - ty.frac) * tx.frac);
                                put(ty.hi, tx.lo, ty.frac * (1.0 - tx.frac));
                                put(ty.hi, tx.hi, ty.frac * tx.frac);
                            }
                            if let Some((du, dv)) = doff.as_mut() {
                                if ty.active {
                                    du[off + q] += gv
                                        * ((1.0 - tx.frac) * (read(ty.hi, tx.lo) - read(ty.lo, tx.lo))
                                            + tx.frac * (read(ty.hi, tx.hi) - read(ty.lo, tx.hi)));
                                }
                                if tx.active {
                                    dv[off + q] += gv
                                        * ((1.0 - ty.frac) * (read(ty.lo, tx.hi) - read(ty.lo, tx.lo))
                                            + ty.frac * (read(ty.hi, tx.hi) - read(ty.hi, tx.lo)));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    SampleGrads {
        input: dx,
        offsets: doff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_coordinates_read_grid_values() {
        let field: Vec<f64> = (0..12).map(|i| i as f64 * 1.5).collect();
        for r in 0..3 {
            for q in 0..4 {
                let v = bilinear_sample_value(&field, 1, 3, 4, r as f64, q as f64);
                assert_eq!(v[0], field[r * 4 + q]);
            }
        }
    }

    #[test]
    fn horizontal_midpoint_is_average() {
        let field = vec![2.0, 7.0, -1.0, 4.0];
        let v = bilinear_sample_value(&field, 1, 2, 2, 0.0, 0.5);
        assert_eq!(v[0], 4.5);
    }

    #[test]
    fn four_term_expansion() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let field: Vec<f64> = (0..2 * 5 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: f64 = rng.random_range(0.0..4.0);
            let x: f64 = rng.random_range(0.0..5.0);
            let got = bilinear_sample_value(&field, 2, 5, 6, y, x);
            for (c, g) in got.iter().enumerate() {
                let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                let (a, b) = (y - y0 as f64, x - x0 as f64);
                let f = |r: usize, q: usize| field[c * 30 + r * 6 + q];
                let expected = f(y0, x0) * (1.0 - a) * (1.0 - b)
                    + f(y0, x0 + 1) * (1.0 - a) * b
                    + f(y0 + 1, x0) * a * (1.0 - b)
                    + f(y0 + 1, x0 + 1) * a * b;
                assert!((g - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn out_of_range_clamps_to_edge() {
        let field = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(bilinear_sample_value(&field, 1, 2, 2, -3.0, -0.5)[0], 1.0);
        assert_eq!(bilinear_sample_value(&field, 1, 2, 2, 5.0, 9.0)[0], 4.0);
        let (_, dy, dx) = bilinear_sample_backward(&field, 1, 2, 2, -3.0, 0.5, &[1.0]);
        assert_eq!(dy, 0.0);
        assert_eq!(dx, 1.0);
    }
}
