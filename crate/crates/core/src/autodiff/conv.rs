//! 2-D convolution via column matrices and GEMM.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Geometry of a square-kernel convolution with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Stride 1, dilation 1, no padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvSpec {
            kernel_size,
            stride: 1,
            dilation: 1,
            padding: 0,
            in_channels,
            out_channels,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel_size,
            self.kernel_size,
        ]
    }

    /// Rows of the column matrix: one per (input channel, tap).
    pub(crate) fn taps(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }

    /// `floor((H + 2p - d(k-1) - 1) / s) + 1` per axis.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::Geometry(format!("degenerate conv spec {self:?}")));
        }
        let span = self.dilation * (self.kernel_size - 1) + 1;
        let axis = |n: usize| -> Result<usize> {
            let padded = n + 2 * self.padding;
            if padded < span {
                return Err(Error::Geometry(format!(
                    "input extent {n} (padded {padded}) smaller than kernel span {span}"
                )));
            }
            Ok((padded - span) / self.stride + 1)
        };
        Ok((axis(h)?, axis(w)?))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_size == 1 && self.stride == 1 && self.padding == 0
    }
}

/// `C = beta·C + A·B` for row/column strided matrices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
    c_strides: (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, (rs, cs): (isize, isize)| {
        (rows as isize - 1) * rs + (cols as isize - 1) * cs
    };
    if k > 0 {
        assert!(extent(m, k, a_strides) < a.len() as isize);
        assert!(extent(k, n, b_strides) < b.len() as isize);
    }
    assert!(extent(m, n, c_strides) < c.len() as isize);
    // SAFETY: the asserts above bound every index the kernel can touch for
    // non-negative strides, which is all this module uses.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            c_strides.0,
            c_strides.1,
        );
    }
}

fn im2col(x: &[f64], h: usize, w: usize, spec: &ConvSpec, ho: usize, wo: usize, cols: &mut [f64]) {
    let k = spec.kernel_size;
    let p = ho * wo;
    for ci in 0..spec.in_channels {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ki * spec.dilation) as isize - spec.padding as isize;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix =
                            (ox * spec.stride + kj * spec.dilation) as isize - spec.padding as isize;
                        *o = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], h: usize, w: usize, spec: &ConvSpec, ho: usize, wo: usize, dx: &mut [f64]) {
    let k = spec.kernel_size;
    let p = ho * wo;
    for ci in 0..spec.in_channels {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ki * spec.dilation) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix =
                            (ox * spec.stride + kj * spec.dilation) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn check(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    if c != spec.in_channels {
        return Err(Error::Dimension(format!(
            "conv expects {} input channels, got {c}",
            spec.in_channels
        )));
    }
    if weight.shape() != spec.weight_shape() {
        return Err(Error::Dimension(format!(
            "conv weight shape {:?}, expected {:?}",
            weight.shape(),
            spec.weight_shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(Error::Dimension(format!(
                "conv bias shape {:?}, expected [{}]",
                b.shape(),
                spec.out_channels
            )));
        }
    }
    let (ho, wo) = spec.output_size(h, w)?;
    Ok((n, h, w, ho, wo))
}

pub(crate) fn forward(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let (n, h, w, ho, wo) = check(x, weight, bias, spec)?;
    let (cin, cout, taps, p) = (spec.in_channels, spec.out_channels, spec.taps(), ho * wo);
    let mut out = vec![0.0; n * cout * p];
    let mut cols = if spec.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; taps * p]
    };
    for i in 0..n {
        let xi = &x.data()[i * cin * h * w..(i + 1) * cin * h * w];
        let oi = &mut out[i * cout * p..(i + 1) * cout * p];
        if let Some(b) = bias {
            for (co, &bv) in b.data().iter().enumerate() {
                oi[co * p..(co + 1) * p].fill(bv);
            }
        }
        let src: &[f64] = if spec.is_pointwise() {
            xi
        } else {
            im2col(xi, h, w, spec, ho, wo, &mut cols);
            &cols
        };
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        gemm(
            cout,
            taps,
            p,
            weight.data(),
            (taps as isize, 1),
            src,
            (p as isize, 1),
            beta,
            oi,
            (p as isize, 1),
        );
    }
    Tensor::new(&[n, cout, ho, wo], out)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Needs {
    pub input: bool,
    pub weight: bool,
    pub bias: bool,
}

#[derive(Debug, Default)]
pub(crate) struct Grads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn backward(x: &Tensor, weight: &Tensor, spec: &ConvSpec, gout: &[f64], need: Needs) -> Grads {
    let (n, _, h, w) = x.dims4().expect("validated in forward");
    let (ho, wo) = spec.output_size(h, w).expect("validated in forward");
    let (cin, cout, taps, p) = (spec.in_channels, spec.out_channels, spec.taps(), ho * wo);

    let mut dx = need.input.then(|| vec![0.0; x.numel()]);
    let mut dw = need.weight.then(|| vec![0.0; weight.numel()]);
    let mut db = need.bias.then(|| vec![0.0; cout]);
    let mut cols = vec![0.0; if spec.is_pointwise() { 0 } else { taps * p }];
    let mut dcols = vec![0.0; if need.input { taps * p } else { 0 }];

    for i in 0..n {
        let gi = &gout[i * cout * p..(i + 1) * cout * p];
        if let Some(db) = db.as_mut() {
            for (co, acc) in db.iter_mut().enumerate() {
                *acc += gi[co * p..(co + 1) * p].iter().sum::<f64>();
            }
        }
        let xi = &x.data()[i * cin * h * w..(i + 1) * cin * h * w];
        if let Some(dw) = dw.as_mut() {
            let src: &[f64] = if spec.is_pointwise() {
                xi
            } else {
                im2col(xi, h, w, spec, ho, wo, &mut cols);
                &cols
            };
            // dW[co, t] += Σ_p g[co, p] · cols[t, p]
            gemm(
                cout,
                p,
                taps,
                gi,
                (p as isize, 1),
                src,
                (1, p as isize),
                1.0,
                dw,
                (taps as isize, 1),
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[i * cin * h * w..(i + 1) * cin * h * w];
            if spec.is_pointwise() {
                gemm(
                    taps,
                    cout,
                    p,
                    weight.data(),
                    (1, taps as isize),
                    gi,
                    (p as isize, 1),
                    1.0,
                    dxi,
                    (p as isize, 1),
                );
            } else {
                gemm(
                    taps,
                    cout,
                    p,
                    weight.data(),
                    (1, taps as isize),
                    gi,
                    (p as isize, 1),
                    0.0,
                    &mut dcols,
                    (p as isize, 1),
                );
                col2im(&dcols, h, w, spec, ho, wo, dxi);
            }
        }
    }
    Grads {
        input: dx,
        weight: dw,
        bias: db,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_product() {
        let x = Tensor::new(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let w = Tensor::new(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let out = forward(&x, &w, None, &ConvSpec::new(1, 1, 1)).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn centered_delta_is_identity() {
        let x = Tensor::from_fn(&[2, 1, 5, 6], |i| (i as f64 * 0.37).sin());
        let mut wdata = vec![0.0; 9];
        wdata[4] = 1.0;
        let w = Tensor::new(&[1, 1, 3, 3], wdata).unwrap();
        let out = forward(&x, &w, None, &ConvSpec::new(1, 1, 3).padding(1)).unwrap();
        assert_eq!(out.shape(), x.shape());
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn output_size_formula() {
        let s = ConvSpec::new(1, 1, 3).stride(2).padding(1);
        assert_eq!(s.output_size(64, 64).unwrap(), (32, 32));
        let d = ConvSpec::new(1, 1, 3).dilation(2).padding(2);
        assert_eq!(d.output_size(7, 9).unwrap(), (7, 9));
        assert!(matches!(
            ConvSpec::new(1, 1, 5).output_size(3, 3),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(matches!(
            forward(&x, &w, None, &ConvSpec::new(2, 1, 3)),
            Err(Error::Dimension(_))
        ));
        let w = Tensor::zeros(&[1, 2, 3, 3]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(
            forward(&x, &w, Some(&b), &ConvSpec::new(2, 1, 3)),
            Err(Error::Dimension(_))
        ));
    }
}
