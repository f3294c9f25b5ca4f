//! Average pooling and bilinear upsampling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn avg_pool_forward(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::Geometry(format!(
            "{h}x{w} map is not divisible by pooling factor {factor}"
        )));
    }
    let (ho, wo) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; n * c * ho * wo];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for dy in 0..factor {
                    let row = &src[(oy * factor + dy) * w + ox * factor..][..factor];
                    acc += row.iter().sum::<f64>();
                }
                dst[oy * wo + ox] = acc * norm;
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

pub(crate) fn avg_pool_backward(x: &Tensor, factor: usize, g: &[f64]) -> Vec<f64> {
    let (n, c, h, w) = x.dims4().expect("validated in forward");
    let (ho, wo) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut dx = vec![0.0; x.numel()];
    for plane in 0..n * c {
        for y in 0..h {
            for xx in 0..w {
                dx[plane * h * w + y * w + xx] =
                    g[plane * ho * wo + (y / factor) * wo + xx / factor] * norm;
            }
        }
    }
    dx
}

/// Source taps for each output index along one axis, using half-pixel
/// centers: `src = (o + 0.5) / f - 0.5`, clamped at the low edge.
fn upsample_taps(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

pub(crate) fn upsample_forward(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if factor == 0 {
        return Err(Error::Geometry("upsampling factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(Tensor::new(x.shape(), x.data().to_vec())?);
    }
    let (ho, wo) = (h * factor, w * factor);
    let ty = upsample_taps(h, factor);
    let tx = upsample_taps(w, factor);
    let mut out = vec![0.0; n * c * ho * wo];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                dst[oy * wo + ox] = (1.0 - fy) * ((1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1])
                    + fy * ((1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

pub(crate) fn upsample_backward(x: &Tensor, factor: usize, g: &[f64]) -> Vec<f64> {
    let (n, c, h, w) = x.dims4().expect("validated in forward");
    if factor == 1 {
        return g.to_vec();
    }
    let (ho, wo) = (h * factor, w * factor);
    let ty = upsample_taps(h, factor);
    let tx = upsample_taps(w, factor);
    let mut dx = vec![0.0; x.numel()];
    for plane in 0..n * c {
        let src = &g[plane * ho * wo..(plane + 1) * ho * wo];
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let gv = src[oy * wo + ox];
                dst[y0 * w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                dst[y0 * w + x1] += gv * (1.0 - fy) * fx;
                dst[y1 * w + x0] += gv * fy * (1.0 - fx);
                dst[y1 * w + x1] += gv * fy * fx;
            }
        }
    }
    dx
}
