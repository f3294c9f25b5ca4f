//! Group normalization with per-channel affine parameters.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const EPS: f64 = 1e-5;

/// Returns the output and per-(sample, group) `(mean, 1/std)`.
pub(crate) fn forward(x: &Tensor, gamma: &Tensor, beta: &Tensor, groups: usize) -> Result<(Tensor, Vec<(f64, f64)>)> {
    let (n, c, h, w) = x.dims4()?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Dimension(format!("{c} channels cannot form {groups} groups")));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Dimension(format!(
            "group norm affine shapes {:?}/{:?}, expected [{c}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    let per_group = c / groups * h * w;
    let plane = h * w;
    let mut out = vec![0.0; x.numel()];
    let mut stats = Vec::with_capacity(n * groups);
    for i in 0..n {
        for gi in 0..groups {
            let start = (i * c + gi * (c / groups)) * plane;
            let block = &x.data()[start..start + per_group];
            let mean = block.iter().sum::<f64>() / per_group as f64;
            let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per_group as f64;
            let inv_std = 1.0 / (var + EPS).sqrt();
            stats.push((mean, inv_std));
            for (j, &v) in block.iter().enumerate() {
                let ch = gi * (c / groups) + j / plane;
                out[start + j] = (v - mean) * inv_std * gamma.data()[ch] + beta.data()[ch];
            }
        }
    }
    Ok((Tensor::new(x.shape(), out)?, stats))
}

pub(crate) struct NormGrads {
    pub input: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub(crate) fn backward(x: &Tensor, gamma: &Tensor, groups: usize, stats: &[(f64, f64)], g: &[f64]) -> NormGrads {
    let (n, c, h, w) = x.dims4().expect("validated in forward");
    let plane = h * w;
    let cpg = c / groups;
    let m = (cpg * plane) as f64;
    let mut dx = vec![0.0; x.numel()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut xhat = vec![0.0; cpg * plane];
    let mut dxhat = vec![0.0; cpg * plane];
    for i in 0..n {
        for gi in 0..groups {
            let (mean, inv_std) = stats[i * groups + gi];
            let start = (i * c + gi * cpg) * plane;
            let (mut sum_d, mut sum_dx) = (0.0, 0.0);
            for j in 0..cpg * plane {
                let ch = gi * cpg + j / plane;
                let xh = (x.data()[start + j] - mean) * inv_std;
                let gv = g[start + j];
                dgamma[ch] += gv * xh;
                dbeta[ch] += gv;
                let d = gv * gamma.data()[ch];
                xhat[j] = xh;
                dxhat[j] = d;
                sum_d += d;
                sum_dx += d * xh;
            }
            for j in 0..cpg * plane {
                dx[start + j] = inv_std / m * (m * dxhat[j] - sum_d - xhat[j] * sum_dx);
            }
        }
    }
    NormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    }
}
