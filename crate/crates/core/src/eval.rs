//! Dataset-level inference and evaluation.

use crate::error::{Error, Result};
use crate::metrics::{binarize, connected_components, evaluate_pair, oa_threshold_curve, BinaryMap, MetricsAccumulator, MetricsReport};
use crate::model::SegmentationModel;
use crate::synth::Sample;
use crate::tensor::Tensor;

/// Thresholds 0.1, 0.2, …, 0.9.
pub fn default_thresholds() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// `σ(P)` for every sample, each as `[1, 1, H, W]`, computed in batches.
pub fn predict_samples(model: &SegmentationModel, samples: &[Sample], batch_size: usize) -> Result<Vec<Tensor>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size) {
        let (_, c, h, w) = chunk[0].image.dims4()?;
        let mut data = Vec::with_capacity(chunk.len() * c * h * w);
        for s in chunk {
            if s.image.shape() != chunk[0].image.shape() {
                return Err(Error::Dimension("images differ in size".into()));
            }
            data.extend_from_slice(s.image.data());
        }
        let prob = model.predict_proba(&Tensor::new(&[chunk.len(), c, h, w], data)?)?;
        for one in prob.data().chunks(h * w) {
            out.push(Tensor::new(&[1, 1, h, w], one.to_vec())?);
        }
    }
    Ok(out)
}

/// Per-image reports and their micro-averaged total.
pub fn evaluate_predictions(
    probs: &[Tensor],
    labels: &[&BinaryMap],
    threshold: f64,
) -> Result<(Vec<MetricsReport>, MetricsReport)> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", probs.len(), labels.len())));
    }
    let mut acc = MetricsAccumulator::new();
    let mut rows = Vec::with_capacity(probs.len());
    for (p, l) in probs.iter().zip(labels) {
        let r = evaluate_pair(p, l, threshold)?;
        acc.add(&r);
        rows.push(r);
    }
    Ok((rows, acc.report()))
}

/// Pooled overall accuracy at each threshold.
pub fn dataset_oa_curve(probs: &[Tensor], labels: &[&BinaryMap], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::Usage("need one prediction per label and at least one image".into()));
    }
    let mut correct = vec![0.0; thresholds.len()];
    let mut total = 0.0;
    for (p, l) in probs.iter().zip(labels) {
        let n = (l.width() * l.height()) as f64;
        for (slot, (_, oa)) in correct.iter_mut().zip(oa_threshold_curve(p, l, thresholds)?) {
            *slot += oa * n;
        }
        total += n;
    }
    Ok(thresholds.iter().zip(correct).map(|(&t, c)| (t, c / total)).collect())
}

/// Population standard deviation of the curve values.
pub fn curve_std(curve: &[(f64, f64)]) -> f64 {
    let n = curve.len() as f64;
    let mean = curve.iter().map(|p| p.1).sum::<f64>() / n;
    (curve.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Fraction of the objects in `targets` of which more than half the pixels
/// are predicted foreground. `None` without target objects.
pub fn object_recall(probs: &[Tensor], targets: &[&BinaryMap], threshold: f64) -> Result<Option<f64>> {
    let (mut found, mut total) = (0usize, 0usize);
    for (p, t) in probs.iter().zip(targets) {
        let pred = binarize(p, threshold)?;
        for obj in connected_components(t) {
            let hit = obj.pixels.iter().filter(|&&(r, c)| pred.get(r, c)).count();
            found += usize::from(2 * hit > obj.area);
            total += 1;
        }
    }
    Ok((total > 0).then(|| found as f64 / total as f64))
}
