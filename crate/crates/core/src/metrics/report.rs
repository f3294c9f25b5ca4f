use std::io::Write;

use super::objects::{
    connected_components, curvature_error, match_objects, matched_reference_count, shape_error, MATCH_THRESHOLD,
};
use super::pixel::{confusion_counts, pixel_metrics, ConfusionCounts, UndefinedRatios};
use super::BinaryMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dataset-level curvature and shape errors are reported multiplied by this.
pub const REPORT_SCALE: f64 = 100.0;

/// Geometry of one matched `(reference, segment)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedGeometry {
    pub ref_id: usize,
    pub seg_id: usize,
    /// `|Δ f_c|`, radians per pixel.
    pub curvature_error: f64,
    /// `|Δ f_s|`.
    pub shape_error: f64,
    /// Either contour was too short for the curvature estimator.
    pub degenerate_curvature: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub oa: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Absent when there are no reference objects.
    pub mr: Option<f64>,
    /// Mean over matched pairs, ×[`REPORT_SCALE`]; absent without matches.
    pub e_curv: Option<f64>,
    pub e_shape: Option<f64>,
    pub n_ref_objects: usize,
    pub n_seg_objects: usize,
    /// Reference objects with a match.
    pub n_matched: usize,
    pub undefined: UndefinedRatios,
    /// Single-pixel objects whose perimeter is the convention value.
    pub n_single_pixel: usize,
    pub pairs: Vec<MatchedGeometry>,
}

impl MetricsReport {
    fn assemble(
        counts: ConfusionCounts,
        n_ref_objects: usize,
        n_seg_objects: usize,
        n_matched: usize,
        n_single_pixel: usize,
        pairs: Vec<MatchedGeometry>,
    ) -> Self {
        let m = pixel_metrics(&counts);
        let mean = |f: fn(&MatchedGeometry) -> f64| {
            (!pairs.is_empty()).then(|| REPORT_SCALE * pairs.iter().map(f).sum::<f64>() / pairs.len() as f64)
        };
        MetricsReport {
            counts,
            oa: m.oa,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            iou: m.iou,
            mr: (n_ref_objects > 0).then(|| n_matched as f64 / n_ref_objects as f64),
            e_curv: mean(|p| p.curvature_error),
            e_shape: mean(|p| p.shape_error),
            n_ref_objects,
            n_seg_objects,
            n_matched,
            undefined: m.undefined,
            n_single_pixel,
            pairs,
        }
    }

    pub fn csv_header() -> &'static str {
        "image,oa,precision,recall,f1,iou,mr,e_curv,e_shape,n_ref,n_seg,n_matched"
    }

    /// One CSV row; absent values are written as `NA`.
    pub fn csv_row(&self, image: &str) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        format!(
            "{image},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{}",
            self.oa,
            self.precision,
            self.recall,
            self.f1,
            self.iou,
            opt(self.mr),
            opt(self.e_curv),
            opt(self.e_shape),
            self.n_ref_objects,
            self.n_seg_objects,
            self.n_matched
        )
    }
}

/// Pixel and object metrics of a binary prediction.
pub fn evaluate_maps(pred: &BinaryMap, reference: &BinaryMap) -> Result<MetricsReport> {
    let counts = confusion_counts(pred, reference)?;
    let refs = connected_components(reference);
    let segs = connected_components(pred);
    let matches = match_objects(&refs, &segs, MATCH_THRESHOLD);
    let n_matched = matched_reference_count(refs.len(), &matches);
    let pairs = matches
        .iter()
        .filter(|p| p.matched)
        .map(|p| {
            let (o, s) = (&refs[p.ref_id], &segs[p.seg_id]);
            MatchedGeometry {
                ref_id: p.ref_id,
                seg_id: p.seg_id,
                curvature_error: curvature_error(o, s),
                shape_error: shape_error(o, s),
                degenerate_curvature: o.curvature().degenerate || s.curvature().degenerate,
            }
        })
        .collect();
    let n_single_pixel = refs.iter().chain(&segs).filter(|o| o.is_single_pixel()).count();
    Ok(MetricsReport::assemble(
        counts,
        refs.len(),
        segs.len(),
        n_matched,
        n_single_pixel,
        pairs,
    ))
}

/// Thresholds a probability map into a [`BinaryMap`]; ties are foreground.
///
/// Accepts any shape whose trailing two dimensions are `H, W` and whose
/// leading dimensions are all 1.
pub fn binarize(prob: &Tensor, threshold: f64) -> Result<BinaryMap> {
    let shape = prob.shape();
    if shape.len() < 2 || shape[..shape.len() - 2].iter().any(|&d| d != 1) {
        return Err(Error::Dimension(format!("expected a single map, got shape {shape:?}")));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    BinaryMap::from_threshold(w, h, prob.data(), threshold)
}

/// Binarizes `pred_prob` at `threshold` and evaluates it against `reference`.
pub fn evaluate_pair(pred_prob: &Tensor, reference: &BinaryMap, threshold: f64) -> Result<MetricsReport> {
    let pred = binarize(pred_prob, threshold)?;
    evaluate_maps(&pred, reference)
}

/// Overall accuracy at each threshold.
pub fn oa_threshold_curve(pred_prob: &Tensor, reference: &BinaryMap, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    thresholds
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Usage(format!("threshold {t} outside (0, 1)")));
            }
            let counts = confusion_counts(&binarize(pred_prob, t)?, reference)?;
            Ok((t, pixel_metrics(&counts).oa))
        })
        .collect()
}

/// Micro-averaged dataset totals: pixel counts, object counts and matched
/// pair errors are pooled before any ratio is taken.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    counts: ConfusionCounts,
    n_ref: usize,
    n_seg: usize,
    n_matched: usize,
    n_single_pixel: usize,
    pairs: Vec<MatchedGeometry>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, r: &MetricsReport) {
        self.counts += r.counts;
        self.n_ref += r.n_ref_objects;
        self.n_seg += r.n_seg_objects;
        self.n_matched += r.n_matched;
        self.n_single_pixel += r.n_single_pixel;
        self.pairs.extend_from_slice(&r.pairs);
    }

    pub fn merge(mut self, other: MetricsAccumulator) -> Self {
        self.counts += other.counts;
        self.n_ref += other.n_ref;
        self.n_seg += other.n_seg;
        self.n_matched += other.n_matched;
        self.n_single_pixel += other.n_single_pixel;
        self.pairs.extend(other.pairs);
        self
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport::assemble(
            self.counts,
            self.n_ref,
            self.n_seg,
            self.n_matched,
            self.n_single_pixel,
            self.pairs.clone(),
        )
    }
}

/// Writes per-image rows followed by a `TOTAL` row.
pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[(String, MetricsReport)], total: &MetricsReport) -> std::io::Result<()> {
    writeln!(w, "{}", MetricsReport::csv_header())?;
    for (name, r) in rows {
        writeln!(w, "{}", r.csv_row(name))?;
    }
    writeln!(w, "{}", total.csv_row("TOTAL"))
}
