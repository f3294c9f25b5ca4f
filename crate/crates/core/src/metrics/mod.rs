//! Pixel-based and object-based evaluation of binary building maps.

mod binary_map;
pub mod contour;
pub mod objects;
mod pixel;
mod report;

pub use binary_map::BinaryMap;
pub use contour::{compactness, contour_curvature, perimeter, Curvature};
pub use objects::{
    connected_components, curvature_error, match_objects, matching_rate, overlap_errors, shape_error, BBox,
    MatchPair, SegObject, MATCH_THRESHOLD,
};
pub use pixel::{confusion_counts, pixel_metrics, ConfusionCounts, PixelMetrics, UndefinedRatios};
pub use report::{
    binarize, evaluate_maps, evaluate_pair, oa_threshold_curve, write_metrics_csv, MatchedGeometry,
    MetricsAccumulator, MetricsReport, REPORT_SCALE,
};

/// Closed outer contour of an object.
pub fn trace_contour(obj: &SegObject) -> Vec<(usize, usize)> {
    obj.contour.clone()
}
