use std::ops::AddAssign;

use super::BinaryMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

pub fn confusion_counts(pred: &BinaryMap, reference: &BinaryMap) -> Result<ConfusionCounts> {
    if !pred.same_size(reference) {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs reference {}x{}",
            pred.width(),
            pred.height(),
            reference.width(),
            reference.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &r) in pred.bits().iter().zip(reference.bits()) {
        match (p, r) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// Which ratios fell back to a division-by-zero convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UndefinedRatios {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub oa: bool,
    pub iou: bool,
}

impl UndefinedRatios {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1 || self.oa || self.iou
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub oa: f64,
    pub iou: f64,
    pub undefined: UndefinedRatios,
}

/// Precision, recall, F1, overall accuracy and IoU.
///
/// Empty denominators: precision is 1 when nothing was predicted and nothing
/// was missed, else 0; recall is 1 when there was nothing to find and nothing
/// was falsely predicted, else 0; F1 is 0 when `P + R = 0`; OA and IoU are 1
/// on an empty or all-background pair.
pub fn pixel_metrics(c: &ConfusionCounts) -> PixelMetrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut undefined = UndefinedRatios::default();
    let precision = if c.tp + c.fp == 0 {
        undefined.precision = true;
        if c.fn_ == 0 { 1.0 } else { 0.0 }
    } else {
        tp / (tp + fp)
    };
    let recall = if c.tp + c.fn_ == 0 {
        undefined.recall = true;
        if c.fp == 0 { 1.0 } else { 0.0 }
    } else {
        tp / (tp + fn_)
    };
    let f1 = if precision + recall == 0.0 {
        undefined.f1 = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let oa = if c.total() == 0 {
        undefined.oa = true;
        1.0
    } else {
        (tp + tn) / (tp + fp + tn + fn_)
    };
    let iou = if c.tp + c.fp + c.fn_ == 0 {
        undefined.iou = true;
        1.0
    } else {
        tp / (tp + fp + fn_)
    };
    PixelMetrics {
        precision,
        recall,
        f1,
        oa,
        iou,
        undefined,
    }
}
