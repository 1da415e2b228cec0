//! IOU-based evaluation.
//!
//! Absent frames follow the benchmark convention: a frame where both result
//! and truth report absence scores 1, a frame where only one does scores 0.

use std::collections::BTreeMap;

use crate::bench::dataset::Category;
use crate::imaging::{iou, BoundingBox};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ious: Vec<f64>,
    /// Fraction of frames with IOU above 0.5.
    pub success: f64,
    pub mean_iou: f64,
}

pub fn frame_iou(result: Option<&BoundingBox>, truth: Option<&BoundingBox>) -> f64 {
    match (result, truth) {
        (Some(r), Some(t)) => iou(r, t),
        (None, None) => 1.0,
        _ => 0.0,
    }
}

pub fn evaluate(result: &[Option<BoundingBox>], truth: &[Option<BoundingBox>]) -> Result<Metrics> {
    if result.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "{} result frames against {} ground-truth frames",
            result.len(),
            truth.len()
        )));
    }
    if result.is_empty() {
        return Err(Error::Evaluation("no frames to evaluate".into()));
    }
    let ious: Vec<f64> = result
        .iter()
        .zip(truth)
        .map(|(r, t)| frame_iou(r.as_ref(), t.as_ref()))
        .collect();
    let n = ious.len() as f64;
    let success = ious.iter().filter(|&&v| v > 0.5).count() as f64 / n;
    let mean_iou = ious.iter().sum::<f64>() / n;
    Ok(Metrics {
        ious,
        success,
        mean_iou,
    })
}

/// Mean success rate per category over the sequences carrying that tag.
pub fn aggregate_by_category(per_sequence: &[(Vec<Category>, Metrics)]) -> BTreeMap<Category, f64> {
    let mut sums: BTreeMap<Category, (f64, usize)> = BTreeMap::new();
    for (tags, m) in per_sequence {
        for &t in tags {
            let e = sums.entry(t).or_default();
            e.0 += m.success;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
