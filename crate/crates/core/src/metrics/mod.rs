//! Evaluation metrics: ID-mAP, class-agnostic AR, the AUROC separation
//! axes, OOD recall at k, AOSP and score histograms.
//!
//! Every ranking metric keeps the top `k_per_image` detections of each
//! image by fused confidence (ties by input order) and matches greedily in
//! that order at the configured IoU.

mod aosp;
mod ap;
mod auroc;
mod context;
mod histogram;
mod report;

pub use aosp::{AospCurvePoint, AospResult};
pub use ap::{average_precision, AP_GRID_POINTS};
pub use auroc::{auroc, auroc_axes, AurocAxes};
pub use histogram::{histograms, Histogram, Histograms};
pub use report::{evaluate, evaluate_with_workers, DatasetCounts, EvalReport};

use context::EvalContext;

use crate::error::{Error, Result};
use crate::model::{ClassSplit, Detection, EvalConfig, GroundTruthObject, UNKNOWN_CLASS};
use crate::scalar::Scalar;

/// Which class label each detection contributes to ID-mAP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// Every detection claims its arg-max known class.
    ClosedSet,
    /// Detections claim their decided class; unknowns are left out.
    OpenSet,
}

fn decided_classes<T: Scalar>(dets: &[Detection<T>]) -> Result<Vec<u32>> {
    dets.iter()
        .map(|d| d.decided_class())
        .collect::<Option<Vec<u32>>>()
        .ok_or_else(|| Error::invalid("open-set metrics need decided detections"))
}

/// Mean AP over the known classes that have at least one instance.
pub fn id_map<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
    mode: MapMode,
) -> Result<T> {
    let ctx = EvalContext::new(dets, gts, Some(split), cfg)?;
    match mode {
        MapMode::ClosedSet => ctx.id_map_with(|d| ctx.argmax_class[d]),
        MapMode::OpenSet => {
            let classes = decided_classes(dets)?;
            ctx.id_map_with(|d| classes[d])
        }
    }
}

/// Class-agnostic average recall of all ground truth by the top-k
/// proposals, averaged over `cfg.ar_iou_thresholds`.
pub fn ca_ar<T: Scalar>(
    proposals: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    cfg: &EvalConfig<T>,
) -> Result<T> {
    EvalContext::new(proposals, gts, None, cfg)?.ca_ar()
}

/// Fraction of OOD ground truth recovered by top-k detections decided
/// unknown.
pub fn ood_recall_at_k<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
) -> Result<T> {
    let classes = decided_classes(dets)?;
    EvalContext::new(dets, gts, Some(split), cfg)?.ood_recall_with(|d| classes[d] == UNKNOWN_CLASS)
}

/// AOSP and its curve. Detections must carry ID scores; their decided
/// classes are ignored and re-derived at every candidate threshold.
pub fn aosp<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
) -> Result<AospResult<T>> {
    aosp::aosp_in(&EvalContext::new(dets, gts, Some(split), cfg)?)
}
