//! IoU, greedy detection-to-ground-truth matching and the ternary
//! ID / OOD / background partition of predictions.
//!
//! Detections are visited in descending fused confidence (ties by input
//! order). Each one claims the unmatched ground truth with the highest IoU
//! if that IoU reaches `iou_match`. Unmatched detections whose best IoU
//! against *any* ground truth is below `iou_bg` are background; the rest
//! are ignored.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    resolve_gt_kind, BBox, ClassSplit, Detection, EvalConfig, GroundTruthObject, GtKind, ImageId,
    PartitionLabel,
};
use crate::scalar::Scalar;

/// Intersection over union of two boxes.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let (ax0, ay0, ax1, ay1) = (a.x_min(), a.y_min(), a.x_max(), a.y_max());
    let (bx0, by0, bx1, by1) = (b.x_min(), b.y_min(), b.x_max(), b.y_max());
    let iw = ax1.min(bx1) - ax0.max(bx0);
    let ih = ay1.min(by1) - ay0.max(by0);
    if !(iw > T::zero() && ih > T::zero()) {
        return T::zero();
    }
    let inter = iw * ih;
    // Areas from the same corner arithmetic so identical boxes give exactly 1.
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    let union = area_a + area_b - inter;
    (inter / union).min(T::one())
}

/// Indices sorted by descending confidence, ties by position.
pub(crate) fn rank_by_confidence<T: Scalar>(confidences: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| {
        confidences[b].partial_cmp(&confidences[a]).unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Partition of one image's detections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// One label per detection, in input order.
    pub labels: Vec<PartitionLabel>,
    /// For each ground truth, the detection that claimed it.
    pub gt_matches: Vec<Option<usize>>,
}

/// Matches and partitions the detections of a single image.
pub fn match_and_partition<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
) -> Result<MatchResult> {
    let image = dets.first().map(|d| d.image_id).or_else(|| gts.first().map(|g| g.image_id));
    if let Some(image) = image {
        if dets.iter().any(|d| d.image_id != image) || gts.iter().any(|g| g.image_id != image) {
            return Err(Error::invalid("match_and_partition expects records from a single image"));
        }
    }
    let det_refs: Vec<&Detection<T>> = dets.iter().collect();
    let gt_refs: Vec<&GroundTruthObject<T>> = gts.iter().collect();
    Ok(partition_image(&det_refs, &gt_refs, split, cfg))
}

fn partition_image<T: Scalar>(
    dets: &[&Detection<T>],
    gts: &[&GroundTruthObject<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
) -> MatchResult {
    let confidences: Vec<T> = dets.iter().map(|d| d.confidence()).collect();
    let mut labels = vec![PartitionLabel::Ignored; dets.len()];
    let mut gt_matches = vec![None; gts.len()];
    for di in rank_by_confidence(&confidences) {
        let mut best: Option<(usize, T)> = None;
        let mut max_any = T::zero();
        for (gi, gt) in gts.iter().enumerate() {
            let v = iou(&dets[di].bbox, &gt.bbox);
            max_any = max_any.max(v);
            if gt_matches[gi].is_none() && v >= cfg.iou_match && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        labels[di] = match best {
            Some((gi, _)) => {
                gt_matches[gi] = Some(di);
                match resolve_gt_kind(gts[gi], split) {
                    GtKind::Id(_) => PartitionLabel::IdMatch(gi),
                    GtKind::Ood => PartitionLabel::OodMatch(gi),
                }
            }
            None if max_any < cfg.iou_bg => PartitionLabel::Background,
            None => PartitionLabel::Ignored,
        };
    }
    MatchResult { labels, gt_matches }
}

/// Detection and ground-truth indices per image, images in ascending id.
pub(crate) fn group_by_image<T>(
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
) -> BTreeMap<ImageId, (Vec<usize>, Vec<usize>)> {
    let mut groups: BTreeMap<ImageId, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry(d.image_id).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        groups.entry(g.image_id).or_default().1.push(i);
    }
    groups
}

/// Partitions a whole dataset. Returned labels are in detection order and
/// carry indices into the global `gts` slice.
pub fn partition_all<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
) -> Vec<PartitionLabel> {
    let groups: Vec<_> = group_by_image(dets, gts).into_values().collect();
    let per_image: Vec<(Vec<usize>, Vec<PartitionLabel>)> = groups
        .par_iter()
        .map(|(di, gi)| {
            let d: Vec<&Detection<T>> = di.iter().map(|&i| &dets[i]).collect();
            let g: Vec<&GroundTruthObject<T>> = gi.iter().map(|&i| &gts[i]).collect();
            let local = partition_image(&d, &g, split, cfg);
            let labels = local
                .labels
                .into_iter()
                .map(|l| match l {
                    PartitionLabel::IdMatch(k) => PartitionLabel::IdMatch(gi[k]),
                    PartitionLabel::OodMatch(k) => PartitionLabel::OodMatch(gi[k]),
                    other => other,
                })
                .collect();
            (di.clone(), labels)
        })
        .collect();
    let mut out = vec![PartitionLabel::Ignored; dets.len()];
    for (idx, labels) in per_image {
        for (i, l) in idx.into_iter().zip(labels) {
            out[i] = l;
        }
    }
    out
}
