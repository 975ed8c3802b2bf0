//! Per-image precomputation shared by the ranking metrics: the top-k
//! detections of each image and, per detection, the ground truths it
//! overlaps enough to ever be matched.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::decision::argmax;
use crate::error::{Error, Result};
use crate::model::{ClassSplit, Detection, EvalConfig, GroundTruthObject, GtKind, UNKNOWN_CLASS};
use crate::partition::{group_by_image, iou, rank_by_confidence};
use crate::scalar::Scalar;

pub(crate) struct ImageEval<T> {
    /// Global detection indices, top-k by descending confidence.
    ranked: Vec<usize>,
    /// Global ground-truth indices on this image.
    gts: Vec<usize>,
    /// `cand_start[r]..cand_start[r + 1]` indexes `cands` for ranked det `r`.
    cand_start: Vec<usize>,
    /// `(local gt, iou)` sorted by IoU descending, then gt index.
    cands: Vec<(usize, T)>,
}

impl<T: Scalar> ImageEval<T> {
    fn candidates(&self, r: usize) -> &[(usize, T)] {
        &self.cands[self.cand_start[r]..self.cand_start[r + 1]]
    }

    /// Greedy matching in rank order. `active(det)` selects participating
    /// detections and `eligible(det, gt)` the ground truths each may claim.
    /// Returns, per ranked detection, the claimed global gt index.
    fn greedy(
        &self,
        thresh: T,
        active: impl Fn(usize) -> bool,
        eligible: impl Fn(usize, usize) -> bool,
    ) -> Vec<Option<usize>> {
        let mut taken = vec![false; self.gts.len()];
        self.ranked
            .iter()
            .enumerate()
            .map(|(r, &d)| {
                if !active(d) {
                    return None;
                }
                for &(g, v) in self.candidates(r) {
                    if v < thresh {
                        break;
                    }
                    if !taken[g] && eligible(d, self.gts[g]) {
                        taken[g] = true;
                        return Some(self.gts[g]);
                    }
                }
                None
            })
            .collect()
    }
}

pub(crate) struct EvalContext<'a, T> {
    pub dets: &'a [Detection<T>],
    pub cfg: &'a EvalConfig<T>,
    pub confidences: Vec<T>,
    /// Known class of each detection's arg-max logit.
    pub argmax_class: Vec<u32>,
    pub gt_kind: Vec<GtKind>,
    pub images: Vec<ImageEval<T>>,
}

impl<'a, T: Scalar> EvalContext<'a, T> {
    pub fn new(
        dets: &'a [Detection<T>],
        gts: &[GroundTruthObject<T>],
        split: Option<&ClassSplit>,
        cfg: &'a EvalConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let confidences: Vec<T> = dets.par_iter().map(Detection::confidence).collect();
        // Without a split only the class-agnostic metrics are meaningful.
        let (argmax_class, gt_kind) = match split {
            Some(split) => {
                if let Some(d) = dets.iter().find(|d| d.logits.len() != split.num_classes()) {
                    return Err(Error::DimensionMismatch { expected: split.num_classes(), got: d.logits.len() });
                }
                (
                    dets.par_iter().map(|d| split.class_at(argmax(&d.logits))).collect(),
                    gts.iter().map(|g| split.resolve(g.dataset_class)).collect(),
                )
            }
            None => (Vec::new(), vec![GtKind::Ood; gts.len()]),
        };

        let min_iou = cfg.ar_iou_thresholds.iter().copied().fold(cfg.ap_iou, T::min);
        let groups: Vec<(Vec<usize>, Vec<usize>)> = group_by_image(dets, gts).into_values().collect();
        let images = groups
            .into_par_iter()
            .map(|(di, gi)| {
                let conf: Vec<T> = di.iter().map(|&i| confidences[i]).collect();
                let mut ranked: Vec<usize> = rank_by_confidence(&conf).into_iter().map(|r| di[r]).collect();
                ranked.truncate(cfg.k_per_image);
                let mut cand_start = Vec::with_capacity(ranked.len() + 1);
                let mut cands = Vec::new();
                cand_start.push(0);
                for &d in &ranked {
                    let first = cands.len();
                    for (local, &g) in gi.iter().enumerate() {
                        let v = iou(&dets[d].bbox, &gts[g].bbox);
                        if v >= min_iou {
                            cands.push((local, v));
                        }
                    }
                    cands[first..].sort_by(|a: &(usize, T), b| {
                        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
                    });
                    cand_start.push(cands.len());
                }
                ImageEval { ranked, gts: gi, cand_start, cands }
            })
            .collect();
        Ok(EvalContext { dets, cfg, confidences, argmax_class, gt_kind, images })
    }

    pub fn num_ood_gt(&self) -> usize {
        self.gt_kind.iter().filter(|k| **k == GtKind::Ood).count()
    }

    /// ID-mAP under per-detection class labels (`UNKNOWN_CLASS` excluded).
    pub fn id_map_with(&self, label: impl Fn(usize) -> u32 + Sync) -> Result<T> {
        let mut num_gt: BTreeMap<u32, usize> = BTreeMap::new();
        for k in &self.gt_kind {
            if let GtKind::Id(c) = k {
                *num_gt.entry(*c).or_default() += 1;
            }
        }
        if num_gt.is_empty() {
            return Err(Error::undefined("ID-mAP needs at least one ID ground-truth object"));
        }
        let thresh = self.cfg.ap_iou;
        let per_image: Vec<Vec<(u32, T, bool)>> = self
            .images
            .par_iter()
            .map(|img| {
                let matched = img.greedy(
                    thresh,
                    |d| label(d) != UNKNOWN_CLASS,
                    |d, g| self.gt_kind[g] == GtKind::Id(label(d)),
                );
                img.ranked
                    .iter()
                    .zip(matched)
                    .filter(|(&d, _)| label(d) != UNKNOWN_CLASS)
                    .map(|(&d, m)| (label(d), self.confidences[d], m.is_some()))
                    .collect()
            })
            .collect();
        let mut pools: BTreeMap<u32, Vec<(T, bool)>> = BTreeMap::new();
        for (class, conf, tp) in per_image.into_iter().flatten() {
            pools.entry(class).or_default().push((conf, tp));
        }
        let total = num_gt.iter().fold(T::zero(), |acc, (class, &n)| {
            let pool = pools.get(class).map(Vec::as_slice).unwrap_or(&[]);
            acc + super::average_precision(pool, n)
        });
        Ok(total / T::from_count(num_gt.len()))
    }

    /// Class-agnostic recall of OOD ground truth by detections for which
    /// `unknown(det)` holds.
    pub fn ood_recall_with(&self, unknown: impl Fn(usize) -> bool + Sync) -> Result<T> {
        let total = self.num_ood_gt();
        if total == 0 {
            return Err(Error::undefined("OOD recall needs at least one OOD ground-truth object"));
        }
        let matched: usize = self
            .images
            .par_iter()
            .map(|img| {
                img.greedy(self.cfg.ap_iou, &unknown, |_, g| self.gt_kind[g] == GtKind::Ood)
                    .iter()
                    .filter(|m| m.is_some())
                    .count()
            })
            .sum();
        Ok(T::from_count(matched) / T::from_count(total))
    }

    /// Mean class-agnostic recall over the configured IoU thresholds.
    pub fn ca_ar(&self) -> Result<T> {
        let total = self.gt_kind.len();
        if total == 0 {
            return Err(Error::undefined("CA-AR needs at least one ground-truth object"));
        }
        let thresholds = &self.cfg.ar_iou_thresholds;
        let sum = thresholds.iter().fold(T::zero(), |acc, &t| {
            let matched: usize = self
                .images
                .par_iter()
                .map(|img| img.greedy(t, |_| true, |_, _| true).iter().filter(|m| m.is_some()).count())
                .sum();
            acc + T::from_count(matched) / T::from_count(total)
        });
        Ok(sum / T::from_count(thresholds.len()))
    }
}
