//! Average open-set precision: ID-mAP averaged over target OOD-recall
//! levels, each taken at the smallest ID threshold reaching that recall.

use serde::Serialize;

use super::context::EvalContext;
use crate::error::{Error, Result};
use crate::model::UNKNOWN_CLASS;
use crate::scalar::{extended, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct AospCurvePoint<T> {
    pub target_recall: T,
    /// Smallest candidate threshold reaching the target, `None` when the
    /// target is beyond the detector's maximum OOD recall.
    #[serde(with = "extended::option")]
    pub threshold: Option<T>,
    /// OOD recall at `threshold`, or the maximum achievable recall when
    /// the target is unreachable.
    pub achieved_ood_recall: T,
    pub id_map: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct AospResult<T> {
    pub aosp: T,
    pub curve: Vec<AospCurvePoint<T>>,
}

/// Candidate thresholds: `-inf`, every distinct ID score, `+inf`.
pub(crate) fn candidate_thresholds<T: Scalar>(id_scores: &[T]) -> Vec<T> {
    let mut c: Vec<T> = id_scores.to_vec();
    c.push(T::neg_infinity());
    c.push(T::infinity());
    c.sort_by(|a, b| a.partial_cmp(b).expect("ID scores are not NaN"));
    c.dedup();
    c
}

pub(crate) fn aosp_in<T: Scalar>(ctx: &EvalContext<'_, T>) -> Result<AospResult<T>> {
    let id_scores = ctx
        .dets
        .iter()
        .map(|d| d.id_score().filter(|s| !s.is_nan()))
        .collect::<Option<Vec<T>>>()
        .ok_or_else(|| Error::invalid("AOSP needs an ID score on every detection"))?;
    if ctx.num_ood_gt() == 0 {
        return Err(Error::undefined("AOSP needs at least one OOD ground-truth object"));
    }
    let thresholds = candidate_thresholds(&id_scores);
    let n = thresholds.len();

    // Raising the threshold only grows the unknown set, and greedy matching
    // never loses matches when detections are added, so recall is
    // non-decreasing along `thresholds`.
    let mut recall_memo: Vec<Option<T>> = vec![None; n];
    let mut recall_at = |i: usize| -> Result<T> {
        if let Some(r) = recall_memo[i] {
            return Ok(r);
        }
        let t = thresholds[i];
        let r = ctx.ood_recall_with(|d| id_scores[d] <= t)?;
        recall_memo[i] = Some(r);
        Ok(r)
    };
    let max_recall = recall_at(n - 1)?;

    let mut map_memo: Vec<Option<T>> = vec![None; n];
    let mut curve = Vec::with_capacity(ctx.cfg.recall_grid.len());
    for &target in &ctx.cfg.recall_grid {
        if max_recall < target {
            curve.push(AospCurvePoint {
                target_recall: target,
                threshold: None,
                achieved_ood_recall: max_recall,
                id_map: T::zero(),
            });
            continue;
        }
        let (mut lo, mut hi) = (0, n - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if recall_at(mid)? >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let t = thresholds[lo];
        let id_map = match map_memo[lo] {
            Some(v) => v,
            None => {
                let v = ctx.id_map_with(|d| if id_scores[d] > t { ctx.argmax_class[d] } else { UNKNOWN_CLASS })?;
                map_memo[lo] = Some(v);
                v
            }
        };
        curve.push(AospCurvePoint {
            target_recall: target,
            threshold: Some(t),
            achieved_ood_recall: recall_at(lo)?,
            id_map,
        });
    }
    let sum = curve.iter().fold(T::zero(), |a, p| a + p.id_map);
    Ok(AospResult { aosp: sum / T::from_count(curve.len()), curve })
}
