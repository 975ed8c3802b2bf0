use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Detection, PartitionLabel};
use crate::scalar::{extended, Scalar};

/// Mann-Whitney AUROC: the fraction of (positive, negative) pairs in which
/// the positive scores higher, ties counted one half.
pub fn auroc<T: Scalar>(pos: &[T], neg: &[T]) -> Result<T> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::undefined("AUROC needs at least one positive and one negative score"));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::invalid("AUROC scores must not be NaN"));
    }
    let mut all: Vec<(T, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN filtered above"));

    // twice the U statistic, kept integral so the result is exact
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice_u += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    let pairs = 2 * pos.len() as u128 * neg.len() as u128;
    Ok(T::from_u128(twice_u).expect("count") / T::from_u128(pairs).expect("count"))
}

/// The four separation axes; an axis is `None` when one side is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct AurocAxes<T> {
    #[serde(with = "extended::option")]
    pub id_vs_ood: Option<T>,
    #[serde(with = "extended::option")]
    pub id_vs_non_id: Option<T>,
    #[serde(with = "extended::option")]
    pub ood_vs_bg: Option<T>,
    #[serde(with = "extended::option")]
    pub fg_vs_bg: Option<T>,
}

fn axis<T: Scalar>(pos: &[T], neg: &[T]) -> Result<Option<T>> {
    match auroc(pos, neg) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// AUROC along the four ID / OOD / BG separation axes. The first two use
/// the ID score, the last two objectness; ignored detections are excluded.
pub fn auroc_axes<T: Scalar>(dets: &[Detection<T>], labels: &[PartitionLabel]) -> Result<AurocAxes<T>> {
    if dets.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: dets.len(), got: labels.len() });
    }
    let mut id_score = [Vec::new(), Vec::new(), Vec::new()];
    let mut objectness = [Vec::new(), Vec::new(), Vec::new()];
    for (d, l) in dets.iter().zip(labels) {
        let bin = match l {
            PartitionLabel::IdMatch(_) => 0,
            PartitionLabel::OodMatch(_) => 1,
            PartitionLabel::Background => 2,
            PartitionLabel::Ignored => continue,
        };
        let s = d.id_score().ok_or_else(|| Error::invalid("auroc_axes needs decided detections"))?;
        id_score[bin].push(s);
        objectness[bin].push(d.objectness);
    }
    let [id_s, ood_s, bg_s] = &id_score;
    let [id_o, ood_o, bg_o] = &objectness;
    let non_id: Vec<T> = ood_s.iter().chain(bg_s).copied().collect();
    let fg: Vec<T> = id_o.iter().chain(ood_o).copied().collect();
    Ok(AurocAxes {
        id_vs_ood: axis(id_s, ood_s)?,
        id_vs_non_id: axis(id_s, &non_id)?,
        ood_vs_bg: axis(ood_o, bg_o)?,
        fg_vs_bg: axis(&fg, bg_o)?,
    })
}
