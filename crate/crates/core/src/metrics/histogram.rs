use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Detection, PartitionLabel};
use crate::scalar::Scalar;

/// Equal-width histogram over `[min, max]` with counts per partition bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Histogram<T> {
    pub min: T,
    pub max: T,
    pub bins: usize,
    pub id_match: Vec<u64>,
    pub ood_match: Vec<u64>,
    pub background: Vec<u64>,
}

impl<T: Scalar> Histogram<T> {
    /// `groups` holds the ID, OOD and background samples. All values equal
    /// collapse to a single bin.
    pub fn build(groups: [&[T]; 3], bins: usize) -> Self {
        let all = groups.iter().flat_map(|g| g.iter().copied());
        let (min, max) = all.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let (min, max, bins) = if min > max {
            (T::zero(), T::zero(), bins)
        } else if min == max {
            (min, max, 1)
        } else {
            (min, max, bins)
        };
        let width = max - min;
        let index = |v: T| -> usize {
            if bins == 1 {
                return 0;
            }
            let i = ((v - min) / width * T::from_count(bins)).floor().to_usize().unwrap_or(0);
            i.min(bins - 1)
        };
        let count = |g: &[T]| {
            let mut c = vec![0u64; bins];
            for &v in g {
                c[index(v)] += 1;
            }
            c
        };
        Histogram {
            min,
            max,
            bins,
            id_match: count(groups[0]),
            ood_match: count(groups[1]),
            background: count(groups[2]),
        }
    }

    /// Left edges followed by the final right edge.
    pub fn edges(&self) -> Vec<T> {
        let w = (self.max - self.min) / T::from_count(self.bins);
        (0..=self.bins).map(|i| self.min + w * T::from_count(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Histograms<T> {
    pub id_score: Histogram<T>,
    pub objectness: Histogram<T>,
}

/// ID-score and objectness histograms for the ID, OOD and background bins.
pub fn histograms<T: Scalar>(
    dets: &[Detection<T>],
    labels: &[PartitionLabel],
    bins: usize,
) -> Result<Histograms<T>> {
    if dets.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: dets.len(), got: labels.len() });
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut scores: [Vec<T>; 3] = Default::default();
    let mut objectness: [Vec<T>; 3] = Default::default();
    for (d, l) in dets.iter().zip(labels) {
        let bin = match l {
            PartitionLabel::IdMatch(_) => 0,
            PartitionLabel::OodMatch(_) => 1,
            PartitionLabel::Background => 2,
            PartitionLabel::Ignored => continue,
        };
        scores[bin].push(d.id_score().ok_or_else(|| Error::invalid("histograms need decided detections"))?);
        objectness[bin].push(d.objectness);
    }
    Ok(Histograms {
        id_score: Histogram::build([&scores[0], &scores[1], &scores[2]], bins),
        objectness: Histogram::build([&objectness[0], &objectness[1], &objectness[2]], bins),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin() {
        let h = Histogram::build([&[0.2][..], &[][..], &[0.9][..]], 1);
        assert_eq!(h.id_match, vec![1]);
        assert_eq!(h.background, vec![1]);
        assert_eq!(h.ood_match, vec![0]);
    }

    #[test]
    fn identical_values_collapse() {
        let h = Histogram::build([&[3.0, 3.0][..], &[3.0][..], &[][..]], 10);
        assert_eq!(h.bins, 1);
        assert_eq!(h.id_match, vec![2]);
        assert_eq!(h.ood_match, vec![1]);
    }

    #[test]
    fn empty_partitions_are_zero() {
        let h = Histogram::<f64>::build([&[][..], &[][..], &[][..]], 4);
        assert_eq!(h.id_match, vec![0; 4]);
        let h = Histogram::build([&[1.0, 2.0][..], &[][..], &[][..]], 4);
        assert_eq!(h.ood_match, vec![0; 4]);
        assert_eq!(h.id_match, vec![1, 0, 0, 1]);
    }

    #[test]
    fn ten_values_five_bins() {
        let id = [0.05, 0.15, 0.95, 0.5];
        let ood = [0.33, 0.41, 0.0];
        let bg = [1.0, 0.62, 0.77];
        let h = Histogram::build([&id[..], &ood[..], &bg[..]], 5);
        // scan-and-count against explicit edges [0, .2, .4, .6, .8, 1]
        let edges = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let oracle = |vals: &[f64]| -> Vec<u64> {
            (0..5)
                .map(|b| {
                    vals.iter()
                        .filter(|&&v| v >= edges[b] && (v < edges[b + 1] || (b == 4 && v <= edges[5])))
                        .count() as u64
                })
                .collect()
        };
        assert_eq!(h.id_match, oracle(&id));
        assert_eq!(h.ood_match, oracle(&ood));
        assert_eq!(h.background, oracle(&bg));
        assert_eq!(h.edges().len(), 6);
    }
}
