use crate::scalar::Scalar;

/// Number of points on the interpolation grid `{0, 0.01, ..., 1}`.
pub const AP_GRID_POINTS: usize = 101;

/// 101-point interpolated average precision.
///
/// `ranked` holds `(confidence, is_true_positive)`; it is stably re-sorted
/// by descending confidence, so already-ranked input keeps its order. For
/// each grid recall `r` the interpolated precision is the best precision
/// over all cut points whose recall reaches `r` (zero when none does).
/// Returns zero when `num_gt` is zero.
pub fn average_precision<T: Scalar>(ranked: &[(T, bool)], num_gt: usize) -> T {
    if num_gt == 0 || ranked.is_empty() {
        return T::zero();
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].0.partial_cmp(&ranked[a].0).unwrap_or(std::cmp::Ordering::Equal));

    let mut tp_counts = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (n, &i) in order.iter().enumerate() {
        if ranked[i].1 {
            tp += 1;
        }
        tp_counts.push(tp);
        precision.push(T::from_count(tp) / T::from_count(n + 1));
    }
    // suffix maximum: best precision at or beyond each cut
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }

    let mut sum = T::zero();
    let mut k = 0;
    for step in 0..AP_GRID_POINTS {
        // recall tp/num_gt >= step/100, compared in integers
        while k < tp_counts.len() && tp_counts[k] * 100 < step * num_gt {
            k += 1;
        }
        if k == tp_counts.len() {
            break;
        }
        sum = sum + precision[k];
    }
    sum / T::from_count(AP_GRID_POINTS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(average_precision(&[(0.9, true)], 1), 1.0);
        assert_eq!(average_precision::<f64>(&[], 3), 0.0);
        let ap = average_precision(&[(0.9f64, true), (0.8, false), (0.7, true)], 2);
        let expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap - expected).abs() < 1e-15);
        assert!((ap - 0.83498).abs() < 1e-5);
    }

    #[test]
    fn unsorted_input_is_ranked() {
        let a = average_precision(&[(0.7, true), (0.9, true), (0.8, false)], 2);
        let b = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        assert_eq!(a, b);
    }

    #[test]
    fn all_false_positives() {
        assert_eq!(average_precision(&[(0.9, false), (0.1, false)], 2), 0.0);
    }

    #[test]
    fn partial_recall() {
        // one of two GT found at rank 1: recall 0.5 reached at grid points 0..=50
        let ap = average_precision(&[(0.9f64, true)], 2);
        assert!((ap - 51.0 / 101.0).abs() < 1e-15);
    }
}
