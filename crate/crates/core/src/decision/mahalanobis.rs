//! Class-conditional Gaussian scorer with a shared (pooled) covariance.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-class means and the Cholesky factor of the shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisModel<T> {
    dim: usize,
    means: Vec<Vec<T>>,
    /// Row-major lower-triangular factor `L` with `L L^T = Sigma + eps I`.
    chol: Vec<T>,
    covariance: Vec<T>,
}

impl<T: Scalar> MahalanobisModel<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    /// Regularized covariance, row-major.
    pub fn covariance(&self) -> &[T] {
        &self.covariance
    }

    /// Squared Mahalanobis distance of `x` to class mean `k`.
    pub fn squared_distance(&self, x: &[T], k: usize) -> T {
        let n = self.dim;
        let mut y = vec![T::zero(); n];
        // forward substitution L y = x - mu
        for i in 0..n {
            let mut acc = x[i] - self.means[k][i];
            for j in 0..i {
                acc = acc - self.chol[i * n + j] * y[j];
            }
            y[i] = acc / self.chol[i * n + i];
        }
        y.iter().fold(T::zero(), |a, &v| a + v * v)
    }
}

/// Fits per-class means and a pooled population covariance with ridge
/// `1e-6 * trace / dim`. Classes without samples are skipped.
pub fn fit_mahalanobis<T: Scalar>(per_class: &[Vec<Vec<T>>]) -> Result<MahalanobisModel<T>> {
    let total: usize = per_class.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(Error::invalid("mahalanobis fit needs at least 2 samples"));
    }
    let dim = per_class.iter().flatten().next().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(Error::invalid("feature vectors must be non-empty"));
    }
    for v in per_class.iter().flatten() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
    }

    let mut means = Vec::new();
    let mut cov = vec![T::zero(); dim * dim];
    for samples in per_class.iter().filter(|s| !s.is_empty()) {
        let count = T::from_count(samples.len());
        let mut mean = vec![T::zero(); dim];
        for v in samples {
            for (m, &x) in mean.iter_mut().zip(v) {
                *m = *m + x;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        for v in samples {
            for i in 0..dim {
                let di = v[i] - mean[i];
                for j in 0..=i {
                    cov[i * dim + j] = cov[i * dim + j] + di * (v[j] - mean[j]);
                }
            }
        }
        means.push(mean);
    }
    let n = T::from_count(total);
    for i in 0..dim {
        for j in 0..=i {
            let c = cov[i * dim + j] / n;
            cov[i * dim + j] = c;
            cov[j * dim + i] = c;
        }
    }
    let trace = (0..dim).fold(T::zero(), |a, i| a + cov[i * dim + i]);
    let eps = T::lit(1e-6) * trace / T::from_count(dim);
    for i in 0..dim {
        cov[i * dim + i] = cov[i * dim + i] + eps;
    }
    let chol = cholesky(&cov, dim).ok_or(Error::SingularCovariance)?;
    Ok(MahalanobisModel { dim, means, chol, covariance: cov })
}

fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Negative squared distance to the nearest class mean; larger is more ID.
pub fn mahalanobis_id_score<T: Scalar>(model: &MahalanobisModel<T>, features: &[T]) -> Result<T> {
    if features.len() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: features.len() });
    }
    let nearest = (0..model.means.len())
        .map(|k| model.squared_distance(features, k))
        .fold(T::infinity(), T::min);
    Ok(-nearest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Vec<Vec<Vec<f64>>> {
        vec![vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![2.0, 2.0]]]
    }

    #[test]
    fn square_fixture() {
        let model = fit_mahalanobis(&square()).unwrap();
        assert_eq!(model.means(), &[vec![1.0, 1.0]]);
        // population covariance diag(1, 1) plus ridge 1e-6
        let cov = model.covariance();
        assert!((cov[0] - (1.0 + 1e-6)).abs() < 1e-15 && cov[1] == 0.0 && cov[2] == 0.0);
        assert_eq!(mahalanobis_id_score(&model, &[1.0, 1.0]).unwrap(), 0.0);
        let s = mahalanobis_id_score(&model, &[2.0, 1.0]).unwrap();
        assert!((s + 1.0 / (1.0 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn pooled_over_classes() {
        let data = vec![
            vec![vec![0.0, 0.0], vec![2.0, 0.0]],
            vec![vec![10.0, 10.0], vec![10.0, 12.0]],
        ];
        let model = fit_mahalanobis(&data).unwrap();
        assert_eq!(model.means().len(), 2);
        // x deviations {-1,1,0,0}, y deviations {0,0,-1,1} over 4 samples
        let cov = model.covariance();
        let eps: f64 = 1e-6 * 1.0 / 2.0;
        assert!((cov[0] - (0.5 + eps)).abs() < 1e-15);
        assert!((cov[3] - (0.5 + eps)).abs() < 1e-15);
        assert_eq!(mahalanobis_id_score(&model, &[10.0, 11.0]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(fit_mahalanobis::<f64>(&[vec![vec![1.0]]]).is_err());
        assert!(matches!(
            fit_mahalanobis(&[vec![vec![1.0, 2.0], vec![1.0]]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            fit_mahalanobis(&[vec![vec![1.0, 2.0], vec![1.0, 2.0]]]),
            Err(Error::SingularCovariance)
        ));
        let model = fit_mahalanobis(&square()).unwrap();
        assert!(mahalanobis_id_score(&model, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn query_at_mean_scores_zero(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..12)) {
            let model = match fit_mahalanobis(&[pts]) { Ok(m) => m, Err(_) => return Ok(()) };
            let mean = model.means()[0].clone();
            prop_assert_eq!(mahalanobis_id_score(&model, &mean).unwrap(), 0.0);
        }

        #[test]
        fn non_increasing_along_rays(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 5..12),
            dir in prop::collection::vec(-1.0f64..1.0, 2),
        ) {
            let model = match fit_mahalanobis(&[pts]) { Ok(m) => m, Err(_) => return Ok(()) };
            let mu = model.means()[0].clone();
            let mut prev = 0.0;
            for step in 0..20 {
                let t = step as f64 * 0.5;
                let q: Vec<f64> = mu.iter().zip(&dir).map(|(m, d)| m + t * d).collect();
                let s = mahalanobis_id_score(&model, &q).unwrap();
                prop_assert!(s <= prev + 1e-9);
                prev = s;
            }
        }
    }
}
