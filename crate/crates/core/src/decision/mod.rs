//! Open-set classifier: post-hoc ID scores over classifier logits, the
//! ID threshold rule and the fused confidence `objectness * max softmax`.

mod mahalanobis;

pub use mahalanobis::{fit_mahalanobis, mahalanobis_id_score, MahalanobisModel};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ClassSplit, Decision, Detection, EvalConfig, OodAlgorithm, UNKNOWN_CLASS};
use crate::scalar::Scalar;

fn check_logits<T: Scalar>(logits: &[T]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logit vector"));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    Ok(())
}

fn max_of<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax<T: Scalar>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    check_logits(logits)?;
    let m = max_of(logits);
    let exps: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Largest softmax probability, `1 / sum_j exp(l_j - max)`.
///
/// Callers guarantee a non-empty finite vector.
pub(crate) fn max_softmax<T: Scalar>(logits: &[T]) -> T {
    debug_assert!(!logits.is_empty());
    let m = max_of(logits);
    let sum = logits.iter().fold(T::zero(), |acc, &l| acc + (l - m).exp());
    T::one() / sum
}

/// Negative free energy, `T * log sum_j exp(l_j / T)`.
pub fn energy_id_score<T: Scalar>(logits: &[T], temperature: T) -> Result<T> {
    check_logits(logits)?;
    if !(temperature > T::zero() && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let m = max_of(logits);
    let sum = logits.iter().fold(T::zero(), |acc, &l| acc + ((l - m) / temperature).exp());
    Ok(m + temperature * sum.ln())
}

/// Maximum softmax probability.
pub fn msp_id_score<T: Scalar>(logits: &[T]) -> Result<T> {
    check_logits(logits)?;
    Ok(max_softmax(logits))
}

pub fn max_logit_id_score<T: Scalar>(logits: &[T]) -> Result<T> {
    check_logits(logits)?;
    Ok(max_of(logits))
}

/// A configured ID scoring function.
#[derive(Debug, Clone, Copy)]
pub enum IdScorer<'a, T> {
    Energy { temperature: T },
    Msp,
    MaxLogit,
    Mahalanobis(&'a MahalanobisModel<T>),
}

impl<'a, T: Scalar> IdScorer<'a, T> {
    pub fn from_config(cfg: &EvalConfig<T>, model: Option<&'a MahalanobisModel<T>>) -> Result<Self> {
        Ok(match cfg.ood_algorithm {
            OodAlgorithm::Energy => IdScorer::Energy { temperature: cfg.temperature },
            OodAlgorithm::Msp => IdScorer::Msp,
            OodAlgorithm::MaxLogit => IdScorer::MaxLogit,
            OodAlgorithm::Mahalanobis => IdScorer::Mahalanobis(
                model.ok_or_else(|| Error::invalid("mahalanobis scoring requires a fitted model"))?,
            ),
        })
    }

    pub fn score(&self, det: &Detection<T>) -> Result<T> {
        match *self {
            IdScorer::Energy { temperature } => energy_id_score(&det.logits, temperature),
            IdScorer::Msp => msp_id_score(&det.logits),
            IdScorer::MaxLogit => max_logit_id_score(&det.logits),
            IdScorer::Mahalanobis(model) => {
                let features = det
                    .features
                    .as_deref()
                    .ok_or_else(|| Error::invalid("mahalanobis scoring requires detection features"))?;
                mahalanobis_id_score(model, features)
            }
        }
    }
}

/// Applies the open-set decision with an explicit scorer and threshold.
pub fn decide_with<T: Scalar>(
    det: &Detection<T>,
    split: &ClassSplit,
    scorer: &IdScorer<'_, T>,
    id_thresh: T,
) -> Result<Detection<T>> {
    if det.logits.len() != split.num_classes() {
        return Err(Error::DimensionMismatch { expected: split.num_classes(), got: det.logits.len() });
    }
    check_logits(&det.logits)?;
    if !(det.objectness >= T::zero() && det.objectness <= T::one()) {
        return Err(Error::invalid(format!("objectness {} outside [0, 1]", det.objectness)));
    }
    let id_score = scorer.score(det)?;
    if id_score.is_nan() {
        return Err(Error::invalid("ID score is NaN"));
    }
    let class = if id_score > id_thresh { split.class_at(argmax(&det.logits)) } else { UNKNOWN_CLASS };
    let confidence = det.objectness * max_softmax(&det.logits);
    Ok(Detection { decision: Some(Decision { class, confidence, id_score }), ..det.clone() })
}

/// Decides one detection under `cfg`; `model` is only consulted for the
/// Mahalanobis algorithm.
pub fn decide<T: Scalar>(
    det: &Detection<T>,
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
    model: Option<&MahalanobisModel<T>>,
) -> Result<Detection<T>> {
    let scorer = IdScorer::from_config(cfg, model)?;
    decide_with(det, split, &scorer, cfg.id_thresh)
}

/// Decides every detection, preserving order.
pub fn decide_all<T: Scalar>(
    dets: &[Detection<T>],
    split: &ClassSplit,
    cfg: &EvalConfig<T>,
    model: Option<&MahalanobisModel<T>>,
) -> Result<Vec<Detection<T>>> {
    let scorer = IdScorer::from_config(cfg, model)?;
    dets.par_iter().map(|d| decide_with(d, split, &scorer, cfg.id_thresh)).collect()
}
