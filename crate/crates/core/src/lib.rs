//! Evaluation toolkit for open-set object detection and discovery.
//!
//! Detections carry a box, classifier logits over the known classes and a
//! class-agnostic objectness. The [`decision`] module turns logits into an
//! ID score (energy, MSP, max-logit or Mahalanobis), a class (a known id,
//! or [`UNKNOWN_CLASS`] when the score does not exceed the ID threshold)
//! and a confidence `objectness * max softmax`. [`partition`] bins every
//! detection into ID / OOD / background by IoU against mixed ground truth,
//! and [`metrics`] computes closed- and open-set ID-mAP, class-agnostic
//! AR, four AUROC separation axes, OOD recall at k and AOSP.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below name the common instantiations.

pub mod cli;
pub mod decision;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod scalar;
pub mod synth;

pub use decision::{
    decide, decide_all, energy_id_score, fit_mahalanobis, mahalanobis_id_score, max_logit_id_score,
    msp_id_score, softmax, IdScorer, MahalanobisModel,
};
pub use error::{Error, Result};
pub use metrics::{
    aosp, auroc, auroc_axes, average_precision, ca_ar, evaluate, evaluate_with_workers, histograms, id_map,
    ood_recall_at_k, AospCurvePoint, AospResult, AurocAxes, EvalReport, MapMode,
};
pub use model::{
    resolve_gt_kind, BBox, ClassSplit, DatasetBundle, Decision, Detection, EvalConfig, GroundTruthObject, GtKind,
    ImageId, ImageInfo, OodAlgorithm, PartitionLabel, UNKNOWN_CLASS,
};
pub use partition::{iou, match_and_partition, partition_all, MatchResult};
pub use scalar::Scalar;
pub use synth::{generate, SynthConfig};

pub type BBox64 = BBox<f64>;
pub type BBox32 = BBox<f32>;
pub type Detection64 = Detection<f64>;
pub type Detection32 = Detection<f32>;
pub type GroundTruth64 = GroundTruthObject<f64>;
pub type GroundTruth32 = GroundTruthObject<f32>;
pub type EvalConfig64 = EvalConfig<f64>;
pub type EvalConfig32 = EvalConfig<f32>;
pub type Bundle64 = DatasetBundle<f64>;
pub type Bundle32 = DatasetBundle<f32>;
pub type Report64 = EvalReport<f64>;
pub type Report32 = EvalReport<f32>;
pub type Mahalanobis64 = MahalanobisModel<f64>;
pub type Mahalanobis32 = MahalanobisModel<f32>;
