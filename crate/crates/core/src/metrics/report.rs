use serde::Serialize;

use super::aosp::{aosp_in, AospCurvePoint};
use super::auroc::{auroc_axes, AurocAxes};
use super::context::EvalContext;
use super::histogram::{histograms, Histograms};
use crate::decision::{decide_all, MahalanobisModel};
use crate::error::{Error, Result};
use crate::model::{DatasetBundle, EvalConfig, GtKind, PartitionLabel, UNKNOWN_CLASS};
use crate::partition::partition_all;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetCounts {
    pub images: usize,
    pub detections: usize,
    pub id_gt: usize,
    pub ood_gt: usize,
    pub id_match: usize,
    pub ood_match: usize,
    pub background: usize,
    pub ignored: usize,
}

/// Full evaluation output, serialized as the report document.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub aosp: T,
    /// ID-mAP with every detection treated as known.
    pub id_map_closed: T,
    /// ID-mAP at the configured threshold.
    pub id_map_open: T,
    /// OOD recall at k at the configured threshold.
    pub ood_recall: T,
    pub ca_ar: T,
    #[serde(flatten)]
    pub auroc: AurocAxes<T>,
    pub curve: Vec<AospCurvePoint<T>>,
    pub histograms: Histograms<T>,
    pub counts: DatasetCounts,
    pub config: EvalConfig<T>,
}

/// Evaluates a bundle on the current rayon pool.
pub fn evaluate<T: Scalar>(bundle: &DatasetBundle<T>, model: Option<&MahalanobisModel<T>>) -> Result<EvalReport<T>> {
    bundle.validate()?;
    let cfg = &bundle.cfg;
    let dets = decide_all(&bundle.dets, &bundle.split, cfg, model)?;
    let labels = partition_all(&dets, &bundle.gts, &bundle.split, cfg);

    let ctx = EvalContext::new(&dets, &bundle.gts, Some(&bundle.split), cfg)?;
    let id_map_closed = ctx.id_map_with(|d| ctx.argmax_class[d])?;
    let decided: Vec<u32> = dets.iter().map(|d| d.decided_class().unwrap_or(UNKNOWN_CLASS)).collect();
    let id_map_open = ctx.id_map_with(|d| decided[d])?;
    let ood_recall = ctx.ood_recall_with(|d| decided[d] == UNKNOWN_CLASS)?;
    let ca_ar = ctx.ca_ar()?;
    let aosp = aosp_in(&ctx)?;

    let auroc = auroc_axes(&dets, &labels)?;
    let histograms = histograms(&dets, &labels, cfg.hist_bins)?;

    let count = |f: fn(&PartitionLabel) -> bool| labels.iter().filter(|l| f(l)).count();
    let ood_gt = ctx.num_ood_gt();
    let counts = DatasetCounts {
        images: bundle.images.len(),
        detections: dets.len(),
        id_gt: ctx.gt_kind.iter().filter(|k| matches!(k, GtKind::Id(_))).count(),
        ood_gt,
        id_match: count(|l| matches!(l, PartitionLabel::IdMatch(_))),
        ood_match: count(|l| matches!(l, PartitionLabel::OodMatch(_))),
        background: count(|l| matches!(l, PartitionLabel::Background)),
        ignored: count(|l| matches!(l, PartitionLabel::Ignored)),
    };
    Ok(EvalReport {
        aosp: aosp.aosp,
        id_map_closed,
        id_map_open,
        ood_recall,
        ca_ar,
        auroc,
        curve: aosp.curve,
        histograms,
        counts,
        config: cfg.clone(),
    })
}

/// Evaluates on a dedicated pool of `workers` threads (0 means the rayon
/// default). Output does not depend on the worker count.
pub fn evaluate_with_workers<T: Scalar>(
    bundle: &DatasetBundle<T>,
    model: Option<&MahalanobisModel<T>>,
    workers: usize,
) -> Result<EvalReport<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    pool.install(|| evaluate(bundle, model))
}
