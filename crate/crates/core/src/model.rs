//! Domain types shared by every module: boxes, detections, ground truth,
//! the known/unknown class split and the evaluation configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decision::max_softmax;
use crate::error::{Error, Result};
use crate::scalar::{extended, Scalar};

/// Class id assigned to detections deemed unknown.
pub const UNKNOWN_CLASS: u32 = 0;

/// Image identifier, as used by COCO-style annotation files.
pub type ImageId = u64;

/// Axis-aligned box in center format, image pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    /// Builds a center-format box, rejecting degenerate or non-finite input.
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if !(w > T::zero() && h > T::zero()) {
            return Err(Error::invalid(format!("degenerate box: w={w}, h={h}")));
        }
        Ok(BBox { cx, cy, w, h })
    }

    /// Converts from COCO corner format `[x_min, y_min, w, h]`.
    pub fn from_corner(x: T, y: T, w: T, h: T) -> Result<Self> {
        let two = T::lit(2.0);
        Self::new(x + w / two, y + h / two, w, h)
    }

    /// Back to COCO corner format `[x_min, y_min, w, h]`.
    pub fn to_corner(&self) -> [T; 4] {
        [self.x_min(), self.y_min(), self.w, self.h]
    }

    pub fn x_min(&self) -> T {
        self.cx - self.w / T::lit(2.0)
    }
    pub fn y_min(&self) -> T {
        self.cy - self.h / T::lit(2.0)
    }
    pub fn x_max(&self) -> T {
        self.cx + self.w / T::lit(2.0)
    }
    pub fn y_max(&self) -> T {
        self.cy + self.h / T::lit(2.0)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// Scales every coordinate by `s`.
    pub fn scaled(&self, s: T) -> Self {
        BBox { cx: self.cx * s, cy: self.cy * s, w: self.w * s, h: self.h * s }
    }
}

/// Output of the open-set decision for one detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision<T> {
    /// A member of the known set, or [`UNKNOWN_CLASS`].
    pub class: u32,
    /// Objectness times max softmax, in `[0, 1]`.
    pub confidence: T,
    /// Larger means more in-distribution.
    pub id_score: T,
}

/// One predicted region.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub image_id: ImageId,
    pub bbox: BBox<T>,
    /// One logit per known class, in split order.
    pub logits: Vec<T>,
    pub objectness: T,
    /// Optional embedding used by the Mahalanobis scorer.
    pub features: Option<Vec<T>>,
    pub decision: Option<Decision<T>>,
}

impl<T: Scalar> Detection<T> {
    pub fn new(image_id: ImageId, bbox: BBox<T>, logits: Vec<T>, objectness: T) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid("detection has no logits"));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        if !(objectness >= T::zero() && objectness <= T::one()) {
            return Err(Error::invalid(format!("objectness {objectness} outside [0, 1]")));
        }
        Ok(Detection { image_id, bbox, logits, objectness, features: None, decision: None })
    }

    pub fn with_features(mut self, features: Vec<T>) -> Self {
        self.features = Some(features);
        self
    }

    /// Fused confidence used for ranking: the decided confidence when
    /// present, otherwise objectness times max softmax (identical values).
    pub fn confidence(&self) -> T {
        match &self.decision {
            Some(d) => d.confidence,
            None => self.objectness * max_softmax(&self.logits),
        }
    }

    pub fn id_score(&self) -> Option<T> {
        self.decision.map(|d| d.id_score)
    }

    pub fn decided_class(&self) -> Option<u32> {
        self.decision.map(|d| d.class)
    }
}

/// One annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject<T> {
    /// Annotation id from the source file.
    pub id: u64,
    pub image_id: ImageId,
    pub bbox: BBox<T>,
    pub dataset_class: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
}

/// Whether a ground-truth object belongs to the known or the unknown set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GtKind {
    Id(u32),
    Ood,
}

/// Known class set and optional dataset-class aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSplit", into = "RawSplit")]
pub struct ClassSplit {
    id_classes: Vec<u32>,
    alias_map: BTreeMap<u32, u32>,
}

#[derive(Serialize, Deserialize)]
struct RawSplit {
    id_classes: Vec<u32>,
    #[serde(default)]
    alias_map: BTreeMap<u32, u32>,
}

impl TryFrom<RawSplit> for ClassSplit {
    type Error = Error;
    fn try_from(raw: RawSplit) -> Result<Self> {
        ClassSplit::with_aliases(raw.id_classes, raw.alias_map)
    }
}

impl From<ClassSplit> for RawSplit {
    fn from(s: ClassSplit) -> Self {
        RawSplit { id_classes: s.id_classes, alias_map: s.alias_map }
    }
}

impl ClassSplit {
    pub fn new(id_classes: Vec<u32>) -> Result<Self> {
        Self::with_aliases(id_classes, BTreeMap::new())
    }

    pub fn with_aliases(id_classes: Vec<u32>, alias_map: BTreeMap<u32, u32>) -> Result<Self> {
        if id_classes.is_empty() {
            return Err(Error::invalid("id_classes must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for &c in &id_classes {
            if c == 0 {
                return Err(Error::invalid("class id 0 is reserved for unknown"));
            }
            if !seen.insert(c) {
                return Err(Error::invalid(format!("duplicate id class {c}")));
            }
        }
        if let Some((from, to)) = alias_map.iter().find(|(_, to)| !seen.contains(to)) {
            return Err(Error::invalid(format!("alias {from} -> {to} targets a class outside id_classes")));
        }
        Ok(ClassSplit { id_classes, alias_map })
    }

    pub fn id_classes(&self) -> &[u32] {
        &self.id_classes
    }

    pub fn alias_map(&self) -> &BTreeMap<u32, u32> {
        &self.alias_map
    }

    /// Number of known classes, `C`.
    pub fn num_classes(&self) -> usize {
        self.id_classes.len()
    }

    /// Known class id for logit index `idx`.
    pub fn class_at(&self, idx: usize) -> u32 {
        self.id_classes[idx]
    }

    pub fn index_of(&self, class: u32) -> Option<usize> {
        self.id_classes.iter().position(|&c| c == class)
    }

    /// Resolves a dataset class to ID (after alias lookup) or OOD.
    pub fn resolve(&self, dataset_class: u32) -> GtKind {
        if self.id_classes.contains(&dataset_class) {
            GtKind::Id(dataset_class)
        } else if let Some(&mapped) = self.alias_map.get(&dataset_class) {
            GtKind::Id(mapped)
        } else {
            GtKind::Ood
        }
    }
}

/// Resolves the kind of a ground-truth object under `split`.
pub fn resolve_gt_kind<T>(gt: &GroundTruthObject<T>, split: &ClassSplit) -> GtKind {
    split.resolve(gt.dataset_class)
}

/// Outcome of partitioning one detection against mixed ground truth.
/// Indices refer to the ground-truth slice handed to the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionLabel {
    IdMatch(usize),
    OodMatch(usize),
    Background,
    Ignored,
}

impl PartitionLabel {
    pub fn matched_gt(&self) -> Option<usize> {
        match *self {
            PartitionLabel::IdMatch(g) | PartitionLabel::OodMatch(g) => Some(g),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PartitionLabel::IdMatch(_) => "id_match",
            PartitionLabel::OodMatch(_) => "ood_match",
            PartitionLabel::Background => "background",
            PartitionLabel::Ignored => "ignored",
        }
    }
}

/// Post-hoc ID scoring algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodAlgorithm {
    #[default]
    Energy,
    Msp,
    MaxLogit,
    Mahalanobis,
}

impl fmt::Display for OodAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OodAlgorithm::Energy => "energy",
            OodAlgorithm::Msp => "msp",
            OodAlgorithm::MaxLogit => "max_logit",
            OodAlgorithm::Mahalanobis => "mahalanobis",
        })
    }
}

impl std::str::FromStr for OodAlgorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(OodAlgorithm::Energy),
            "msp" => Ok(OodAlgorithm::Msp),
            "max_logit" => Ok(OodAlgorithm::MaxLogit),
            "mahalanobis" => Ok(OodAlgorithm::Mahalanobis),
            other => Err(Error::invalid(format!("unknown OOD algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalConfig<T> {
    /// Energy temperature.
    pub temperature: T,
    /// Detections with an ID score strictly above this are kept as ID.
    #[serde(with = "extended")]
    pub id_thresh: T,
    pub k_per_image: usize,
    pub iou_match: T,
    pub iou_bg: T,
    pub ar_iou_thresholds: Vec<T>,
    pub ap_iou: T,
    pub ood_algorithm: OodAlgorithm,
    pub recall_grid: Vec<T>,
    pub hist_bins: usize,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        EvalConfig {
            temperature: T::one(),
            id_thresh: T::zero(),
            k_per_image: 100,
            iou_match: T::lit(0.5),
            iou_bg: T::lit(0.2),
            ar_iou_thresholds: (0..10).map(|i| T::lit((50 + 5 * i) as f64 / 100.0)).collect(),
            ap_iou: T::lit(0.5),
            ood_algorithm: OodAlgorithm::Energy,
            recall_grid: (0..=20).map(|i| T::lit(i as f64 / 20.0)).collect(),
            hist_bins: 50,
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > T::zero() && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive and finite"));
        }
        if self.id_thresh.is_nan() {
            return Err(Error::invalid("id_thresh must not be NaN"));
        }
        if self.k_per_image == 0 {
            return Err(Error::invalid("k_per_image must be positive"));
        }
        if !(T::zero() <= self.iou_bg && self.iou_bg < self.iou_match && self.iou_match <= T::one()) {
            return Err(Error::invalid("require 0 <= iou_bg < iou_match <= 1"));
        }
        if !(self.ap_iou > T::zero() && self.ap_iou <= T::one()) {
            return Err(Error::invalid("ap_iou must lie in (0, 1]"));
        }
        if self.ar_iou_thresholds.is_empty()
            || self.ar_iou_thresholds.iter().any(|&t| !(t > T::zero() && t <= T::one()))
        {
            return Err(Error::invalid("ar_iou_thresholds must be non-empty and within (0, 1]"));
        }
        let in_unit = |r: &T| *r >= T::zero() && *r <= T::one();
        if self.recall_grid.is_empty()
            || !self.recall_grid.iter().all(in_unit)
            || self.recall_grid.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::invalid("recall_grid must be non-empty, sorted and within [0, 1]"));
        }
        if self.hist_bins == 0 {
            return Err(Error::invalid("hist_bins must be positive"));
        }
        Ok(())
    }
}

/// Everything needed for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle<T> {
    pub images: Vec<ImageInfo>,
    pub gts: Vec<GroundTruthObject<T>>,
    pub dets: Vec<Detection<T>>,
    pub split: ClassSplit,
    pub cfg: EvalConfig<T>,
}

impl<T: Scalar> DatasetBundle<T> {
    /// Checks cross-record consistency: known image ids, uniform logit
    /// width equal to the number of known classes.
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.id) {
                return Err(Error::invalid(format!("duplicate image id {}", img.id)));
            }
        }
        if let Some(g) = self.gts.iter().find(|g| !ids.contains(&g.image_id)) {
            return Err(Error::invalid(format!("annotation {} references unknown image {}", g.id, g.image_id)));
        }
        let c = self.split.num_classes();
        for (i, d) in self.dets.iter().enumerate() {
            if !ids.contains(&d.image_id) {
                return Err(Error::invalid(format!("detection {i} references unknown image {}", d.image_id)));
            }
            if d.logits.len() != c {
                return Err(Error::invalid(format!(
                    "detection {i} has {} logits but the split has {c} known classes",
                    d.logits.len()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_membership_and_aliases() {
        let split = ClassSplit::new(vec![1, 2, 3]).unwrap();
        assert_eq!(split.resolve(3), GtKind::Id(3));
        let split = ClassSplit::new((1..=20).collect()).unwrap();
        assert_eq!(split.resolve(77), GtKind::Ood);
        let aliased =
            ClassSplit::with_aliases((1..=20).collect(), BTreeMap::from([(200, 5)])).unwrap();
        assert_eq!(aliased.resolve(200), GtKind::Id(5));
    }

    #[test]
    fn split_validation() {
        assert!(ClassSplit::new(vec![]).is_err());
        assert!(ClassSplit::new(vec![1, 1]).is_err());
        assert!(ClassSplit::new(vec![0, 1]).is_err());
        assert!(ClassSplit::with_aliases(vec![1, 2], BTreeMap::from([(9, 3)])).is_err());
    }

    #[test]
    fn split_json_rejects_bad_alias() {
        let ok: ClassSplit = serde_json::from_str(r#"{"id_classes":[1,2],"alias_map":{"7":2}}"#).unwrap();
        assert_eq!(ok.resolve(7), GtKind::Id(2));
        assert!(serde_json::from_str::<ClassSplit>(r#"{"id_classes":[1],"alias_map":{"7":2}}"#).is_err());
    }

    #[test]
    fn corner_conversion() {
        let b = BBox::<f64>::from_corner(0.0, 0.0, 2.0, 2.0).unwrap();
        assert_eq!(b, BBox { cx: 1.0, cy: 1.0, w: 2.0, h: 2.0 });
        assert_eq!(b.to_corner(), [0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::<f64>::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(BBox::<f64>::new(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(BBox::<f64>::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn default_config_grids() {
        let cfg = EvalConfig::<f64>::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.recall_grid.len(), 21);
        assert_eq!(cfg.ar_iou_thresholds.len(), 10);
        assert_eq!(cfg.ar_iou_thresholds[4], 0.7);
        assert_eq!(cfg.recall_grid[3], 0.15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = EvalConfig::<f64>::default();
        cfg.iou_bg = 0.6;
        assert!(cfg.validate().is_err());
        let mut cfg = EvalConfig::<f64>::default();
        cfg.recall_grid = vec![0.5, 0.1];
        assert!(cfg.validate().is_err());
        let mut cfg = EvalConfig::<f64>::default();
        cfg.id_thresh = f64::NEG_INFINITY;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn objectness_range_enforced() {
        let b = BBox::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(Detection::new(1, b, vec![0.0], 1.5).is_err());
        assert!(Detection::new(1, b, vec![], 0.5).is_err());
        assert!(Detection::new(1, b, vec![0.0], 1.0).is_ok());
    }
}
