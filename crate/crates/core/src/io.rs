//! File formats: COCO-style ground truth, JSON Lines detections, split
//! and reference-feature files, and the report document.
//!
//! Loading is fail-fast: any bad record aborts the whole load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{BBox, ClassSplit, Detection, GroundTruthObject, ImageInfo, PartitionLabel};
use crate::scalar::Scalar;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::File { path: path.to_owned(), msg: e.to_string() })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::File { path: path.to_owned(), msg: e.to_string() })
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse { path: path.to_owned(), line: e.line(), msg: e.to_string() }
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<ImageInfo>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: Vec<f64>,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Serialize, Deserialize)]
struct CocoCategory {
    id: u32,
    name: String,
}

/// Parses COCO annotation JSON held in memory; `path` is only used for
/// error context.
pub fn parse_ground_truth<T: Scalar>(
    text: &str,
    path: &Path,
) -> Result<(Vec<ImageInfo>, Vec<GroundTruthObject<T>>)> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| json_err(path, e))?;
    let fail = |msg: String| Error::File { path: path.to_owned(), msg };
    let categories: std::collections::BTreeSet<u32> = file.categories.iter().map(|c| c.id).collect();
    let mut gts = Vec::with_capacity(file.annotations.len());
    for ann in &file.annotations {
        if ann.iscrowd != 0 {
            return Err(fail(format!("annotation {}: crowd annotations are not supported", ann.id)));
        }
        if !categories.contains(&ann.category_id) {
            return Err(fail(format!("annotation {}: unknown category {}", ann.id, ann.category_id)));
        }
        let [x, y, w, h] = <[f64; 4]>::try_from(ann.bbox.as_slice())
            .map_err(|_| fail(format!("annotation {}: bbox must have 4 entries", ann.id)))?;
        let conv = |v: f64| T::from_f64(v).unwrap_or_else(T::nan);
        let bbox = BBox::from_corner(conv(x), conv(y), conv(w), conv(h))
            .map_err(|e| fail(format!("annotation {}: {e}", ann.id)))?;
        gts.push(GroundTruthObject { id: ann.id, image_id: ann.image_id, bbox, dataset_class: ann.category_id });
    }
    Ok((file.images, gts))
}

pub fn load_ground_truth<T: Scalar>(path: &Path) -> Result<(Vec<ImageInfo>, Vec<GroundTruthObject<T>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::File { path: path.to_owned(), msg: e.to_string() })?;
    parse_ground_truth(&text, path)
}

/// Writes COCO annotation JSON; categories are named `class_<id>`.
pub fn write_ground_truth<T: Scalar>(
    path: &Path,
    images: &[ImageInfo],
    gts: &[GroundTruthObject<T>],
    categories: &[u32],
) -> Result<()> {
    let annotations: Vec<Value> = gts
        .iter()
        .map(|g| {
            let c = g.bbox.to_corner();
            serde_json::json!({
                "id": g.id,
                "image_id": g.image_id,
                "category_id": g.dataset_class,
                "bbox": c.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                "area": g.bbox.area().as_f64(),
                "iscrowd": 0,
            })
        })
        .collect();
    let categories: Vec<CocoCategory> =
        categories.iter().map(|&id| CocoCategory { id, name: format!("class_{id}") }).collect();
    let doc = serde_json::json!({ "images": images, "annotations": annotations, "categories": categories });
    let mut out = create(path)?;
    serde_json::to_writer(&mut out, &doc).map_err(|e| json_err(path, e))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct DetectionRecord<T> {
    image_id: u64,
    bbox: Vec<T>,
    logits: Vec<T>,
    objectness: T,
    #[serde(default)]
    features: Option<Vec<T>>,
}

/// A loaded detection together with the JSON object it came from, so that
/// annotated output can reproduce every input field unchanged.
#[derive(Debug, Clone)]
pub struct DetectionLine<T> {
    pub record: Map<String, Value>,
    pub det: Detection<T>,
}

fn parse_detection_line<T: Scalar>(line: &str) -> std::result::Result<DetectionLine<T>, String> {
    let record: Map<String, Value> = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let raw: DetectionRecord<T> =
        serde_json::from_value(Value::Object(record.clone())).map_err(|e| e.to_string())?;
    let [x, y, w, h] = <[T; 4]>::try_from(raw.bbox.as_slice()).map_err(|_| "bbox must have 4 entries".to_string())?;
    let bbox = BBox::from_corner(x, y, w, h).map_err(|e| e.to_string())?;
    let mut det = Detection::new(raw.image_id, bbox, raw.logits, raw.objectness).map_err(|e| e.to_string())?;
    det.features = raw.features;
    Ok(DetectionLine { record, det })
}

/// Loads detection JSON Lines keeping the source records. Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn load_detection_lines<T: Scalar>(path: &Path) -> Result<Vec<DetectionLine<T>>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_detection_line(&line)
            .map_err(|msg| Error::Parse { path: path.to_owned(), line: i + 1, msg })?;
        out.push(parsed);
    }
    Ok(out)
}

pub fn load_detections<T: Scalar>(path: &Path) -> Result<Vec<Detection<T>>> {
    Ok(load_detection_lines(path)?.into_iter().map(|l| l.det).collect())
}

fn detection_record<T: Scalar>(det: &Detection<T>) -> Map<String, Value> {
    let f = |v: &T| Value::from(v.as_f64());
    let mut m = Map::new();
    m.insert("image_id".into(), det.image_id.into());
    m.insert("bbox".into(), det.bbox.to_corner().iter().map(f).collect());
    m.insert("logits".into(), det.logits.iter().map(f).collect());
    m.insert("objectness".into(), f(&det.objectness));
    if let Some(features) = &det.features {
        m.insert("features".into(), features.iter().map(f).collect());
    }
    m
}

fn append_decision<T: Scalar>(record: &mut Map<String, Value>, det: &Detection<T>) {
    if let Some(d) = &det.decision {
        record.insert("decided_class".into(), d.class.into());
        record.insert("confidence".into(), Value::from(d.confidence.as_f64()));
        record.insert("id_score".into(), Value::from(d.id_score.as_f64()));
    }
}

/// Writes detections as JSON Lines, appending decision fields when present.
pub fn write_detections<T: Scalar>(out: &mut impl Write, dets: &[Detection<T>]) -> Result<()> {
    for det in dets {
        let mut record = detection_record(det);
        append_decision(&mut record, det);
        serde_json::to_writer(&mut *out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Re-emits the source records with `decided_class`, `confidence` and
/// `id_score` appended from `decided`.
pub fn write_decided_lines<T: Scalar>(
    out: &mut impl Write,
    lines: &[DetectionLine<T>],
    decided: &[Detection<T>],
) -> Result<()> {
    if lines.len() != decided.len() {
        return Err(Error::DimensionMismatch { expected: lines.len(), got: decided.len() });
    }
    for (line, det) in lines.iter().zip(decided) {
        let mut record = line.record.clone();
        append_decision(&mut record, det);
        serde_json::to_writer(&mut *out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_detections<T: Scalar>(path: &Path, dets: &[Detection<T>]) -> Result<()> {
    let mut out = create(path)?;
    write_detections(&mut out, dets)?;
    out.flush()?;
    Ok(())
}

pub fn load_split(path: &Path) -> Result<ClassSplit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::File { path: path.to_owned(), msg: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

pub fn write_split(path: &Path, split: &ClassSplit) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer(&mut out, split).map_err(|e| json_err(path, e))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct FeatureRecord<T> {
    class: u32,
    features: Vec<T>,
}

/// Loads reference features (`{"class": id, "features": [...]}` per line)
/// grouped by class in ascending class id.
pub fn load_reference_features<T: Scalar>(path: &Path) -> Result<Vec<Vec<Vec<T>>>> {
    let reader = BufReader::new(open(path)?);
    let mut by_class: BTreeMap<u32, Vec<Vec<T>>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureRecord<T> = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_owned(), line: i + 1, msg: e.to_string() })?;
        by_class.entry(rec.class).or_default().push(rec.features);
    }
    Ok(by_class.into_values().collect())
}

/// Serializes any report as pretty JSON followed by a newline.
pub fn report_json<R: Serialize>(report: &R) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(std::io::Error::from)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<R: Serialize>(report: &R, path: &Path) -> Result<()> {
    std::fs::write(path, report_json(report)?).map_err(|e| Error::File { path: path.to_owned(), msg: e.to_string() })
}

/// One line of the partition dump.
#[derive(Debug, Serialize)]
pub struct PartitionRecord {
    pub index: usize,
    pub image_id: u64,
    pub label: &'static str,
    /// Annotation id of the matched ground truth.
    pub gt_id: Option<u64>,
}

pub fn write_partition<T: Scalar>(
    out: &mut impl Write,
    dets: &[Detection<T>],
    gts: &[GroundTruthObject<T>],
    labels: &[PartitionLabel],
) -> Result<()> {
    for (index, (det, label)) in dets.iter().zip(labels).enumerate() {
        let rec = PartitionRecord {
            index,
            image_id: det.image_id,
            label: label.name(),
            gt_id: label.matched_gt().map(|g| gts[g].id),
        };
        serde_json::to_writer(&mut *out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
