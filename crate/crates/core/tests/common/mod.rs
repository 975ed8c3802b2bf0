//! Brute-force reference implementations used as test oracles. They are
//! written directly from the metric definitions and share no code with the
//! library's matching or ranking paths.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use osodd::{ClassSplit, Detection64, GroundTruth64, BBox64};

pub fn corners(b: &BBox64) -> [f64; 4] {
    [b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h]
}

pub fn iou(a: &BBox64, b: &BBox64) -> f64 {
    let (a, b) = (corners(a), corners(b));
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

pub fn pairwise_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for p in pos {
        for n in neg {
            if p > n {
                twice += 2;
            } else if p == n {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

/// 101-point AP from true-positive flags already in rank order: for each
/// grid recall, the best precision over every cut point reaching it.
pub fn ap_from_flags(flags: &[bool], num_gt: usize) -> f64 {
    let mut cuts = Vec::new();
    let mut tp = 0;
    for (n, &f) in flags.iter().enumerate() {
        tp += f as usize;
        cuts.push((tp as f64 / num_gt as f64, tp as f64 / (n + 1) as f64));
    }
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let best = cuts.iter().filter(|(rc, _)| *rc >= r).map(|(_, p)| *p).fold(0.0, f64::max);
        sum += best;
    }
    sum / 101.0
}

pub fn max_softmax(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    1.0 / z
}

pub fn confidence(d: &Detection64) -> f64 {
    d.objectness * max_softmax(&d.logits)
}

pub fn first_argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for i in 0..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best
}

/// Detections kept per image: top `k` by confidence, ties by input order.
/// Returned as (image, rank, detection index) in global ranking key order.
pub fn top_k(dets: &[Detection64], k: usize) -> Vec<(u64, usize, usize)> {
    let mut per_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        per_image.entry(d.image_id).or_default().push(i);
    }
    let mut out = Vec::new();
    for (img, mut idx) in per_image {
        idx.sort_by(|&a, &b| confidence(&dets[b]).partial_cmp(&confidence(&dets[a])).unwrap().then(a.cmp(&b)));
        for (rank, i) in idx.into_iter().take(k).enumerate() {
            out.push((img, rank, i));
        }
    }
    out
}

/// Greedy matcher: each detection (in the given order) takes the eligible
/// unmatched ground truth with the highest IoU >= `thresh`, lowest index
/// on ties. Returns the matched gt per detection.
pub fn greedy(
    order: &[usize],
    dets: &[Detection64],
    gts: &[GroundTruth64],
    thresh: f64,
    eligible: impl Fn(usize, usize) -> bool,
) -> Vec<Option<usize>> {
    let mut taken = BTreeSet::new();
    let mut out = Vec::new();
    for &d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.image_id != dets[d].image_id || taken.contains(&g) || !eligible(d, g) {
                continue;
            }
            let v = iou(&dets[d].bbox, &gt.bbox);
            if v >= thresh && best.map_or(true, |(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken.insert(g);
        }
        out.push(best.map(|(g, _)| g));
    }
    out
}

fn id_class(split: &ClassSplit, dataset_class: u32) -> Option<u32> {
    if split.id_classes().contains(&dataset_class) {
        Some(dataset_class)
    } else {
        split.alias_map().get(&dataset_class).copied()
    }
}

/// ID-mAP with `label(det)` giving each detection's claimed class
/// (0 = unknown, left out).
pub fn id_map(
    dets: &[Detection64],
    gts: &[GroundTruth64],
    split: &ClassSplit,
    k: usize,
    iou_thresh: f64,
    label: impl Fn(usize) -> u32,
) -> Option<f64> {
    let kept = top_k(dets, k);
    let mut num_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for g in gts {
        if let Some(c) = id_class(split, g.dataset_class) {
            *num_gt.entry(c).or_default() += 1;
        }
    }
    if num_gt.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for (&class, &n) in &num_gt {
        // per-image greedy, then rank globally by (confidence, image, rank)
        let mut scored: Vec<(f64, u64, usize, bool)> = Vec::new();
        let images: BTreeSet<u64> = kept.iter().map(|k| k.0).collect();
        for img in images {
            let order: Vec<usize> =
                kept.iter().filter(|k| k.0 == img && label(k.2) == class).map(|k| k.2).collect();
            let m = greedy(&order, dets, gts, iou_thresh, |_, g| id_class(split, gts[g].dataset_class) == Some(class));
            for (rank, (&d, hit)) in order.iter().zip(m).enumerate() {
                scored.push((confidence(&dets[d]), img, rank, hit.is_some()));
            }
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let flags: Vec<bool> = scored.iter().map(|s| s.3).collect();
        total += ap_from_flags(&flags, n);
    }
    Some(total / num_gt.len() as f64)
}

/// OOD recall by top-k detections for which `unknown(det)` holds.
pub fn ood_recall(
    dets: &[Detection64],
    gts: &[GroundTruth64],
    split: &ClassSplit,
    k: usize,
    iou_thresh: f64,
    unknown: impl Fn(usize) -> bool,
) -> Option<f64> {
    let total = gts.iter().filter(|g| id_class(split, g.dataset_class).is_none()).count();
    if total == 0 {
        return None;
    }
    let kept = top_k(dets, k);
    let images: BTreeSet<u64> = kept.iter().map(|k| k.0).collect();
    let mut matched = 0;
    for img in images {
        let order: Vec<usize> = kept.iter().filter(|k| k.0 == img && unknown(k.2)).map(|k| k.2).collect();
        let m = greedy(&order, dets, gts, iou_thresh, |_, g| id_class(split, gts[g].dataset_class).is_none());
        matched += m.iter().filter(|x| x.is_some()).count();
    }
    Some(matched as f64 / total as f64)
}

pub struct OracleAosp {
    pub value: f64,
    pub points: Vec<(Option<f64>, f64)>,
    pub max_recall: f64,
}

/// Exhaustive sweep: recall and ID-mAP recomputed from scratch at every
/// candidate threshold; each target takes the smallest qualifying one.
pub fn aosp(
    dets: &[Detection64],
    gts: &[GroundTruth64],
    split: &ClassSplit,
    k: usize,
    iou_thresh: f64,
    grid: &[f64],
) -> OracleAosp {
    let scores: Vec<f64> = dets.iter().map(|d| d.decision.unwrap().id_score).collect();
    let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
    cands.extend(scores.iter().copied());
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let sweep: Vec<(f64, f64, f64)> = cands
        .iter()
        .map(|&t| {
            let r = ood_recall(dets, gts, split, k, iou_thresh, |d| !(scores[d] > t)).unwrap();
            let m = id_map(dets, gts, split, k, iou_thresh, |d| {
                if scores[d] > t {
                    split.class_at(first_argmax(&dets[d].logits))
                } else {
                    0
                }
            })
            .unwrap();
            (t, r, m)
        })
        .collect();
    let max_recall = sweep.iter().map(|s| s.1).fold(0.0, f64::max);
    let points: Vec<(Option<f64>, f64)> = grid
        .iter()
        .map(|&r| match sweep.iter().find(|s| s.1 >= r) {
            Some(&(t, _, m)) => (Some(t), m),
            None => (None, 0.0),
        })
        .collect();
    let value = points.iter().map(|p| p.1).sum::<f64>() / grid.len() as f64;
    OracleAosp { value, points, max_recall }
}

/// Deterministic xorshift generator for test instance construction.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }
    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
