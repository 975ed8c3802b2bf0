//! Deterministic synthetic detector.
//!
//! Every random quantity is drawn from its own ChaCha stream keyed by
//! `(seed, image, object slot, purpose)`, so turning one knob leaves all
//! other draws untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, ClassSplit, DatasetBundle, Detection, EvalConfig, GroundTruthObject, ImageInfo};
use crate::partition::iou;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_images: usize,
    /// Known classes are dataset ids `1..=id_classes`.
    pub id_classes: usize,
    /// Unknown classes follow the known ones.
    pub ood_classes: usize,
    /// Inclusive `[min, max]` objects per image.
    pub objects_per_image: [usize; 2],
    /// Mean gap, in logit units, between the winning-logit margins of ID
    /// and non-ID regions.
    pub id_score_separation: f64,
    /// Gap between foreground and background objectness pre-activations.
    pub objectness_separation: f64,
    /// Std-dev of box jitter in pixels.
    pub localization_noise: f64,
    /// Probability that each object slot also spawns a background detection.
    pub fp_rate: f64,
    /// Probability that an object gets no detection.
    pub miss_rate: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Box side range as a fraction of the shorter image side.
    pub box_size: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            num_images: 10,
            id_classes: 5,
            ood_classes: 5,
            objects_per_image: [2, 6],
            id_score_separation: 2.0,
            objectness_separation: 2.0,
            localization_noise: 2.0,
            fp_rate: 0.5,
            miss_rate: 0.1,
            image_width: 640,
            image_height: 480,
            box_size: [0.05, 0.25],
        }
    }
}

const MAX_PLACEMENT_TRIES: usize = 200;
const GT_MAX_IOU: f64 = 0.3;
const FP_MAX_IOU: f64 = 0.1;
const WINDOW: u128 = 1 << 16;

#[derive(Clone, Copy)]
enum Purpose {
    Count,
    Place,
    Class,
    Miss,
    Jitter,
    Logits,
    Objectness,
    FpSpawn,
    FpPlace,
    FpLogits,
    FpObjectness,
}
const PURPOSES: u128 = 11;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.id_classes == 0 {
            return Err(Error::invalid("synth needs at least one ID class"));
        }
        if self.objects_per_image[0] > self.objects_per_image[1] {
            return Err(Error::invalid("objects_per_image must be [min, max]"));
        }
        if !unit(self.fp_rate) || !unit(self.miss_rate) {
            return Err(Error::invalid("fp_rate and miss_rate must lie in [0, 1]"));
        }
        if !(self.localization_noise >= 0.0 && self.localization_noise.is_finite()) {
            return Err(Error::invalid("localization_noise must be finite and non-negative"));
        }
        if !(self.id_score_separation.is_finite() && self.objectness_separation.is_finite()) {
            return Err(Error::invalid("separations must be finite"));
        }
        let [lo, hi] = self.box_size;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("box_size must satisfy 0 < min <= max <= 1"));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok(())
    }

    fn rng(&self, image: usize, slot: usize, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(image as u64);
        rng.set_word_pos((slot as u128 * PURPOSES + purpose as u128) * WINDOW);
        rng
    }

    fn random_box(&self, rng: &mut ChaCha8Rng) -> [f64; 4] {
        let side = self.image_width.min(self.image_height) as f64;
        let (w_img, h_img) = (self.image_width as f64, self.image_height as f64);
        let [lo, hi] = self.box_size;
        let w = (rng.random_range(lo..=hi) * side).round().max(2.0);
        let h = (rng.random_range(lo..=hi) * side).round().max(2.0);
        let x = rng.random_range(0.0..=(w_img - w).max(0.0)).round();
        let y = rng.random_range(0.0..=(h_img - h).max(0.0)).round();
        [x, y, w, h]
    }
}

fn corner_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let bb = |c: [f64; 4]| BBox::from_corner(c[0], c[1], c[2], c[3]).expect("positive size");
    iou(&bb(a), &bb(b))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn std_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("valid normal")
}

/// Logits whose arg-max is `peak`; the winning margin grows with `shift`.
fn logits(rng: &mut ChaCha8Rng, classes: usize, peak: usize, shift: f64) -> Vec<f64> {
    let n = std_normal();
    let mut l: Vec<f64> = (0..classes).map(|_| n.sample(rng)).collect();
    let h = n.sample(rng) + shift;
    let rest = l.iter().enumerate().filter(|(i, _)| *i != peak).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
    let base = if rest.is_finite() { rest } else { 0.0 };
    l[peak] = base + 0.25 + softplus(h);
    l
}

struct ImageOut {
    gts: Vec<([f64; 4], u32)>,
    dets: Vec<([f64; 4], Vec<f64>, f64)>,
}

fn generate_image(cfg: &SynthConfig, image: usize) -> Result<ImageOut> {
    let total_classes = cfg.id_classes + cfg.ood_classes;
    let [lo, hi] = cfg.objects_per_image;
    let count = cfg.rng(image, 0, Purpose::Count).random_range(lo..=hi);
    let normal = std_normal();
    let half_gap_fg = cfg.objectness_separation / 2.0;

    let mut gts: Vec<([f64; 4], u32)> = Vec::with_capacity(count);
    for slot in 0..count {
        let mut rng = cfg.rng(image, slot, Purpose::Place);
        let placed = (0..MAX_PLACEMENT_TRIES)
            .map(|_| cfg.random_box(&mut rng))
            .find(|b| gts.iter().all(|(g, _)| corner_iou(*b, *g) < GT_MAX_IOU))
            .ok_or_else(|| Error::Infeasible(format!("image {image}: could not place object {slot}")))?;
        let class = cfg.rng(image, slot, Purpose::Class).random_range(1..=total_classes) as u32;
        gts.push((placed, class));
    }

    let mut dets = Vec::new();
    for (slot, &(b, class)) in gts.iter().enumerate() {
        if cfg.rng(image, slot, Purpose::Miss).random::<f64>() < cfg.miss_rate {
            continue;
        }
        let mut jitter = cfg.rng(image, slot, Purpose::Jitter);
        let s = cfg.localization_noise;
        let mut bx = b;
        if s > 0.0 {
            let mut d = || normal.sample(&mut jitter) * s;
            bx = [b[0] + d(), b[1] + d(), (b[2] + d()).max(1.0), (b[3] + d()).max(1.0)];
        }
        let is_id = class as usize <= cfg.id_classes;
        let mut lrng = cfg.rng(image, slot, Purpose::Logits);
        let peak = if is_id { class as usize - 1 } else { lrng.random_range(0..cfg.id_classes) };
        let shift = if is_id { cfg.id_score_separation } else { 0.0 };
        let l = logits(&mut lrng, cfg.id_classes, peak, shift);
        let o = sigmoid(normal.sample(&mut cfg.rng(image, slot, Purpose::Objectness)) + half_gap_fg);
        dets.push((bx, l, o));
    }
    for slot in 0..count {
        if cfg.rng(image, slot, Purpose::FpSpawn).random::<f64>() >= cfg.fp_rate {
            continue;
        }
        let mut rng = cfg.rng(image, slot, Purpose::FpPlace);
        let placed = (0..MAX_PLACEMENT_TRIES)
            .map(|_| cfg.random_box(&mut rng))
            .find(|b| gts.iter().all(|(g, _)| corner_iou(*b, *g) < FP_MAX_IOU))
            .ok_or_else(|| Error::Infeasible(format!("image {image}: could not place background box {slot}")))?;
        let mut lrng = cfg.rng(image, slot, Purpose::FpLogits);
        let peak = lrng.random_range(0..cfg.id_classes);
        let l = logits(&mut lrng, cfg.id_classes, peak, 0.0);
        let o = sigmoid(normal.sample(&mut cfg.rng(image, slot, Purpose::FpObjectness)) - half_gap_fg);
        dets.push((placed, l, o));
    }
    Ok(ImageOut { gts, dets })
}

/// Generates a bundle; image ids are `1..=num_images`, annotation ids are
/// sequential from 1.
pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<DatasetBundle<T>> {
    cfg.validate()?;
    let per_image: Vec<ImageOut> =
        (0..cfg.num_images).into_par_iter().map(|i| generate_image(cfg, i)).collect::<Result<_>>()?;

    let conv = |v: f64| T::lit(v);
    let to_box = |c: [f64; 4]| BBox::from_corner(conv(c[0]), conv(c[1]), conv(c[2]), conv(c[3]));
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for (i, out) in per_image.into_iter().enumerate() {
        let image_id = i as u64 + 1;
        images.push(ImageInfo { id: image_id, width: cfg.image_width, height: cfg.image_height });
        for (b, class) in out.gts {
            gts.push(GroundTruthObject { id: gts.len() as u64 + 1, image_id, bbox: to_box(b)?, dataset_class: class });
        }
        for (b, l, o) in out.dets {
            dets.push(Detection::new(image_id, to_box(b)?, l.into_iter().map(conv).collect(), conv(o))?);
        }
    }
    let split = ClassSplit::new((1..=cfg.id_classes as u32).collect())?;
    Ok(DatasetBundle { images, gts, dets, split, cfg: EvalConfig::default() })
}

/// Every dataset class id the generator can emit.
pub fn all_classes(cfg: &SynthConfig) -> Vec<u32> {
    (1..=(cfg.id_classes + cfg.ood_classes) as u32).collect()
}
