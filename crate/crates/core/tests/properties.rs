mod common;

use osodd::{
    auroc_axes, ca_ar, decide_all, evaluate, generate, id_map, partition_all, BBox64, Bundle32, EvalConfig64,
    MapMode, SynthConfig,
};
use proptest::prelude::*;

fn base(seed: u64) -> SynthConfig {
    SynthConfig { seed, num_images: 30, localization_noise: 0.0, ..SynthConfig::default() }
}

#[test]
fn id_vs_ood_auroc_rises_with_separation() {
    let mut prev = 0.0;
    for sep in [0.0, 1.0, 3.0, 8.0] {
        let bundle = generate::<f64>(&SynthConfig { id_score_separation: sep, ..base(3) }).unwrap();
        let r = evaluate(&bundle, None).unwrap();
        let v = r.auroc.id_vs_ood.unwrap();
        assert!(v >= prev - 0.02, "separation {sep}: {v} after {prev}");
        prev = v;
    }
    assert!(prev > 0.95);
}

#[test]
fn no_separation_gives_chance_auroc() {
    let cfg = SynthConfig { id_score_separation: 0.0, num_images: 400, objects_per_image: [4, 8], ..base(9) };
    let bundle = generate::<f64>(&cfg).unwrap();
    let r = evaluate(&bundle, None).unwrap();
    assert!(r.counts.id_match + r.counts.ood_match >= 2000);
    let v = r.auroc.id_vs_ood.unwrap();
    assert!((v - 0.5).abs() <= 0.05, "{v}");
}

#[test]
fn more_misses_never_raise_ca_ar() {
    let mut prev = f64::INFINITY;
    for miss in [0.0, 0.2, 0.5, 0.8] {
        let bundle = generate::<f64>(&SynthConfig { miss_rate: miss, ..base(4) }).unwrap();
        let v = ca_ar(&bundle.dets, &bundle.gts, &bundle.cfg).unwrap();
        assert!(v <= prev + 1e-12, "miss {miss}: {v} after {prev}");
        prev = v;
    }
}

#[test]
fn missing_everything_scores_zero() {
    let bundle = generate::<f64>(&SynthConfig { miss_rate: 1.0, fp_rate: 1.0, ..base(5) }).unwrap();
    let dets = decide_all(&bundle.dets, &bundle.split, &bundle.cfg, None).unwrap();
    assert_eq!(id_map(&dets, &bundle.gts, &bundle.split, &bundle.cfg, MapMode::ClosedSet).unwrap(), 0.0);
    assert_eq!(ca_ar(&dets, &bundle.gts, &bundle.cfg).unwrap(), 0.0);
}

#[test]
fn auroc_axes_on_mixed_fixture() {
    let bundle = generate::<f64>(&SynthConfig { fp_rate: 1.0, localization_noise: 2.0, ..base(6) }).unwrap();
    let dets = decide_all(&bundle.dets, &bundle.split, &bundle.cfg, None).unwrap();
    let labels = partition_all(&dets, &bundle.gts, &bundle.split, &bundle.cfg);
    let axes = auroc_axes(&dets, &labels).unwrap();
    let pick = |f: &dyn Fn(&osodd::PartitionLabel) -> bool, score: &dyn Fn(usize) -> f64| -> Vec<f64> {
        labels.iter().enumerate().filter(|(_, l)| f(l)).map(|(i, _)| score(i)).collect()
    };
    use osodd::PartitionLabel::*;
    let id = |i: usize| dets[i].decision.unwrap().id_score;
    let obj = |i: usize| dets[i].objectness;
    let is_id = |l: &osodd::PartitionLabel| matches!(l, IdMatch(_));
    let is_ood = |l: &osodd::PartitionLabel| matches!(l, OodMatch(_));
    let is_bg = |l: &osodd::PartitionLabel| matches!(l, Background);
    let non_id = |l: &osodd::PartitionLabel| matches!(l, OodMatch(_) | Background);
    let fg = |l: &osodd::PartitionLabel| matches!(l, IdMatch(_) | OodMatch(_));
    assert_eq!(axes.id_vs_ood.unwrap(), common::pairwise_auroc(&pick(&is_id, &id), &pick(&is_ood, &id)));
    assert_eq!(axes.id_vs_non_id.unwrap(), common::pairwise_auroc(&pick(&is_id, &id), &pick(&non_id, &id)));
    assert_eq!(axes.ood_vs_bg.unwrap(), common::pairwise_auroc(&pick(&is_ood, &obj), &pick(&is_bg, &obj)));
    assert_eq!(axes.fg_vs_bg.unwrap(), common::pairwise_auroc(&pick(&fg, &obj), &pick(&is_bg, &obj)));
}

#[test]
fn f32_pipeline_tracks_f64() {
    let cfg = SynthConfig { localization_noise: 2.0, ..base(8) };
    let b64 = generate::<f64>(&cfg).unwrap();
    let b32: Bundle32 = generate::<f32>(&cfg).unwrap();
    let (r64, r32) = (evaluate(&b64, None).unwrap(), evaluate(&b32, None).unwrap());
    assert!((r64.ca_ar - r32.ca_ar as f64).abs() < 1e-3);
    assert!((r64.id_map_closed - r32.id_map_closed as f64).abs() < 1e-3);
}

proptest! {
    #[test]
    fn corner_round_trip(x in -1e4f64..1e4, y in -1e4f64..1e4, w in 1e-3f64..1e4, h in 1e-3f64..1e4) {
        let b = BBox64::from_corner(x, y, w, h).unwrap();
        let [x2, y2, w2, h2] = b.to_corner();
        prop_assert!((x - x2).abs() < 1e-9 && (y - y2).abs() < 1e-9);
        prop_assert!((w - w2).abs() < 1e-9 && (h - h2).abs() < 1e-9);
    }

    #[test]
    fn synth_is_seed_deterministic(seed in 0u64..1000) {
        let cfg = SynthConfig { seed, num_images: 3, ..SynthConfig::default() };
        let a = generate::<f64>(&cfg).unwrap();
        let b = generate::<f64>(&cfg).unwrap();
        prop_assert_eq!(a.dets, b.dets);
        prop_assert_eq!(a.gts, b.gts);
    }

    #[test]
    fn open_set_at_negative_infinity_is_closed_set(seed in 0u64..200) {
        let bundle = generate::<f64>(&SynthConfig { seed, num_images: 4, localization_noise: 3.0, ..SynthConfig::default() }).unwrap();
        let cfg = EvalConfig64 { id_thresh: f64::NEG_INFINITY, ..EvalConfig64::default() };
        let dets = decide_all(&bundle.dets, &bundle.split, &cfg, None).unwrap();
        let open = id_map(&dets, &bundle.gts, &bundle.split, &cfg, MapMode::OpenSet);
        let closed = id_map(&dets, &bundle.gts, &bundle.split, &cfg, MapMode::ClosedSet);
        prop_assert_eq!(open.ok(), closed.ok());
    }
}
