use layout3d::assign::{assign_walls, WallAssignMode};
use layout3d::infer::wall_distance;
use layout3d::losses::{focal_loss, iou3d, FocalParams};
use layout3d::metrics::{evaluate, layout_f1_projection, EvalConfig};
use layout3d::scene::{canonicalize_wall, Box3, DetectedObject, Scene, Wall};
use layout3d::voxel::LocationSet;
use layout3d::wall_codec::{decode, encode, WallScheme};
use nalgebra::Vector3;
use proptest::prelude::*;

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

prop_compose! {
    fn any_wall(floor: bool)(
        ax in -5.0..5.0f64, ay in -5.0..5.0f64,
        len in 0.2..4.0f64, theta in 0.0..std::f64::consts::TAU,
        z0 in -1.0..1.0f64, h in 0.1..4.0f64,
    ) -> Wall {
        let z0 = if floor { 0.0 } else { z0 };
        let a = v(ax, ay, z0);
        let b = a + v(theta.cos(), theta.sin(), 0.0) * len;
        canonicalize_wall([a, b, b + v(0.0, 0.0, h), a + v(0.0, 0.0, h)]).unwrap()
    }
}

prop_compose! {
    fn any_box()(c in prop::array::uniform3(-3.0..3.0f64), s in prop::array::uniform3(0.1..2.0f64)) -> Box3 {
        Box3::new(Vector3::from(c), Vector3::from(s)).unwrap()
    }
}

fn max_gap(a: &Wall, b: &Wall) -> f64 {
    a.corners().iter().zip(b.corners()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn canonical_order_ignores_input_order(w in any_wall(false), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
        let c = w.corners();
        let shuffled = canonicalize_wall(perm.map(|i| c[i])).unwrap();
        prop_assert_eq!(&shuffled, &w);
        prop_assert_eq!(canonicalize_wall(*c).unwrap(), w);
    }

    #[test]
    fn every_scheme_round_trips(w in any_wall(false), anchor in prop::array::uniform3(-6.0..6.0f64)) {
        for scheme in [WallScheme::Pq, WallScheme::Corners4, WallScheme::Lower2h] {
            let back = decode(&Vector3::from(anchor), &encode(scheme, &w, &Vector3::from(anchor)).unwrap()).unwrap();
            prop_assert!(max_gap(&back, &w) < 1e-9, "{} gap {}", scheme, max_gap(&back, &w));
        }
    }

    #[test]
    fn bev_round_trips_on_floor(w in any_wall(true), anchor in prop::array::uniform3(-6.0..6.0f64)) {
        let a = Vector3::from(anchor);
        let back = decode(&a, &encode(WallScheme::Bev2h, &w, &a).unwrap()).unwrap();
        prop_assert!(max_gap(&back, &w) < 1e-9);
    }

    #[test]
    fn wall_distance_is_a_symmetric_translation_norm(w in any_wall(false), t in prop::array::uniform2(-2.0..2.0f64)) {
        let shift = v(t[0], t[1], 0.0);
        let moved = canonicalize_wall(w.corners().map(|c| c + shift)).unwrap();
        prop_assert!((wall_distance(&w, &moved) - shift.norm()).abs() < 1e-9);
        prop_assert_eq!(wall_distance(&w, &moved), wall_distance(&moved, &w));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in any_box(), b in any_box()) {
        let (x, y) = (iou3d(&a, &b), iou3d(&b, &a));
        prop_assert!((x - y).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((iou3d(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn focal_is_nonnegative_and_pushes_toward_target(x in -30.0..30.0f64, t: bool) {
        let l = focal_loss(x, t, FocalParams::default());
        prop_assert!(l.value >= 0.0);
        // descending the gradient moves the logit toward the target
        if t { prop_assert!(l.gradient[0] <= 0.0) } else { prop_assert!(l.gradient[0] >= 0.0) }
    }

    #[test]
    fn projection_f1_tightens_with_threshold(
        gts in prop::collection::vec(any_wall(true), 0..6),
        preds in prop::collection::vec((any_wall(true), 0.0..1.0f64), 0..6),
    ) {
        let preds: Vec<Wall> = preds.into_iter().map(|(w, s)| w.with_score(s).unwrap()).collect();
        let lo = layout_f1_projection(&[preds.clone()], &[gts.clone()], 0.25, 0.1).unwrap();
        let hi = layout_f1_projection(&[preds], &[gts], 0.5, 0.1).unwrap();
        prop_assert!(hi.f1 <= lo.f1 && hi.tp <= lo.tp);
    }

    #[test]
    fn wall_assignment_respects_k_and_exclusivity(
        walls in prop::collection::vec(any_wall(true), 1..5),
        k in 1usize..8,
    ) {
        let mut cells: Vec<[i64; 3]> = (-8..8).flat_map(|x| (-8..8).map(move |y| [x * 2, y * 2, 0])).collect();
        cells.sort();
        let centers = cells.iter().map(|c| v(c[0] as f64 + 0.5, c[1] as f64 + 0.5, 0.5) * 0.32).collect();
        let set = LocationSet::from_centers(0.32, centers).unwrap();
        for mode in [WallAssignMode::Space3d, WallAssignMode::Bev] {
            let pairs = assign_walls(&set, &walls, k, mode).unwrap();
            let mut per_target = vec![0usize; walls.len()];
            let mut seen = std::collections::BTreeSet::new();
            for p in pairs.pairs() {
                per_target[p.target] += 1;
                prop_assert!(seen.insert(p.location));
            }
            prop_assert!(per_target.iter().all(|&n| n <= k));
        }
    }
}

fn scored(b: Box3, category: u32, score: f64) -> DetectedObject {
    DetectedObject::new(b, category, score).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_ignore_scene_order_and_tighten_with_threshold(
        scenes in prop::collection::vec(
            (prop::collection::vec((any_box(), 1u32..4), 1..5),
             prop::collection::vec((any_box(), 1u32..4, 0.0..1.0f64), 0..6),
             prop::collection::vec(any_wall(true), 0..4),
             prop::collection::vec((any_wall(true), 0.0..1.0f64), 0..4)),
            1..4),
    ) {
        let (preds, gts): (Vec<Scene>, Vec<Scene>) = scenes
            .into_iter()
            .map(|(g, p, gw, pw)| {
                let gt = Scene {
                    objects: g.into_iter().map(|(b, c)| DetectedObject::ground_truth(b, c).unwrap()).collect(),
                    walls: gw,
                    ..Scene::default()
                };
                let pred = Scene {
                    objects: p.into_iter().map(|(b, c, s)| scored(b, c, s)).collect(),
                    walls: pw.into_iter().map(|(w, s)| w.with_score(s).unwrap()).collect(),
                    ..Scene::default()
                };
                (pred, gt)
            })
            .unzip();
        let cfg = EvalConfig::default();
        let report = evaluate(&preds, &gts, &cfg).unwrap();
        let (rp, rg): (Vec<Scene>, Vec<Scene>) = (preds.iter().rev().cloned().collect(), gts.iter().rev().cloned().collect());
        prop_assert_eq!(&evaluate(&rp, &rg, &cfg).unwrap(), &report);
        let parallel = evaluate(&preds, &gts, &EvalConfig { jobs: 3, ..cfg }).unwrap();
        prop_assert_eq!(&parallel, &report);
        prop_assert!(report.map_50().unwrap() <= report.map_25().unwrap());
        prop_assert!(report.f1_projection(0.5).unwrap() <= report.f1_projection(0.25).unwrap());
    }
}

#[test]
fn equal_scores_are_order_independent() {
    let unit = |x: f64| Box3::new(v(x, 0.0, 0.0), Vector3::repeat(1.0)).unwrap();
    let gt = Scene { objects: vec![DetectedObject::ground_truth(unit(0.0), 1).unwrap()], ..Scene::default() };
    let a = scored(unit(0.2), 1, 0.5);
    let b = scored(unit(0.6), 1, 0.5);
    let one = Scene { objects: vec![a, b], ..Scene::default() };
    let two = Scene { objects: vec![b, a], ..Scene::default() };
    let cfg = EvalConfig::default();
    assert_eq!(
        evaluate(&[one], &[gt.clone()], &cfg).unwrap(),
        evaluate(&[two], &[gt], &cfg).unwrap()
    );
}
