//! Benchmark metrics: per-class AP / mAP for detection and two layout F1
//! variants (corner distance and floor-projection IoU).
//!
//! Matching is greedy in score order inside each scene. Before matching,
//! predictions are put in a canonical order (score, then geometry) so the
//! result does not depend on how equal-scored predictions were listed. When
//! pooling across scenes, predictions with the same score form a single
//! operating point on the precision-recall curve.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{wall_distance, WALL_MATCH_DISTANCE};
use crate::losses::iou3d;
use crate::scene::{DetectedObject, Scene, Wall};

pub const DETECTION_IOU_THRESHOLDS: [f64; 2] = [0.25, 0.5];
pub const PROJECTION_IOU_THRESHOLDS: [f64; 2] = [0.25, 0.5];
pub const DEFAULT_WALL_THICKNESS: f64 = 0.10;

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn object_rank(a: &DetectedObject, b: &DetectedObject) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.category.cmp(&b.category))
        .then_with(|| lex(a.bbox.center().as_slice(), b.bbox.center().as_slice()))
        .then_with(|| lex(a.bbox.size().as_slice(), b.bbox.size().as_slice()))
}

fn wall_rank(a: &Wall, b: &Wall) -> Ordering {
    b.rank_score().total_cmp(&a.rank_score()).then_with(|| {
        a.corners()
            .iter()
            .zip(b.corners())
            .map(|(p, q)| lex(p.as_slice(), q.as_slice()))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn canonical_order<T>(items: &[T], cmp: impl Fn(&T, &T) -> Ordering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| cmp(&items[a], &items[b]));
    order
}

/// Area under the precision envelope; `records` are (score, is_tp).
pub fn average_precision(records: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            tp += sorted[i].1 as usize;
            seen += 1;
            i += 1;
        }
        curve.push((tp as f64 / n_gt as f64, tp as f64 / seen as f64));
    }
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    let mut next_recall = None;
    for &(recall, precision) in curve.iter().rev() {
        if let Some(r) = next_recall {
            ap += (r - recall) * envelope;
        }
        envelope = envelope.max(precision);
        next_recall = Some(recall);
    }
    if let Some(r) = next_recall {
        ap += r * envelope;
    }
    ap
}

/// Per-scene matching for one IoU threshold; returns (category, score, is_tp).
fn match_objects(preds: &[DetectedObject], gts: &[DetectedObject], iou_thr: f64) -> Vec<(u32, f64, bool)> {
    let mut matched = vec![false; gts.len()];
    canonical_order(preds, object_rank)
        .into_iter()
        .map(|i| {
            let p = &preds[i];
            let mut best: Option<(f64, usize)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if matched[g] || gt.category != p.category {
                    continue;
                }
                let iou = iou3d(&p.bbox, &gt.bbox);
                if iou >= iou_thr && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, g));
                }
            }
            if let Some((_, g)) = best {
                matched[g] = true;
            }
            (p.category, p.score, best.is_some())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub iou_threshold: f64,
    /// AP per category with at least one ground-truth instance.
    pub ap: BTreeMap<u32, f64>,
    /// Mean of `ap`; absent when there is no ground truth at all.
    pub map: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn pool_detections(per_scene: Vec<Vec<(u32, f64, bool)>>, gts: &[&[DetectedObject]], iou_thr: f64) -> DetectionScores {
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for gt in gts.iter().flat_map(|s| s.iter()) {
        *n_gt.entry(gt.category).or_default() += 1;
    }
    let mut by_class: BTreeMap<u32, Vec<(f64, bool)>> = BTreeMap::new();
    let (mut tp, mut fp) = (0, 0);
    for (category, score, hit) in per_scene.into_iter().flatten() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        by_class.entry(category).or_default().push((score, hit));
    }
    let ap: BTreeMap<u32, f64> = n_gt
        .iter()
        .map(|(&c, &n)| (c, average_precision(by_class.get(&c).map_or(&[][..], Vec::as_slice), n)))
        .collect();
    let map = (!ap.is_empty()).then(|| ap.values().sum::<f64>() / ap.len() as f64);
    let total_gt: usize = n_gt.values().sum();
    DetectionScores {
        iou_threshold: iou_thr,
        ap,
        map,
        tp,
        fp,
        fn_: total_gt - tp,
    }
}

/// Per-class AP and their mean at one IoU threshold, pooled over scenes.
pub fn map_at(preds: &[Vec<DetectedObject>], gts: &[Vec<DetectedObject>], iou_thr: f64) -> Result<DetectionScores> {
    if preds.len() != gts.len() {
        return Err(Error::SceneAlignment(format!("{} prediction scenes vs {} ground-truth scenes", preds.len(), gts.len())));
    }
    let per_scene = preds.iter().zip(gts).map(|(p, g)| match_objects(p, g, iou_thr)).collect();
    let gt_refs: Vec<&[DetectedObject]> = gts.iter().map(Vec::as_slice).collect();
    let scores = pool_detections(per_scene, &gt_refs, iou_thr);
    if scores.map.is_none() {
        return Err(Error::NoGroundTruth);
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl LayoutScores {
    /// With neither predictions nor ground truth the layout is trivially perfect.
    pub fn from_counts(tp: usize, n_pred: usize, n_gt: usize) -> Self {
        let (precision, recall) = if n_pred == 0 && n_gt == 0 {
            (1.0, 1.0)
        } else {
            let ratio = |n: usize| if n == 0 { 0.0 } else { tp as f64 / n as f64 };
            (ratio(n_pred), ratio(n_gt))
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        LayoutScores {
            precision,
            recall,
            f1,
            tp,
            fp: n_pred - tp,
            fn_: n_gt - tp,
        }
    }
}

/// Order in which corner-distance matching consumes candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchOrder {
    /// Predictions by descending score, each taking its nearest free wall.
    #[default]
    Score,
    /// All (prediction, wall) pairs by ascending distance.
    Distance,
}

impl std::str::FromStr for MatchOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(MatchOrder::Score),
            "distance" => Ok(MatchOrder::Distance),
            other => Err(Error::InvalidConfig(format!("unknown match order `{other}`"))),
        }
    }
}

/// Greedy score-ordered matching. `affinity` returns a value to maximize,
/// or `None` when the pair is not admissible.
fn greedy_walls(preds: &[Wall], gts: &[Wall], affinity: impl Fn(&Wall, &Wall) -> Option<f64>) -> usize {
    let mut matched = vec![false; gts.len()];
    let mut tp = 0;
    for i in canonical_order(preds, wall_rank) {
        let mut best: Option<(f64, usize)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if matched[g] {
                continue;
            }
            if let Some(a) = affinity(&preds[i], gt) {
                if best.is_none_or(|(b, _)| a > b) {
                    best = Some((a, g));
                }
            }
        }
        if let Some((_, g)) = best {
            matched[g] = true;
            tp += 1;
        }
    }
    tp
}

fn distance_ordered_walls(preds: &[Wall], gts: &[Wall], dist_thr: f64) -> usize {
    let order = canonical_order(preds, wall_rank);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            let d = wall_distance(&preds[i], gt);
            if d < dist_thr {
                candidates.push((d, rank, g));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut tp = 0;
    for (_, rank, g) in candidates {
        if !pred_used[rank] && !gt_used[g] {
            pred_used[rank] = true;
            gt_used[g] = true;
            tp += 1;
        }
    }
    tp
}

fn corner_tp(preds: &[Wall], gts: &[Wall], dist_thr: f64, order: MatchOrder) -> usize {
    match order {
        MatchOrder::Score => greedy_walls(preds, gts, |p, g| {
            let d = wall_distance(p, g);
            (d < dist_thr).then_some(-d)
        }),
        MatchOrder::Distance => distance_ordered_walls(preds, gts, dist_thr),
    }
}

fn pool_layout(tp: impl IntoIterator<Item = usize>, preds: &[&[Wall]], gts: &[&[Wall]]) -> LayoutScores {
    let n_pred = preds.iter().map(|s| s.len()).sum();
    let n_gt = gts.iter().map(|s| s.len()).sum();
    LayoutScores::from_counts(tp.into_iter().sum(), n_pred, n_gt)
}

fn refs(scenes: &[Vec<Wall>]) -> Vec<&[Wall]> {
    scenes.iter().map(Vec::as_slice).collect()
}

/// Layout F1 where walls match under the maximum corner-to-corner distance.
pub fn layout_f1_corner(preds: &[Vec<Wall>], gts: &[Vec<Wall>], dist_thr: f64, order: MatchOrder) -> LayoutScores {
    let tp = preds.iter().zip(gts).map(|(p, g)| corner_tp(p, g, dist_thr, order));
    pool_layout(tp.collect::<Vec<_>>(), &refs(preds), &refs(gts))
}

/// Floor footprint of a wall thickened into a rectangle, counter-clockwise.
pub fn wall_footprint_polygon(wall: &Wall, thickness: f64) -> [Vector2<f64>; 4] {
    let (a, b) = wall.footprint();
    let d = (b - a).normalize();
    let n = Vector2::new(-d.y, d.x) * (thickness / 2.0);
    [a - n, b - n, b + n, a + n]
}

/// Shoelace area (positive for counter-clockwise).
pub fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        / 2.0
}

fn cross(o: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Sutherland–Hodgman clip of `subject` by the convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut output = subject.to_vec();
    for k in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (e0, e1) = (clip[k], clip[(k + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (sc, sp) = (cross(e0, e1, cur), cross(e0, e1, prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    output
}

/// IoU of two walls' thickened floor footprints.
pub fn projection_iou(a: &Wall, b: &Wall, thickness: f64) -> f64 {
    let pa = wall_footprint_polygon(a, thickness);
    let pb = wall_footprint_polygon(b, thickness);
    let inter = polygon_area(&clip_convex(&pa, &pb)).max(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (polygon_area(&pa) + polygon_area(&pb) - inter)
}

/// Layout F1 where walls match when their footprint IoU reaches `iou_thr`.
pub fn layout_f1_projection(preds: &[Vec<Wall>], gts: &[Vec<Wall>], iou_thr: f64, thickness: f64) -> Result<LayoutScores> {
    if !(thickness > 0.0) {
        return Err(Error::InvalidConfig(format!("wall thickness must be positive, got {thickness}")));
    }
    let tp: Vec<usize> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            greedy_walls(p, g, |a, b| {
                let iou = projection_iou(a, b, thickness);
                (iou >= iou_thr).then_some(iou)
            })
        })
        .collect();
    Ok(pool_layout(tp, &refs(preds), &refs(gts)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub corner_threshold: f64,
    pub match_order: MatchOrder,
    pub wall_thickness: f64,
    /// Worker threads for per-scene matching; 0 or 1 runs inline.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            corner_threshold: WALL_MATCH_DISTANCE,
            match_order: MatchOrder::Score,
            wall_thickness: DEFAULT_WALL_THICKNESS,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerLayoutScores {
    pub distance_threshold: f64,
    #[serde(flatten)]
    pub scores: LayoutScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLayoutScores {
    pub iou_threshold: f64,
    pub wall_thickness: f64,
    #[serde(flatten)]
    pub scores: LayoutScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: usize,
    pub detection: Vec<DetectionScores>,
    pub layout_corner: CornerLayoutScores,
    pub layout_projection: Vec<ProjectionLayoutScores>,
}

impl EvalReport {
    pub fn map_at(&self, iou_threshold: f64) -> Option<f64> {
        self.detection
            .iter()
            .find(|d| d.iou_threshold == iou_threshold)
            .and_then(|d| d.map)
    }

    pub fn map_25(&self) -> Option<f64> {
        self.map_at(0.25)
    }

    pub fn map_50(&self) -> Option<f64> {
        self.map_at(0.5)
    }

    /// Corner-distance layout F1 in [0, 1].
    pub fn f1(&self) -> f64 {
        self.layout_corner.scores.f1
    }

    pub fn f1_projection(&self, iou_threshold: f64) -> Option<f64> {
        self.layout_projection
            .iter()
            .find(|p| p.iou_threshold == iou_threshold)
            .map(|p| p.scores.f1)
    }

    /// `mAP@0.25 mAP@0.5 F1` with F1 on the 0-100 scale.
    pub fn summary_line(&self) -> String {
        let fmt = |m: Option<f64>| m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        format!(
            "mAP@0.25={} mAP@0.5={} F1={:.2}",
            fmt(self.map_25()),
            fmt(self.map_50()),
            self.f1() * 100.0
        )
    }
}

struct SceneMatches {
    detection: Vec<Vec<(u32, f64, bool)>>,
    corner_tp: usize,
    projection_tp: Vec<usize>,
}

fn match_scene(pred: &Scene, gt: &Scene, cfg: &EvalConfig) -> SceneMatches {
    SceneMatches {
        detection: DETECTION_IOU_THRESHOLDS
            .iter()
            .map(|&t| match_objects(&pred.objects, &gt.objects, t))
            .collect(),
        corner_tp: corner_tp(&pred.walls, &gt.walls, cfg.corner_threshold, cfg.match_order),
        projection_tp: PROJECTION_IOU_THRESHOLDS
            .iter()
            .map(|&t| {
                greedy_walls(&pred.walls, &gt.walls, |a, b| {
                    let iou = projection_iou(a, b, cfg.wall_thickness);
                    (iou >= t).then_some(iou)
                })
            })
            .collect(),
    }
}

/// Full benchmark over aligned prediction and ground-truth scenes.
pub fn evaluate(preds: &[Scene], gts: &[Scene], cfg: &EvalConfig) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::SceneAlignment(format!(
            "{} prediction scenes vs {} ground-truth scenes",
            preds.len(),
            gts.len()
        )));
    }
    if !(cfg.wall_thickness > 0.0) {
        return Err(Error::InvalidConfig(format!("wall thickness must be positive, got {}", cfg.wall_thickness)));
    }
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        if !p.categories.is_empty() && !g.categories.is_empty() && p.categories != g.categories {
            return Err(Error::CategoryMismatch(format!("scene {i}")));
        }
    }
    if let Some(first) = gts.iter().find(|g| !g.categories.is_empty()) {
        if let Some(i) = gts.iter().position(|g| !g.categories.is_empty() && g.categories != first.categories) {
            return Err(Error::CategoryMismatch(format!("ground-truth scene {i} differs from the first")));
        }
    }

    let matches: Vec<SceneMatches> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| {
            preds
                .par_iter()
                .zip(gts)
                .map(|(p, g)| match_scene(p, g, cfg))
                .collect()
        })
    } else {
        preds.iter().zip(gts).map(|(p, g)| match_scene(p, g, cfg)).collect()
    };

    let gt_objects: Vec<&[DetectedObject]> = gts.iter().map(|g| g.objects.as_slice()).collect();
    let pred_walls: Vec<&[Wall]> = preds.iter().map(|p| p.walls.as_slice()).collect();
    let gt_walls: Vec<&[Wall]> = gts.iter().map(|g| g.walls.as_slice()).collect();

    let detection = DETECTION_IOU_THRESHOLDS
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let per_scene = matches.iter().map(|m| m.detection[k].clone()).collect();
            pool_detections(per_scene, &gt_objects, t)
        })
        .collect();
    let layout_corner = CornerLayoutScores {
        distance_threshold: cfg.corner_threshold,
        scores: pool_layout(matches.iter().map(|m| m.corner_tp), &pred_walls, &gt_walls),
    };
    let layout_projection = PROJECTION_IOU_THRESHOLDS
        .iter()
        .enumerate()
        .map(|(k, &t)| ProjectionLayoutScores {
            iou_threshold: t,
            wall_thickness: cfg.wall_thickness,
            scores: pool_layout(matches.iter().map(|m| m.projection_tp[k]), &pred_walls, &gt_walls),
        })
        .collect();
    Ok(EvalReport {
        scenes: gts.len(),
        detection,
        layout_corner,
        layout_projection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{canonicalize_wall, Box3};
    use nalgebra::Vector3;

    fn obj(x: f64, category: u32, score: f64) -> DetectedObject {
        DetectedObject::new(Box3::new(Vector3::new(x, 0.0, 0.0), Vector3::repeat(1.0)).unwrap(), category, score).unwrap()
    }

    fn wall(a: [f64; 2], b: [f64; 2]) -> Wall {
        let lo = |p: [f64; 2]| Vector3::new(p[0], p[1], 0.0);
        let h = Vector3::new(0.0, 0.0, 2.5);
        canonicalize_wall([lo(a), lo(b), lo(b) + h, lo(a) + h]).unwrap()
    }

    #[test]
    fn perfect_and_false_positive_ap() {
        let gt = vec![vec![obj(0.0, 1, 1.0)]];
        let perfect = map_at(&[vec![obj(0.0, 1, 0.9)]], &gt, 0.5).unwrap();
        assert_eq!(perfect.map, Some(1.0));
        let mixed = map_at(&[vec![obj(5.0, 1, 0.9), obj(0.0, 1, 0.5)]], &gt, 0.5).unwrap();
        assert!((mixed.map.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!((mixed.tp, mixed.fp, mixed.fn_), (1, 1, 0));
        assert!(matches!(map_at(&[vec![]], &[vec![]], 0.5), Err(Error::NoGroundTruth)));
    }

    #[test]
    fn classes_without_ground_truth_are_ignored() {
        let gt = vec![vec![obj(0.0, 1, 1.0)]];
        let r = map_at(&[vec![obj(0.0, 1, 0.9), obj(3.0, 2, 0.8)]], &gt, 0.25).unwrap();
        assert_eq!(r.ap.len(), 1);
        assert_eq!(r.map, Some(1.0));
    }

    #[test]
    fn tied_scores_form_one_operating_point() {
        // one hit and one miss at the same score: order of listing must not matter
        let gt = vec![vec![obj(0.0, 1, 1.0)], vec![obj(0.0, 1, 1.0)]];
        let a = map_at(&[vec![obj(0.0, 1, 0.7)], vec![obj(9.0, 1, 0.7)]], &gt, 0.5).unwrap();
        let b = map_at(&[vec![obj(9.0, 1, 0.7)], vec![obj(0.0, 1, 0.7)]], &gt, 0.5).unwrap();
        assert_eq!(a.map, b.map);
        assert!((a.map.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn corner_f1_examples() {
        let gt = vec![vec![wall([0., 0.], [3., 0.])]];
        let same = layout_f1_corner(&gt, &gt, 0.75, MatchOrder::Score);
        assert_eq!(same.f1, 1.0);
        let empty = layout_f1_corner(&[vec![]], &gt, 0.75, MatchOrder::Score);
        assert_eq!((empty.recall, empty.f1), (0.0, 0.0));
        let shifted = |dy: f64| vec![vec![wall([0., dy], [3., dy])]];
        assert_eq!(layout_f1_corner(&shifted(0.8), &gt, 0.75, MatchOrder::Score).f1, 0.0);
        assert_eq!(layout_f1_corner(&shifted(0.7), &gt, 0.75, MatchOrder::Score).f1, 1.0);
        assert_eq!(layout_f1_corner(&shifted(0.7), &gt, 0.75, MatchOrder::Distance).f1, 1.0);
    }

    #[test]
    fn distance_order_can_beat_score_order() {
        // the top-scored prediction sits between two walls and takes the lower one,
        // leaving the second prediction without a partner
        let gts = vec![vec![wall([0., 0.], [3., 0.]), wall([0., 1.0], [3., 1.0])]];
        let preds = vec![vec![
            wall([0., 0.45], [3., 0.45]).with_score(0.9).unwrap(),
            wall([0., -0.3], [3., -0.3]).with_score(0.5).unwrap(),
        ]];
        assert_eq!(layout_f1_corner(&preds, &gts, 0.75, MatchOrder::Score).tp, 1);
        assert_eq!(layout_f1_corner(&preds, &gts, 0.75, MatchOrder::Distance).tp, 2);
    }

    #[test]
    fn crossing_walls_have_small_projection_iou() {
        let a = wall([-1., 0.], [1., 0.]);
        let b = wall([0., -1.], [0., 1.]);
        let iou = projection_iou(&a, &b, 0.10);
        assert!((iou - 0.01 / 0.39).abs() < 1e-12, "{iou}");
        let r = layout_f1_projection(&[vec![a]], &[vec![b]], 0.25, 0.10).unwrap();
        assert_eq!(r.f1, 0.0);
        let same = layout_f1_projection(&[vec![a, b]], &[vec![b, a]], 0.5, 0.10).unwrap();
        assert_eq!(same.f1, 1.0);
        assert!(layout_f1_projection(&[vec![a]], &[vec![b]], 0.25, 0.0).is_err());
    }

    #[test]
    fn overlapping_parallel_footprints() {
        let a = wall([0., 0.], [2., 0.]);
        let b = wall([1., 0.], [3., 0.]);
        // 1 m of shared length at full thickness
        assert!((projection_iou(&a, &b, 0.1) - 0.1 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn average_precision_envelope() {
        // TP, FP, TP with 2 GT: precisions 1, 1/2, 2/3 at recalls 1/2, 1/2, 1
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        assert!((ap - (0.5 * 1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&[], 3), 0.0);
    }
}
