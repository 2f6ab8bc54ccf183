//! Turning raw head outputs into scored objects and walls, then greedy NMS.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::losses::{decode_box, iou3d, sigmoid};
use crate::scene::{DetectedObject, Wall};
use crate::wall_codec::{self, param_count, WallParams, WallScheme};

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Corner distance under which two walls are the same wall.
pub const WALL_MATCH_DISTANCE: f64 = 0.75;

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

/// One object per (location, class) whose sigmoid score reaches `score_thr`.
/// Class column `c` becomes category `c + 1`.
pub fn decode_detections(
    anchors: &[Vector3<f64>],
    logits: &[Vec<f64>],
    delta_t: &[Vector3<f64>],
    log_size: &[Vector3<f64>],
    score_thr: f64,
) -> Result<Vec<DetectedObject>> {
    check_len(anchors.len(), logits.len())?;
    check_len(anchors.len(), delta_t.len())?;
    check_len(anchors.len(), log_size.len())?;
    let mut out = Vec::new();
    for (j, row) in logits.iter().enumerate() {
        for (c, &logit) in row.iter().enumerate() {
            let score = sigmoid(logit);
            if !(score >= score_thr) {
                continue;
            }
            // exp underflow yields an empty box; nothing to emit
            let Ok(bbox) = decode_box(&anchors[j], &delta_t[j], &log_size[j]) else {
                continue;
            };
            out.push(DetectedObject {
                bbox,
                category: c as u32 + 1,
                score,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WallDecoding {
    pub walls: Vec<Wall>,
    /// Locations above threshold whose parameters did not form a valid wall.
    pub dropped: usize,
}

pub fn decode_walls(
    anchors: &[Vector3<f64>],
    logits: &[f64],
    params: &[Vec<f64>],
    scheme: WallScheme,
    score_thr: f64,
) -> Result<WallDecoding> {
    check_len(anchors.len(), logits.len())?;
    check_len(anchors.len(), params.len())?;
    let arity = param_count(scheme);
    if let Some(row) = params.iter().find(|r| r.len() != arity) {
        return Err(Error::ArityMismatch {
            scheme: scheme.as_str(),
            expected: arity,
            actual: row.len(),
        });
    }
    let mut out = WallDecoding::default();
    for ((anchor, &logit), row) in anchors.iter().zip(logits).zip(params) {
        let score = sigmoid(logit);
        if !(score >= score_thr) {
            continue;
        }
        let decoded = WallParams::from_slice(scheme, row)
            .and_then(|p| wall_codec::decode(anchor, &p))
            .and_then(|w| w.with_score(score));
        match decoded {
            Ok(w) => out.walls.push(w),
            Err(_) => out.dropped += 1,
        }
    }
    Ok(out)
}

fn max_corner_gap(a: &[Vector3<f64>; 4], b: [Vector3<f64>; 4]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

/// Largest corresponding-corner distance, minimized over the two end orderings.
pub fn wall_distance(a: &Wall, b: &Wall) -> f64 {
    let c = b.corners();
    let direct = max_corner_gap(a.corners(), *c);
    let swapped = max_corner_gap(a.corners(), [c[1], c[0], c[3], c[2]]);
    direct.min(swapped)
}

/// Indices sorted by descending score; equal scores keep insertion order.
fn by_score(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

fn greedy_nms<T: Clone>(
    items: &[T],
    score: impl Fn(&T) -> f64,
    suppresses: impl Fn(&T, &T) -> bool,
) -> Vec<T> {
    let order = by_score(items.iter().map(&score));
    let mut removed = vec![false; items.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        kept.push(items[i].clone());
        for &j in &order[rank + 1..] {
            if !removed[j] && suppresses(&items[i], &items[j]) {
                removed[j] = true;
            }
        }
    }
    kept
}

/// Per-class greedy NMS on 3D IoU.
pub fn nms_boxes(dets: &[DetectedObject], iou_thr: f64) -> Vec<DetectedObject> {
    greedy_nms(
        dets,
        |d| d.score,
        |keep, other| keep.category == other.category && iou3d(&keep.bbox, &other.bbox) > iou_thr,
    )
}

/// Greedy NMS on [`wall_distance`].
pub fn nms_walls(walls: &[Wall], dist_thr: f64) -> Vec<Wall> {
    greedy_nms(walls, Wall::rank_score, |keep, other| wall_distance(keep, other) < dist_thr)
}
