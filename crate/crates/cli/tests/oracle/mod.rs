//! Brute-force reference implementations, written from the metric and
//! assignment definitions without reusing library matching code.

use std::cmp::Ordering;

use layout3d::scene::{DetectedObject, Wall};

type P2 = [f64; 2];
type P3 = [f64; 3];

fn xyz(v: nalgebra::Vector3<f64>) -> P3 {
    [v.x, v.y, v.z]
}

pub fn box_iou(a: &DetectedObject, b: &DetectedObject) -> f64 {
    let (ac, asz, bc, bsz) = (xyz(a.bbox.center()), xyz(a.bbox.size()), xyz(b.bbox.center()), xyz(b.bbox.size()));
    let mut inter = 1.0;
    for i in 0..3 {
        let lo = (ac[i] - asz[i] / 2.0).max(bc[i] - bsz[i] / 2.0);
        let hi = (ac[i] + asz[i] / 2.0).min(bc[i] + bsz[i] / 2.0);
        inter *= (hi - lo).max(0.0);
    }
    let va = asz[0] * asz[1] * asz[2];
    let vb = bsz[0] * bsz[1] * bsz[2];
    inter / (va + vb - inter)
}

fn by_score_desc<T>(items: &mut [(f64, T)]) {
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
}

/// Per-class AP via explicit PR tabulation and mAP over classes with GT.
pub fn map(preds: &[Vec<DetectedObject>], gts: &[Vec<DetectedObject>], thr: f64) -> Option<f64> {
    let mut classes: Vec<u32> = gts.iter().flatten().map(|o| o.category).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return None;
    }
    let mut aps = Vec::new();
    for &c in &classes {
        let n_gt = gts.iter().flatten().filter(|o| o.category == c).count();
        let mut ranked: Vec<(f64, (usize, usize))> = preds
            .iter()
            .enumerate()
            .flat_map(|(s, ps)| ps.iter().enumerate().filter(|(_, p)| p.category == c).map(move |(i, p)| (p.score, (s, i))))
            .collect();
        by_score_desc(&mut ranked);
        let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut hits = Vec::new();
        for &(_, (s, i)) in &ranked {
            let p = &preds[s][i];
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gts[s].iter().enumerate() {
                if g.category != c || used[s][j] {
                    continue;
                }
                let iou = box_iou(p, g);
                if iou >= thr && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, j));
                }
            }
            if let Some((_, j)) = best {
                used[s][j] = true;
            }
            hits.push(best.is_some());
        }
        // rows of (precision, recall) at every rank
        let mut rows = Vec::new();
        let mut tp = 0;
        for (rank, hit) in hits.iter().enumerate() {
            tp += *hit as usize;
            rows.push((tp as f64 / (rank + 1) as f64, tp as f64 / n_gt as f64));
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for i in 0..rows.len() {
            let recall = rows[i].1;
            if recall > prev_recall {
                let envelope = rows[i..].iter().map(|r| r.0).fold(0.0, f64::max);
                ap += (recall - prev_recall) * envelope;
                prev_recall = recall;
            }
        }
        aps.push(ap);
    }
    Some(aps.iter().sum::<f64>() / aps.len() as f64)
}

fn corners(w: &Wall) -> [P3; 4] {
    w.corners().map(xyz)
}

fn dist(a: P3, b: P3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Max corresponding-corner distance, minimized over the two end orderings.
pub fn wall_distance(a: &Wall, b: &Wall) -> f64 {
    let (ca, cb) = (corners(a), corners(b));
    let straight = (0..4).map(|k| dist(ca[k], cb[k])).fold(0.0, f64::max);
    let swapped = [1, 0, 3, 2].iter().enumerate().map(|(k, &m)| dist(ca[k], cb[m])).fold(0.0, f64::max);
    straight.min(swapped)
}

/// Greedy by descending score; `pick` returns the preferred candidate among
/// the unmatched ground truth.
fn greedy_f1(preds: &[Vec<Wall>], gts: &[Vec<Wall>], pick: impl Fn(&Wall, &Wall) -> Option<f64>, prefer_small: bool) -> (f64, f64, f64) {
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (ps, gs) in preds.iter().zip(gts) {
        np += ps.len();
        ng += gs.len();
        let mut ranked: Vec<(f64, usize)> = ps.iter().enumerate().map(|(i, w)| (w.rank_score(), i)).collect();
        by_score_desc(&mut ranked);
        let mut used = vec![false; gs.len()];
        for (_, i) in ranked {
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gs.iter().enumerate() {
                if used[j] {
                    continue;
                }
                if let Some(v) = pick(&ps[i], g) {
                    let better = best.is_none_or(|(b, _)| if prefer_small { v < b } else { v > b });
                    if better {
                        best = Some((v, j));
                    }
                }
            }
            if let Some((_, j)) = best {
                used[j] = true;
                tp += 1;
            }
        }
    }
    let p = if np == 0 { if ng == 0 { 1.0 } else { 0.0 } } else { tp as f64 / np as f64 };
    let r = if ng == 0 { if np == 0 { 1.0 } else { 0.0 } } else { tp as f64 / ng as f64 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

pub fn corner_f1(preds: &[Vec<Wall>], gts: &[Vec<Wall>], thr: f64) -> (f64, f64, f64) {
    greedy_f1(preds, gts, |p, g| Some(wall_distance(p, g)).filter(|d| *d < thr), true)
}

fn footprint(w: &Wall, t: f64) -> Vec<P2> {
    let c = corners(w);
    let (a, b) = ([c[0][0], c[0][1]], [c[1][0], c[1][1]]);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let n = [-(b[1] - a[1]) / len * t / 2.0, (b[0] - a[0]) / len * t / 2.0];
    vec![[a[0] + n[0], a[1] + n[1]], [a[0] - n[0], a[1] - n[1]], [b[0] - n[0], b[1] - n[1]], [b[0] + n[0], b[1] + n[1]]]
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn inside_convex(p: P2, poly: &[P2]) -> bool {
    let n = poly.len();
    let signs: Vec<f64> = (0..n).map(|i| cross(poly[i], poly[(i + 1) % n], p)).collect();
    signs.iter().all(|&s| s >= -1e-12) || signs.iter().all(|&s| s <= 1e-12)
}

fn segment_hit(p1: P2, p2: P2, q1: P2, q2: P2) -> Option<P2> {
    let r = [p2[0] - p1[0], p2[1] - p1[1]];
    let s = [q2[0] - q1[0], q2[1] - q1[1]];
    let den = r[0] * s[1] - r[1] * s[0];
    if den.abs() < 1e-15 {
        return None;
    }
    let qp = [q1[0] - p1[0], q1[1] - p1[1]];
    let t = (qp[0] * s[1] - qp[1] * s[0]) / den;
    let u = (qp[0] * r[1] - qp[1] * r[0]) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| [p1[0] + t * r[0], p1[1] + t * r[1]])
}

fn area(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]).sum::<f64>().abs() / 2.0
}

/// Intersection of two convex polygons as the hull of contained vertices
/// and edge crossings, sorted by angle about their centroid.
pub fn convex_intersection_area(a: &[P2], b: &[P2]) -> f64 {
    let mut pts: Vec<P2> = a.iter().filter(|p| inside_convex(**p, b)).copied().collect();
    pts.extend(b.iter().filter(|p| inside_convex(**p, a)));
    for i in 0..a.len() {
        for j in 0..b.len() {
            if let Some(p) = segment_hit(a[i], a[(i + 1) % a.len()], b[j], b[(j + 1) % b.len()]) {
                pts.push(p);
            }
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|p, q| (p[1] - cy).atan2(p[0] - cx).total_cmp(&(q[1] - cy).atan2(q[0] - cx)));
    area(&pts)
}

pub fn projection_iou(a: &Wall, b: &Wall, t: f64) -> f64 {
    let (pa, pb) = (footprint(a, t), footprint(b, t));
    let inter = convex_intersection_area(&pa, &pb);
    inter / (area(&pa) + area(&pb) - inter)
}

pub fn projection_f1(preds: &[Vec<Wall>], gts: &[Vec<Wall>], thr: f64, t: f64) -> (f64, f64, f64) {
    greedy_f1(preds, gts, |p, g| Some(projection_iou(p, g, t)).filter(|v| *v >= thr), false)
}

/// Nearest-k claims with nearest-wins conflicts and no refill, from a full
/// distance matrix. `cells[l]` orders tied locations; `rank[t]` orders tied targets.
pub fn assign(dist: &[Vec<f64>], cells: &[[i64; 3]], rank: &[usize], k: usize) -> Vec<(usize, usize)> {
    let n_loc = cells.len();
    let mut claimants: Vec<Vec<usize>> = vec![Vec::new(); n_loc];
    for (t, row) in dist.iter().enumerate() {
        let mut order: Vec<usize> = (0..n_loc).collect();
        order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(cells[a].cmp(&cells[b])));
        for &l in order.iter().take(k) {
            claimants[l].push(t);
        }
    }
    let mut out = Vec::new();
    for (l, ts) in claimants.iter().enumerate() {
        let winner = ts.iter().copied().min_by(|&a, &b| dist[a][l].partial_cmp(&dist[b][l]).unwrap().then(rank[a].cmp(&rank[b])));
        if let Some(t) = winner {
            out.push((l, t));
        }
    }
    out
}
