//! Training losses with analytic gradients: focal (classification), DIoU
//! (box regression), L1 (wall parameters) and their sum.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::{Box3, DetectedObject, Wall};
use crate::wall_codec::{self, param_count, WallScheme};

/// Probability clamp applied before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Partials with respect to the declared inputs, in declaration order.
    pub gradient: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        values.iter().sum()
    } else {
        let (l, r) = values.split_at(values.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// Sigmoid focal loss of one logit; the gradient has a single entry.
pub fn focal_loss(logit: f64, target: bool, params: FocalParams) -> LossValue {
    let FocalParams { alpha, gamma } = params;
    let (sign, alpha_t) = if target { (1.0, alpha) } else { (-1.0, 1.0 - alpha) };
    let s = sign * logit;
    let p_t = sigmoid(s);
    if p_t < PROB_CLAMP || p_t > 1.0 - PROB_CLAMP {
        let p = p_t.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        return LossValue {
            value: -alpha_t * (1.0 - p).powf(gamma) * p.ln(),
            gradient: vec![0.0],
        };
    }
    let q = sigmoid(-s);
    let log_p = -softplus(-s);
    let modulator = q.powf(gamma);
    let value = -alpha_t * modulator * log_p;
    // d/ds [-a q^g ln p] with dp/ds = p q, dq/ds = -p q
    let d_ds = alpha_t * modulator * (gamma * p_t * log_p - q);
    LossValue {
        value,
        gradient: vec![sign * d_ds],
    }
}

fn overlap_volume(a: &Box3, b: &Box3) -> f64 {
    let lo = a.min().sup(&b.min());
    let hi = a.max().inf(&b.max());
    (hi - lo).map(|d| d.max(0.0)).product()
}

/// Axis-aligned 3D intersection over union.
pub fn iou3d(a: &Box3, b: &Box3) -> f64 {
    let inter = overlap_volume(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.volume() + b.volume() - inter)
}

/// Box decoded from a location and raw regression outputs: `t = v + Δt`, `s = exp(s̃)`.
pub fn decode_box(anchor: &Vector3<f64>, delta_t: &Vector3<f64>, log_size: &Vector3<f64>) -> Result<Box3> {
    Box3::new(anchor + delta_t, log_size.map(f64::exp))
}

/// Distance-IoU loss of a decoded prediction against `gt`.
///
/// Gradient order: `Δt` (3), then `s̃` (3). Kinks where faces touch take
/// subgradient 0.
pub fn diou_loss(
    delta_t: &Vector3<f64>,
    log_size: &Vector3<f64>,
    anchor: &Vector3<f64>,
    gt: &Box3,
) -> LossValue {
    let t = anchor + delta_t;
    let s = log_size.map(f64::exp);
    let (a, b) = (t - s / 2.0, t + s / 2.0);
    let (g, h) = (gt.min(), gt.max());

    let mut overlap = [0.0; 3];
    let mut d_overlap_t = [0.0; 3];
    let mut d_overlap_s = [0.0; 3];
    let mut enclose = [0.0; 3];
    let mut d_enclose_t = [0.0; 3];
    let mut d_enclose_s = [0.0; 3];
    for i in 0..3 {
        let ov = b[i].min(h[i]) - a[i].max(g[i]);
        if ov > 0.0 {
            overlap[i] = ov;
            let top = (b[i] < h[i]) as u8 as f64;
            let bottom = (a[i] > g[i]) as u8 as f64;
            d_overlap_t[i] = top - bottom;
            d_overlap_s[i] = 0.5 * (top + bottom);
        }
        enclose[i] = b[i].max(h[i]) - a[i].min(g[i]);
        let top = (b[i] > h[i]) as u8 as f64;
        let bottom = (a[i] < g[i]) as u8 as f64;
        d_enclose_t[i] = top - bottom;
        d_enclose_s[i] = 0.5 * (top + bottom);
    }

    let inter: f64 = overlap.iter().product();
    let vol_pred: f64 = s.product();
    let union = vol_pred + gt.volume() - inter;
    let iou = inter / union;

    let gt_center = gt.center();
    let rho2 = (t - gt_center).norm_squared();
    let c2: f64 = enclose.iter().map(|w| w * w).sum();
    let value = 1.0 - iou + rho2 / c2;

    let others = |i: usize| overlap[(i + 1) % 3] * overlap[(i + 2) % 3];
    let d_iou = |d_inter: f64, d_vol: f64| (d_inter * (union + inter) - inter * d_vol) / (union * union);

    let mut gradient = vec![0.0; 6];
    for i in 0..3 {
        let d_inter_t = others(i) * d_overlap_t[i];
        let d_inter_s = others(i) * d_overlap_s[i];
        let d_vol_s = vol_pred / s[i];

        let d_c2_t = 2.0 * enclose[i] * d_enclose_t[i];
        let d_c2_s = 2.0 * enclose[i] * d_enclose_s[i];
        let d_rho2_t = 2.0 * (t[i] - gt_center[i]);

        let d_penalty_t = (d_rho2_t * c2 - rho2 * d_c2_t) / (c2 * c2);
        let d_penalty_s = -rho2 * d_c2_s / (c2 * c2);

        gradient[i] = -d_iou(d_inter_t, 0.0) + d_penalty_t;
        // chain through s = exp(s̃)
        gradient[3 + i] = (-d_iou(d_inter_s, d_vol_s) + d_penalty_s) * s[i];
    }
    LossValue { value, gradient }
}

/// Mean absolute error; gradient `sign(pred - target) / n` with 0 at equality.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(LossValue {
            value: 0.0,
            gradient: Vec::new(),
        });
    }
    let n = pred.len() as f64;
    let diffs: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let gradient = diffs
        .iter()
        .map(|&d| if d == 0.0 { 0.0 } else { d.signum() / n })
        .collect();
    Ok(LossValue {
        value: pairwise_sum(&abs) / n,
        gradient,
    })
}

/// Detection head outputs, one row per location.
#[derive(Debug, Clone, Copy)]
pub struct DetectionOutputs<'a> {
    pub anchors: &'a [Vector3<f64>],
    /// Per location, one logit per class; category `c` maps to column `c - 1`.
    pub logits: &'a [Vec<f64>],
    pub delta_t: &'a [Vector3<f64>],
    pub log_size: &'a [Vector3<f64>],
}

/// Layout head outputs, one row per location.
#[derive(Debug, Clone, Copy)]
pub struct LayoutOutputs<'a> {
    pub anchors: &'a [Vector3<f64>],
    pub logits: &'a [f64],
    pub params: &'a [Vec<f64>],
    pub scheme: WallScheme,
}

/// Ground truth and (location, target) pairs for both heads.
#[derive(Debug, Clone, Copy)]
pub struct LossTargets<'a> {
    pub objects: &'a [DetectedObject],
    pub object_pairs: &'a [(usize, usize)],
    pub walls: &'a [Wall],
    pub wall_pairs: &'a [(usize, usize)],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub focal: FocalParams,
    /// Weights of det-focal, det-DIoU, layout-focal, layout-L1.
    pub weights: [f64; 4],
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            focal: FocalParams::default(),
            weights: [1.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub det_focal: f64,
    pub det_diou: f64,
    pub layout_focal: f64,
    pub layout_l1: f64,
    /// Weighted sum; gradient is laid out as det logits (J×C), det
    /// regression (J×6), layout logits (Jw), layout params (Jw×arity).
    pub total: LossValue,
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

fn check_pairs(pairs: &[(usize, usize)], locations: usize, targets: usize) -> Result<()> {
    let mut seen = vec![false; locations];
    for &(loc, target) in pairs {
        if loc >= locations || target >= targets {
            return Err(Error::Format(format!(
                "assignment pair ({loc}, {target}) out of range"
            )));
        }
        if std::mem::replace(&mut seen[loc], true) {
            return Err(Error::Format(format!("location {loc} assigned twice")));
        }
    }
    Ok(())
}

pub fn total_loss(
    det: &DetectionOutputs<'_>,
    layout: &LayoutOutputs<'_>,
    targets: &LossTargets<'_>,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let n_det = det.anchors.len();
    check_len(n_det, det.logits.len())?;
    check_len(n_det, det.delta_t.len())?;
    check_len(n_det, det.log_size.len())?;
    let classes = det.logits.first().map_or(0, Vec::len);
    for row in det.logits {
        check_len(classes, row.len())?;
    }
    let n_wall = layout.anchors.len();
    check_len(n_wall, layout.logits.len())?;
    check_len(n_wall, layout.params.len())?;
    let arity = param_count(layout.scheme);
    for row in layout.params {
        if row.len() != arity {
            return Err(Error::ArityMismatch {
                scheme: layout.scheme.as_str(),
                expected: arity,
                actual: row.len(),
            });
        }
    }
    check_pairs(targets.object_pairs, n_det, targets.objects.len())?;
    check_pairs(targets.wall_pairs, n_wall, targets.walls.len())?;

    let mut positive_class = vec![None; n_det];
    for &(loc, obj) in targets.object_pairs {
        let category = targets.objects[obj].category as usize;
        if category == 0 || category > classes {
            return Err(Error::DimensionMismatch(format!(
                "category {category} has no logit among {classes} classes"
            )));
        }
        positive_class[loc] = Some(category - 1);
    }

    let [w_cls, w_box, w_wcls, w_wreg] = cfg.weights;
    let det_cls_len = n_det * classes;
    let det_reg_off = det_cls_len;
    let wall_cls_off = det_reg_off + n_det * 6;
    let wall_reg_off = wall_cls_off + n_wall;
    let mut gradient = vec![0.0; wall_reg_off + n_wall * arity];

    // detection classification, averaged over locations
    let mut det_focal = Vec::with_capacity(det_cls_len);
    for (j, row) in det.logits.iter().enumerate() {
        for (c, &logit) in row.iter().enumerate() {
            let l = focal_loss(logit, positive_class[j] == Some(c), cfg.focal);
            det_focal.push(l.value);
            gradient[j * classes + c] = w_cls * l.gradient[0] / n_det as f64;
        }
    }
    let det_focal = if n_det == 0 { 0.0 } else { pairwise_sum(&det_focal) / n_det as f64 };

    // box regression, averaged over assigned pairs
    let n_obj_pairs = targets.object_pairs.len() as f64;
    let mut det_diou = Vec::with_capacity(targets.object_pairs.len());
    for &(loc, obj) in targets.object_pairs {
        let l = diou_loss(&det.delta_t[loc], &det.log_size[loc], &det.anchors[loc], &targets.objects[obj].bbox);
        det_diou.push(l.value);
        for (k, g) in l.gradient.iter().enumerate() {
            gradient[det_reg_off + loc * 6 + k] = w_box * g / n_obj_pairs;
        }
    }
    let det_diou = if det_diou.is_empty() { 0.0 } else { pairwise_sum(&det_diou) / n_obj_pairs };

    let mut wall_positive = vec![false; n_wall];
    for &(loc, _) in targets.wall_pairs {
        wall_positive[loc] = true;
    }
    let mut layout_focal = Vec::with_capacity(n_wall);
    for (j, &logit) in layout.logits.iter().enumerate() {
        let l = focal_loss(logit, wall_positive[j], cfg.focal);
        layout_focal.push(l.value);
        gradient[wall_cls_off + j] = w_wcls * l.gradient[0] / n_wall as f64;
    }
    let layout_focal = if n_wall == 0 { 0.0 } else { pairwise_sum(&layout_focal) / n_wall as f64 };

    let n_wall_pairs = targets.wall_pairs.len() as f64;
    let mut layout_l1 = Vec::with_capacity(targets.wall_pairs.len());
    for &(loc, wall) in targets.wall_pairs {
        let target = wall_codec::encode(layout.scheme, &targets.walls[wall], &layout.anchors[loc])?.to_vec();
        let l = l1_loss(&layout.params[loc], &target)?;
        layout_l1.push(l.value);
        for (k, g) in l.gradient.iter().enumerate() {
            gradient[wall_reg_off + loc * arity + k] = w_wreg * g / n_wall_pairs;
        }
    }
    let layout_l1 = if layout_l1.is_empty() { 0.0 } else { pairwise_sum(&layout_l1) / n_wall_pairs };

    let value = w_cls * det_focal + w_box * det_diou + w_wcls * layout_focal + w_wreg * layout_l1;
    Ok(LossBreakdown {
        det_focal,
        det_diou,
        layout_focal,
        layout_l1,
        total: LossValue { value, gradient },
    })
}

/// Central finite differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest relative discrepancy between two gradients, with `floor`
/// guarding the denominator near zero.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(x: f64, y: f64, z: f64) -> Box3 {
        Box3::new(Vector3::new(x, y, z), Vector3::repeat(1.0)).unwrap()
    }

    #[test]
    fn focal_examples() {
        let l = focal_loss(0.0, true, FocalParams::default());
        assert!((l.value - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-12);
        assert!((l.value - 0.043322).abs() < 1e-6);
        assert!(focal_loss(40.0, true, FocalParams::default()).value < 1e-30);
        assert!(focal_loss(-40.0, false, FocalParams::default()).value < 1e-30);
        assert!(focal_loss(15.0, true, FocalParams::default()).value >= 0.0);
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = rng.random_range(-8.0..8.0);
            let target = rng.random_bool(0.5);
            let params = FocalParams {
                alpha: rng.random_range(0.05..0.95),
                gamma: rng.random_range(0.0..3.0),
            };
            let analytic = focal_loss(x, target, params).gradient;
            let numeric = central_difference(|v| focal_loss(v[0], target, params).value, &[x], 1e-5);
            assert!(max_relative_error(&analytic, &numeric, 1e-12) < 1e-6, "x={x}");
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou3d(&cube(0., 0., 0.), &cube(0., 0., 0.)), 1.0);
        assert!((iou3d(&cube(0., 0., 0.), &cube(0.5, 0., 0.)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou3d(&cube(0., 0., 0.), &cube(3., 0., 0.)), 0.0);
    }

    #[test]
    fn iou_is_symmetric_and_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut rand_box = || {
                Box3::new(
                    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                    Vector3::from_fn(|_, _| rng.random_range(0.1..2.0)),
                )
                .unwrap()
            };
            let (a, b) = (rand_box(), rand_box());
            let iou = iou3d(&a, &b);
            assert!((0.0..=1.0).contains(&iou));
            assert!((iou - iou3d(&b, &a)).abs() < 1e-15);
            let shift = Vector3::new(3.0, -2.0, 0.5);
            let moved = |x: &Box3| Box3::new(x.center() + shift, x.size()).unwrap();
            assert!((iou - iou3d(&moved(&a), &moved(&b))).abs() < 1e-12);
            let lambda = 2.5;
            let scaled = |x: &Box3| Box3::new(x.center() * lambda, x.size() * lambda).unwrap();
            assert!((iou - iou3d(&scaled(&a), &scaled(&b))).abs() < 1e-12);
        }
    }

    #[test]
    fn diou_examples() {
        let gt = cube(0., 0., 0.);
        let exact = diou_loss(&Vector3::zeros(), &Vector3::zeros(), &Vector3::zeros(), &gt);
        assert!(exact.value.abs() < 1e-15);
        let apart = diou_loss(&Vector3::zeros(), &Vector3::zeros(), &Vector3::new(2., 0., 0.), &gt);
        assert!((apart.value - (1.0 + 4.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().value, 0.0);
        let l = l1_loss(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l.value, 1.5);
        assert_eq!(l.gradient, vec![0.5, 0.5]);
        assert!(matches!(l1_loss(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn pairwise_sum_agrees_with_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-10);
    }
}
