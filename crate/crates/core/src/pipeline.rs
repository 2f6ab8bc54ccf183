//! The closed-loop self-test: ground truth is turned into ideal head
//! outputs, which are decoded, suppressed and scored against the scene.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::assign::{assign_objects, assign_walls, wall_anchor_point, WallAssignMode, DEFAULT_K};
use crate::error::{Error, Result};
use crate::infer::{decode_detections, decode_walls, nms_boxes, nms_walls, DEFAULT_IOU_THRESHOLD, DEFAULT_SCORE_THRESHOLD, WALL_MATCH_DISTANCE};
use crate::io::heads::{from_vectors, to_vectors, HeadOutputs};
use crate::losses::{total_loss, DetectionOutputs, LayoutOutputs, LossBreakdown, LossConfig, LossTargets};
use crate::metrics::{evaluate, EvalConfig, EvalReport};
use crate::scene::{CategoryLevelMap, GridLevel, Scene};
use crate::voxel::{build_levels, cap_points, locations, LocationSet, DEFAULT_MAX_POINTS};
use crate::wall_codec::{encode, param_count, WallScheme};

/// Logit magnitude of an ideal head: sigmoid(±20) is within 2.1e-9 of 0 or 1.
pub const IDEAL_LOGIT: f64 = 20.0;

/// Level carrying the layout head.
pub const LAYOUT_LEVEL: GridLevel = GridLevel::Cm32;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scheme: WallScheme,
    pub k: usize,
    pub max_points: usize,
    pub seed: u64,
    /// Category levels; defaults to the size heuristic over the scene's names.
    pub levels: Option<CategoryLevelMap>,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub nms_wall_distance: f64,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheme: WallScheme::Bev2h,
            k: DEFAULT_K,
            max_points: DEFAULT_MAX_POINTS,
            seed: 0,
            levels: None,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            nms_iou: DEFAULT_IOU_THRESHOLD,
            nms_wall_distance: WALL_MATCH_DISTANCE,
            eval: EvalConfig::default(),
        }
    }
}

pub fn wall_assign_mode(scheme: WallScheme) -> WallAssignMode {
    match scheme {
        WallScheme::Bev2h => WallAssignMode::Bev,
        _ => WallAssignMode::Space3d,
    }
}

fn level_map(scene: &Scene, cfg: &PipelineConfig) -> CategoryLevelMap {
    let base = cfg.levels.clone().unwrap_or_else(|| CategoryLevelMap::by_size_heuristic(&scene.categories));
    let mut levels: BTreeMap<u32, GridLevel> = base.iter().collect();
    for obj in &scene.objects {
        levels.entry(obj.category).or_insert(GridLevel::Cm32);
    }
    CategoryLevelMap::new(levels)
}

/// Head outputs that reproduce the scene's annotations exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealHeads {
    pub heads: HeadOutputs,
    /// Objects and walls that won no location.
    pub unassigned_objects: Vec<usize>,
    pub unassigned_walls: Vec<usize>,
    /// (row, object) and (wall row, wall) pairs behind the rows above.
    pub object_pairs: Vec<(usize, usize)>,
    pub wall_pairs: Vec<(usize, usize)>,
}

pub fn ideal_heads(scene: &Scene, cfg: &PipelineConfig) -> Result<IdealHeads> {
    let scheme = cfg.scheme;
    // fail fast on scheme preconditions, even for walls that win no location
    for wall in &scene.walls {
        encode(scheme, wall, &Vector3::zeros())?;
    }
    let cloud = cap_points(&scene.cloud, cfg.max_points, cfg.seed);
    let grids = build_levels(&cloud)?;
    let levels = level_map(scene, cfg);
    let mut used: Vec<GridLevel> = levels.iter().map(|(_, l)| l).collect();
    used.sort();
    used.dedup();
    let location_sets: BTreeMap<GridLevel, LocationSet> = used
        .iter()
        .chain([&LAYOUT_LEVEL])
        .map(|l| Ok((*l, locations(&grids[l])?)))
        .collect::<Result<_>>()?;

    let classes = levels.iter().map(|(c, _)| c).max().unwrap_or(0) as usize;
    let object_assignment = assign_objects(&location_sets, &scene.objects, &levels, cfg.k)?;
    let mut anchors = Vec::new();
    let mut logits = Vec::new();
    let mut delta_t = Vec::new();
    let mut log_size = Vec::new();
    let mut object_hit = vec![false; scene.objects.len()];
    let mut object_pairs = Vec::new();
    for level in &used {
        let set = &location_sets[level];
        let targets = object_assignment.targets_on(*level);
        for (j, v) in set.centers().iter().enumerate() {
            let mut row = vec![-IDEAL_LOGIT; classes];
            let (mut dt, mut ls) = (Vector3::zeros(), Vector3::zeros());
            if let Some(&t) = targets.get(&j) {
                let obj = &scene.objects[t];
                row[obj.category as usize - 1] = IDEAL_LOGIT;
                dt = obj.bbox.center() - v;
                ls = obj.bbox.size().map(f64::ln);
                object_hit[t] = true;
                object_pairs.push((anchors.len(), t));
            }
            anchors.push(*v);
            logits.push(row);
            delta_t.push(dt);
            log_size.push(ls);
        }
    }

    let wall_set = &location_sets[&LAYOUT_LEVEL];
    let wall_targets = assign_walls(wall_set, &scene.walls, cfg.k, wall_assign_mode(scheme))?.targets_on(LAYOUT_LEVEL);
    let mut wall_logits = Vec::with_capacity(wall_set.len());
    let mut wall_params = Vec::with_capacity(wall_set.len());
    let mut wall_hit = vec![false; scene.walls.len()];
    let mut wall_pairs = Vec::new();
    for (j, v) in wall_set.centers().iter().enumerate() {
        match wall_targets.get(&j) {
            Some(&t) => {
                wall_logits.push(IDEAL_LOGIT);
                wall_params.push(encode(scheme, &scene.walls[t], v)?.to_vec());
                wall_hit[t] = true;
                wall_pairs.push((j, t));
            }
            None => {
                wall_logits.push(-IDEAL_LOGIT);
                wall_params.push(vec![0.0; param_count(scheme)]);
            }
        }
    }
    let misses = |hit: Vec<bool>| hit.iter().enumerate().filter(|(_, h)| !**h).map(|(i, _)| i).collect();
    Ok(IdealHeads {
        heads: HeadOutputs {
            locations: from_vectors(&anchors),
            logits,
            delta_t: from_vectors(&delta_t),
            log_size: from_vectors(&log_size),
            wall_locations: from_vectors(wall_set.centers()),
            wall_logits,
            wall_params,
            scheme: scheme.to_string(),
        },
        unassigned_objects: misses(object_hit),
        unassigned_walls: misses(wall_hit),
        object_pairs,
        wall_pairs,
    })
}

/// Head rows read back from files carry 9 significant digits.
const ROW_TOLERANCE: f64 = 1e-6;

fn rows_match(a: &[[f64; 3]], b: &[[f64; 3]]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.iter().zip(q).all(|(x, y)| (x - y).abs() <= ROW_TOLERANCE))
}

/// Training loss of `heads` against the scene. The rows must follow the
/// layout `ideal_heads` produces for the same scene and config.
pub fn heads_loss(scene: &Scene, heads: &HeadOutputs, cfg: &PipelineConfig, loss: &LossConfig) -> Result<LossBreakdown> {
    let scheme = heads.scheme()?;
    if scheme != cfg.scheme {
        return Err(Error::Format(format!("heads use scheme {scheme}, expected {}", cfg.scheme)));
    }
    let ideal = ideal_heads(scene, cfg)?;
    if !rows_match(&heads.locations, &ideal.heads.locations) {
        return Err(Error::Format(format!(
            "detection locations do not match the scene's grid ({} rows, expected {})",
            heads.locations.len(),
            ideal.heads.locations.len()
        )));
    }
    if !rows_match(&heads.wall_locations, &ideal.heads.wall_locations) {
        return Err(Error::Format(format!(
            "wall locations do not match the scene's layout grid ({} rows, expected {})",
            heads.wall_locations.len(),
            ideal.heads.wall_locations.len()
        )));
    }
    // exact grid positions; the file's copies only identify the rows
    let anchors = to_vectors(&ideal.heads.locations);
    let delta_t = to_vectors(&heads.delta_t);
    let log_size = to_vectors(&heads.log_size);
    let wall_anchors = to_vectors(&ideal.heads.wall_locations);
    total_loss(
        &DetectionOutputs { anchors: &anchors, logits: &heads.logits, delta_t: &delta_t, log_size: &log_size },
        &LayoutOutputs { anchors: &wall_anchors, logits: &heads.wall_logits, params: &heads.wall_params, scheme },
        &LossTargets {
            objects: &scene.objects,
            object_pairs: &ideal.object_pairs,
            walls: &scene.walls,
            wall_pairs: &ideal.wall_pairs,
        },
        loss,
    )
}

/// For each wall, the nearest layout-level location to its reference point
/// (floor distance for `bev2h`, 3D distance otherwise).
pub fn nearest_layout_anchors(scene: &Scene, scheme: WallScheme, cfg: &PipelineConfig) -> Result<Vec<Vector3<f64>>> {
    let cloud = cap_points(&scene.cloud, cfg.max_points, cfg.seed);
    let set = locations(&build_levels(&cloud)?[&LAYOUT_LEVEL])?;
    let mode = wall_assign_mode(scheme);
    scene
        .walls
        .iter()
        .map(|w| {
            let p = wall_anchor_point(w, mode);
            let j = match mode {
                WallAssignMode::Space3d => set.nearest(&p),
                WallAssignMode::Bev => (0..set.len()).min_by(|&a, &b| {
                    let d = |i: usize| (set.floor_point(i) - p.xy()).norm_squared();
                    d(a).total_cmp(&d(b)).then(a.cmp(&b))
                }),
            };
            Ok(set.centers()[j.ok_or(Error::EmptyGrid)?])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub nms_wall_distance: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            nms_iou: DEFAULT_IOU_THRESHOLD,
            nms_wall_distance: WALL_MATCH_DISTANCE,
        }
    }
}

/// Decodes head outputs and applies NMS to boxes and walls.
pub fn predict(heads: &HeadOutputs, cfg: &InferConfig) -> Result<(Scene, usize)> {
    let dets = decode_detections(
        &to_vectors(&heads.locations),
        &heads.logits,
        &to_vectors(&heads.delta_t),
        &to_vectors(&heads.log_size),
        cfg.score_threshold,
    )?;
    let walls = decode_walls(
        &to_vectors(&heads.wall_locations),
        &heads.wall_logits,
        &heads.wall_params,
        heads.scheme()?,
        cfg.score_threshold,
    )?;
    let scene = Scene {
        objects: nms_boxes(&dets, cfg.nms_iou),
        walls: nms_walls(&walls.walls, cfg.nms_wall_distance),
        ..Scene::default()
    };
    Ok((scene, walls.dropped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub prediction: Scene,
    pub report: EvalReport,
    pub unassigned_objects: Vec<usize>,
    pub unassigned_walls: Vec<usize>,
    pub dropped_walls: usize,
}

impl ClosedLoop {
    /// Layout F1 (both variants) and mAP at both thresholds are exactly one.
    /// Scenes without objects need no detections, likewise for walls.
    pub fn is_perfect(&self) -> bool {
        let det_ok = self.report.detection.iter().all(|d| d.map.map_or(d.fp == 0, |m| m == 1.0));
        det_ok
            && self.report.f1() == 1.0
            && self.report.layout_projection.iter().all(|p| p.scores.f1 == 1.0)
            && self.unassigned_objects.is_empty()
            && self.unassigned_walls.is_empty()
            && self.dropped_walls == 0
    }

    pub fn failure_reason(&self) -> Option<String> {
        if self.is_perfect() {
            return None;
        }
        Some(format!(
            "{}; {} object(s) and {} wall(s) without a location, {} undecodable wall(s)",
            self.report.summary_line(),
            self.unassigned_objects.len(),
            self.unassigned_walls.len(),
            self.dropped_walls
        ))
    }
}

pub fn closed_loop(scene: &Scene, cfg: &PipelineConfig) -> Result<ClosedLoop> {
    let ideal = ideal_heads(scene, cfg)?;
    let infer = InferConfig {
        score_threshold: cfg.score_threshold,
        nms_iou: cfg.nms_iou,
        nms_wall_distance: cfg.nms_wall_distance,
    };
    let (mut prediction, dropped_walls) = predict(&ideal.heads, &infer)?;
    prediction.categories = scene.categories.clone();
    let gt = Scene {
        cloud: Default::default(),
        ..scene.clone()
    };
    let report = evaluate(std::slice::from_ref(&prediction), std::slice::from_ref(&gt), &cfg.eval)?;
    Ok(ClosedLoop {
        prediction,
        report,
        unassigned_objects: ideal.unassigned_objects,
        unassigned_walls: ideal.unassigned_walls,
        dropped_walls,
    })
}

/// Like [`closed_loop`] but an imperfect result is an error.
pub fn verify_closed_loop(scene: &Scene, cfg: &PipelineConfig) -> Result<ClosedLoop> {
    let outcome = closed_loop(scene, cfg)?;
    match outcome.failure_reason() {
        None => Ok(outcome),
        Some(reason) => Err(Error::ClosedLoop(reason)),
    }
}
