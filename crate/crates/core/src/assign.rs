//! Training correspondences between grid locations and ground-truth targets.
//!
//! Every target claims its `k` nearest locations on its level. A location
//! claimed by several targets goes to the target whose reference point is
//! nearest; losers are not refilled. Distance ties between locations are
//! broken by cell index, ties between targets by their geometry.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::{CategoryLevelMap, DetectedObject, GridLevel, Wall};
use crate::voxel::LocationSet;

pub const DEFAULT_K: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TargetKind {
    Object,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AssignedPair {
    pub kind: TargetKind,
    pub level: GridLevel,
    /// Index into the level's [`LocationSet`].
    pub location: usize,
    pub target: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pairs: Vec<AssignedPair>,
}

impl Assignment {
    pub fn pairs(&self) -> &[AssignedPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Location → target map for one level.
    pub fn targets_on(&self, level: GridLevel) -> BTreeMap<usize, usize> {
        self.pairs
            .iter()
            .filter(|p| p.level == level)
            .map(|p| (p.location, p.target))
            .collect()
    }
}

/// How wall distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WallAssignMode {
    /// Wall center against the 3D location.
    #[default]
    Space3d,
    /// Lower-edge midpoint against the location's floor projection.
    Bev,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Core rule shared by objects and walls. `distance(target, location)` is
/// squared; `target_order` ranks targets that tie on distance.
fn assign_nearest(
    n_targets: usize,
    locations: &LocationSet,
    k: usize,
    distance: impl Fn(usize, usize) -> f64,
    target_order: impl Fn(usize, usize) -> Ordering,
) -> Vec<(usize, usize)> {
    let mut claims: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for target in 0..n_targets {
        let mut ranked: Vec<(f64, usize)> = (0..locations.len())
            .map(|loc| (distance(target, loc), loc))
            .collect();
        // locations are sorted by cell index, so the index breaks ties
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, loc) in ranked.iter().take(k) {
            claims
                .entry(loc)
                .and_modify(|best| {
                    let better = d
                        .total_cmp(&best.0)
                        .then_with(|| target_order(target, best.1))
                        .is_lt();
                    if better {
                        *best = (d, target);
                    }
                })
                .or_insert((d, target));
        }
    }
    claims.into_iter().map(|(loc, (_, target))| (loc, target)).collect()
}

fn object_order(objects: &[DetectedObject]) -> impl Fn(usize, usize) -> Ordering + '_ {
    move |a, b| {
        let (oa, ob) = (&objects[a], &objects[b]);
        lex(oa.bbox.center().as_slice(), ob.bbox.center().as_slice())
            .then_with(|| lex(oa.bbox.size().as_slice(), ob.bbox.size().as_slice()))
            .then(oa.category.cmp(&ob.category))
            .then(a.cmp(&b))
    }
}

fn wall_order(walls: &[Wall]) -> impl Fn(usize, usize) -> Ordering + '_ {
    move |a, b| {
        walls[a]
            .corners()
            .iter()
            .zip(walls[b].corners())
            .map(|(p, q)| lex(p.as_slice(), q.as_slice()))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

fn known_level(locations: &LocationSet) -> Result<GridLevel> {
    locations.level().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "location set with {} m cells is not a head level",
            locations.voxel_size()
        ))
    })
}

pub fn assign_objects(
    levels: &BTreeMap<GridLevel, LocationSet>,
    objects: &[DetectedObject],
    level_map: &CategoryLevelMap,
    k: usize,
) -> Result<Assignment> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let mut by_level: BTreeMap<GridLevel, Vec<usize>> = BTreeMap::new();
    for (i, obj) in objects.iter().enumerate() {
        by_level.entry(level_map.level(obj.category)?).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for (level, members) in by_level {
        let locs = levels
            .get(&level)
            .filter(|l| !l.is_empty())
            .ok_or(Error::EmptyLevel(level))?;
        let subset: Vec<DetectedObject> = members.iter().map(|&i| objects[i]).collect();
        let order = object_order(&subset);
        let won = assign_nearest(
            subset.len(),
            locs,
            k,
            |t, l| (locs.centers()[l] - subset[t].bbox.center()).norm_squared(),
            order,
        );
        pairs.extend(won.into_iter().map(|(location, t)| AssignedPair {
            kind: TargetKind::Object,
            level,
            location,
            target: members[t],
        }));
    }
    pairs.sort();
    Ok(Assignment { pairs })
}

/// Reference point of a wall for the given mode.
pub fn wall_anchor_point(wall: &Wall, mode: WallAssignMode) -> Vector3<f64> {
    match mode {
        WallAssignMode::Space3d => wall.geometry().center,
        WallAssignMode::Bev => {
            let (a, b) = wall.footprint();
            let m = (a + b) / 2.0;
            Vector3::new(m.x, m.y, 0.0)
        }
    }
}

pub fn assign_walls(
    locations: &LocationSet,
    walls: &[Wall],
    k: usize,
    mode: WallAssignMode,
) -> Result<Assignment> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let level = known_level(locations)?;
    if locations.is_empty() {
        return Err(Error::EmptyLevel(level));
    }
    let refs: Vec<Vector3<f64>> = walls.iter().map(|w| wall_anchor_point(w, mode)).collect();
    let distance = |t: usize, l: usize| match mode {
        WallAssignMode::Space3d => (locations.centers()[l] - refs[t]).norm_squared(),
        WallAssignMode::Bev => (locations.floor_point(l) - refs[t].xy()).norm_squared(),
    };
    let won = assign_nearest(walls.len(), locations, k, distance, wall_order(walls));
    let mut pairs: Vec<AssignedPair> = won
        .into_iter()
        .map(|(location, target)| AssignedPair {
            kind: TargetKind::Wall,
            level,
            location,
            target,
        })
        .collect();
    pairs.sort();
    Ok(Assignment { pairs })
}
