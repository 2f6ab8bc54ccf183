//! Domain types shared by every stage: points, boxes, walls and scenes.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

/// Geometric tolerance in meters for wall invariants.
pub const WALL_TOL: f64 = 1e-6;
/// Angular tolerance in radians for verticality of wall edges.
pub const ANGLE_TOL: f64 = 1e-6;
/// Horizontal coordinates closer than this compare equal when ordering corners.
const LEX_TOL: f64 = 1e-9;

pub fn up() -> Vector3<f64> {
    Vector3::z()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, rgb: [u8; 3]) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinate ({x}, {y}, {z})")));
        }
        Ok(Point {
            x,
            y,
            z,
            r: rgb[0],
            g: rgb[1],
            b: rgb[2],
        })
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn color(&self) -> [f64; 3] {
        [self.r as f64, self.g as f64, self.b as f64]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.points.iter()
    }

    /// Componentwise minimum of the coordinates, `None` for an empty cloud.
    pub fn min_corner(&self) -> Option<Vector3<f64>> {
        let first = self.points.first()?.position();
        Some(self.iter().fold(first, |acc, p| acc.inf(&p.position())))
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Axis-aligned 3D box given by its center and full extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    center: Vector3<f64>,
    size: Vector3<f64>,
}

impl Box3 {
    pub fn new(center: Vector3<f64>, size: Vector3<f64>) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite center {center:?}")));
        }
        if !size.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::InvalidBox(format!(
                "size components must be positive, got ({}, {}, {})",
                size.x, size.y, size.z
            )));
        }
        Ok(Box3 { center, size })
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn size(&self) -> Vector3<f64> {
        self.size
    }

    pub fn min(&self) -> Vector3<f64> {
        self.center - self.size / 2.0
    }

    pub fn max(&self) -> Vector3<f64> {
        self.center + self.size / 2.0
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedObject {
    pub bbox: Box3,
    pub category: u32,
    pub score: f64,
}

impl DetectedObject {
    pub fn new(bbox: Box3, category: u32, score: f64) -> Result<Self> {
        if category == 0 {
            return Err(Error::Format("category ids start at 1".into()));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Format(format!("score {score} outside [0, 1]")));
        }
        Ok(DetectedObject {
            bbox,
            category,
            score,
        })
    }

    /// A ground-truth object (score 1).
    pub fn ground_truth(bbox: Box3, category: u32) -> Result<Self> {
        Self::new(bbox, category, 1.0)
    }
}

/// A vertical rectangular wall with corners in canonical order:
/// lower-A, lower-B, upper-B, upper-A.
///
/// Lower-A is the lower corner with the lexicographically smaller `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    corners: [Vector3<f64>; 4],
    score: Option<f64>,
}

/// Derived wall quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallGeometry {
    pub center: Vector3<f64>,
    pub length: f64,
    pub height: f64,
    pub normal: Vector3<f64>,
}

const PAIRINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];

fn xy_less(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    if (a.x - b.x).abs() > LEX_TOL {
        a.x < b.x
    } else {
        a.y < b.y
    }
}

/// Splits a segment into (lower, upper) endpoints.
fn orient(a: Vector3<f64>, b: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    if a.z <= b.z {
        (a, b)
    } else {
        (b, a)
    }
}

fn is_vertical(edge: &Vector3<f64>) -> bool {
    edge.z > WALL_TOL && edge.xy().norm() <= ANGLE_TOL.tan() * edge.z
}

/// Reorders four corners into the canonical wall order and validates the result.
pub fn canonicalize_wall(corners: [Vector3<f64>; 4]) -> Result<Wall> {
    if corners.iter().any(|c| !c.iter().all(|v| v.is_finite())) {
        return Err(Error::NonVerticalWall("non-finite corner".into()));
    }
    for pairing in PAIRINGS {
        let degenerate = pairing
            .iter()
            .all(|&(i, j)| (corners[i] - corners[j]).norm() <= WALL_TOL);
        if degenerate {
            return Err(Error::DegenerateWall("corners collapse pairwise".into()));
        }
    }

    let edges = PAIRINGS.iter().find_map(|pairing| {
        let [(i, j), (k, l)] = *pairing;
        let first = orient(corners[i], corners[j]);
        let second = orient(corners[k], corners[l]);
        (is_vertical(&(first.1 - first.0)) && is_vertical(&(second.1 - second.0)))
            .then_some((first, second))
    });
    let Some((first, second)) = edges else {
        return Err(Error::NonVerticalWall(
            "no corner pairing yields two vertical edges".into(),
        ));
    };
    let (edge_a, edge_b) = if xy_less(&second.0, &first.0) {
        (second, first)
    } else {
        (first, second)
    };
    let ordered = [edge_a.0, edge_b.0, edge_b.1, edge_a.1];

    let lower_len = (ordered[1] - ordered[0]).norm();
    if lower_len <= WALL_TOL {
        return Err(Error::DegenerateWall(format!(
            "lower edge length {lower_len:.3e} m"
        )));
    }
    let height_a = (ordered[3] - ordered[0]).norm();
    let height_b = (ordered[2] - ordered[1]).norm();
    if (height_a - height_b).abs() > WALL_TOL {
        return Err(Error::NonVerticalWall(format!(
            "vertical edges differ in length ({height_a} vs {height_b})"
        )));
    }
    let plane_normal = (ordered[1] - ordered[0]).cross(&(ordered[3] - ordered[0]));
    let off_plane = (ordered[2] - ordered[0]).dot(&plane_normal.normalize()).abs();
    if off_plane > WALL_TOL {
        return Err(Error::NonVerticalWall(format!(
            "corners not coplanar ({off_plane:.3e} m)"
        )));
    }
    Ok(Wall {
        corners: ordered,
        score: None,
    })
}

impl Wall {
    pub fn from_corners(corners: [Vector3<f64>; 4]) -> Result<Self> {
        canonicalize_wall(corners)
    }

    pub fn with_score(mut self, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Format(format!("wall score {score} outside [0, 1]")));
        }
        self.score = Some(score);
        Ok(self)
    }

    pub fn corners(&self) -> &[Vector3<f64>; 4] {
        &self.corners
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    /// Score used for ranking; unscored walls rank as certain.
    pub fn rank_score(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }

    pub fn lower(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.corners[0], self.corners[1])
    }

    /// Floor projection of the lower edge.
    pub fn footprint(&self) -> (Vector2<f64>, Vector2<f64>) {
        (self.corners[0].xy(), self.corners[1].xy())
    }

    pub fn geometry(&self) -> WallGeometry {
        wall_geometry(self)
    }
}

/// Center, length, height and unit normal of a wall.
///
/// The normal is `edge × up`, where `edge` is the horizontal direction from
/// lower-A to lower-B.
pub fn wall_geometry(wall: &Wall) -> WallGeometry {
    let c = &wall.corners;
    let center = (c[0] + c[1] + c[2] + c[3]) / 4.0;
    let lower = c[1] - c[0];
    let direction = Vector3::new(lower.x, lower.y, 0.0).normalize();
    WallGeometry {
        center,
        length: lower.norm(),
        height: (c[3] - c[0]).norm(),
        normal: direction.cross(&up()),
    }
}

/// Feature grid levels of the detection and layout heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GridLevel {
    Cm8,
    Cm16,
    Cm32,
    Cm64,
}

impl GridLevel {
    pub const ALL: [GridLevel; 4] = [GridLevel::Cm8, GridLevel::Cm16, GridLevel::Cm32, GridLevel::Cm64];

    pub fn centimeters(self) -> u32 {
        match self {
            GridLevel::Cm8 => 8,
            GridLevel::Cm16 => 16,
            GridLevel::Cm32 => 32,
            GridLevel::Cm64 => 64,
        }
    }

    pub fn voxel_size(self) -> f64 {
        self.centimeters() as f64 / 100.0
    }

    pub fn from_centimeters(cm: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.centimeters() == cm)
    }

    /// Level whose cell size matches `size` meters, if any.
    pub fn from_voxel_size(size: f64) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|l| (l.voxel_size() - size).abs() < 1e-9)
    }
}

impl fmt::Display for GridLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cm", self.centimeters())
    }
}

/// Which feature level each object category is detected on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryLevelMap {
    levels: BTreeMap<u32, GridLevel>,
}

impl CategoryLevelMap {
    pub fn new(levels: BTreeMap<u32, GridLevel>) -> Self {
        CategoryLevelMap { levels }
    }

    /// Builds the map from category names, resolved through `categories`.
    pub fn from_names(
        by_name: &BTreeMap<String, u32>,
        categories: &BTreeMap<u32, String>,
    ) -> Result<Self> {
        let mut levels = BTreeMap::new();
        for (id, name) in categories {
            let Some(&cm) = by_name.get(name) else {
                return Err(Error::UnknownCategory(*id));
            };
            let level = match GridLevel::from_centimeters(cm) {
                Some(l @ (GridLevel::Cm16 | GridLevel::Cm32)) => l,
                _ => {
                    return Err(Error::Format(format!(
                        "category `{name}`: head level must be 16 or 32 cm, got {cm}"
                    )))
                }
            };
            levels.insert(*id, level);
        }
        for name in by_name.keys() {
            if !categories.values().any(|n| n == name) {
                return Err(Error::Format(format!(
                    "level map names unknown category `{name}`"
                )));
            }
        }
        Ok(CategoryLevelMap { levels })
    }

    /// Large furniture on the 32 cm level, small items on 16 cm.
    pub fn by_size_heuristic(categories: &BTreeMap<u32, String>) -> Self {
        const SMALL: [&str; 8] = [
            "chair",
            "nightstand",
            "toilet",
            "sink",
            "lamp",
            "pillow",
            "box",
            "picture",
        ];
        let levels = categories
            .iter()
            .map(|(id, name)| {
                let small = SMALL.contains(&name.to_lowercase().as_str());
                (*id, if small { GridLevel::Cm16 } else { GridLevel::Cm32 })
            })
            .collect();
        CategoryLevelMap { levels }
    }

    pub fn level(&self, category: u32) -> Result<GridLevel> {
        self.levels
            .get(&category)
            .copied()
            .ok_or(Error::UnknownCategory(category))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, GridLevel)> + '_ {
        self.levels.iter().map(|(c, l)| (*c, *l))
    }
}

/// A point cloud with its ground-truth objects and layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub objects: Vec<DetectedObject>,
    pub walls: Vec<Wall>,
    pub categories: BTreeMap<u32, String>,
}

impl Scene {
    pub fn new(
        cloud: PointCloud,
        objects: Vec<DetectedObject>,
        walls: Vec<Wall>,
        categories: BTreeMap<u32, String>,
    ) -> Result<Self> {
        if !categories.is_empty() {
            if let Some(o) = objects
                .iter()
                .find(|o| !categories.contains_key(&o.category))
            {
                return Err(Error::CategoryMismatch(format!(
                    "object category {} missing from the category table",
                    o.category
                )));
            }
        }
        Ok(Scene {
            cloud,
            objects,
            walls,
            categories,
        })
    }
}
