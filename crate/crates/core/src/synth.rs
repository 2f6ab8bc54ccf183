//! Seeded synthetic rooms with exact ground truth, used to close the loop
//! from encoding through decoding and NMS to the metrics.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{canonicalize_wall, up, Box3, DetectedObject, Point, PointCloud, Scene, Wall};

pub const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomType {
    Rectangular,
    LShaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub room_type: RoomType,
    /// Footprint extent along x, meters `[min, max]`.
    pub width: [f64; 2],
    /// Footprint extent along y.
    pub depth: [f64; 2],
    pub height: [f64; 2],
    pub object_count: [usize; 2],
    /// Per-axis `[min, max]` object extents.
    pub object_size: [[f64; 2]; 3],
    /// Minimum horizontal clearance between objects and from walls.
    pub clearance: f64,
    /// Surface samples per square meter.
    pub point_density: f64,
    pub noise_sigma: f64,
    pub categories: BTreeMap<u32, String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            room_type: RoomType::Rectangular,
            width: [4.0, 6.0],
            depth: [3.5, 5.0],
            height: [2.4, 3.0],
            object_count: [1, 4],
            object_size: [[0.4, 1.0], [0.4, 1.0], [0.4, 1.2]],
            clearance: 0.2,
            point_density: 150.0,
            noise_sigma: 0.0,
            categories: default_categories(),
        }
    }
}

pub fn default_categories() -> BTreeMap<u32, String> {
    ["bed", "table", "sofa", "cabinet", "chair", "nightstand"]
        .iter()
        .enumerate()
        .map(|(i, n)| (i as u32 + 1, n.to_string()))
        .collect()
}

fn valid_range(name: &str, r: [f64; 2]) -> Result<()> {
    if r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} range {r:?} must be positive and ordered")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        valid_range("width", self.width)?;
        valid_range("depth", self.depth)?;
        valid_range("height", self.height)?;
        for (axis, r) in ["x", "y", "z"].iter().zip(self.object_size) {
            valid_range(&format!("object size {axis}"), r)?;
        }
        if self.object_count[0] > self.object_count[1] {
            return Err(Error::InvalidConfig("object count range is reversed".into()));
        }
        if !(self.point_density > 0.0) {
            return Err(Error::InvalidConfig("point density must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.clearance >= 0.0) {
            return Err(Error::InvalidConfig("noise and clearance must be non-negative".into()));
        }
        if self.object_count[1] > 0 && self.categories.is_empty() {
            return Err(Error::InvalidConfig("objects requested but no categories given".into()));
        }
        Ok(())
    }
}

/// Footprint as an axis-aligned rectangle, minus a corner notch for L-shaped rooms.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    size: Vector2<f64>,
    notch: Option<Vector2<f64>>,
}

impl Footprint {
    /// Counter-clockwise outline.
    fn outline(&self) -> Vec<Vector2<f64>> {
        let (w, d) = (self.size.x, self.size.y);
        match self.notch {
            None => vec![Vector2::new(0.0, 0.0), Vector2::new(w, 0.0), Vector2::new(w, d), Vector2::new(0.0, d)],
            Some(n) => vec![
                Vector2::new(0.0, 0.0),
                Vector2::new(w, 0.0),
                Vector2::new(w, d - n.y),
                Vector2::new(w - n.x, d - n.y),
                Vector2::new(w - n.x, d),
                Vector2::new(0.0, d),
            ],
        }
    }

    fn area(&self) -> f64 {
        self.size.x * self.size.y - self.notch.map_or(0.0, |n| n.x * n.y)
    }

    fn in_notch(&self, lo: Vector2<f64>, hi: Vector2<f64>) -> bool {
        self.notch.is_some_and(|n| {
            let corner = self.size - n;
            hi.x > corner.x && hi.y > corner.y && lo.x < self.size.x && lo.y < self.size.y
        })
    }

    /// Whether the rectangle `[lo, hi]` keeps `margin` from every wall.
    fn contains(&self, lo: Vector2<f64>, hi: Vector2<f64>, margin: f64) -> bool {
        let m = Vector2::repeat(margin);
        let (lo, hi) = (lo - m, hi + m);
        lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= self.size.x && hi.y <= self.size.y && !self.in_notch(lo, hi)
    }
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as non-negative")
}

fn sample_range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Samples `area * density` points uniformly on the parallelogram `origin + s*u + t*v`.
fn sample_patch(
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Point>,
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    density: f64,
    color: [u8; 3],
) {
    let n = (u.cross(&v).norm() * density).round() as usize;
    for _ in 0..n {
        let p = origin + u * rng.random::<f64>() + v * rng.random::<f64>();
        let jitter = |c: u8, rng: &mut ChaCha8Rng| c.saturating_add(rng.random_range(0..16));
        let rgb = [jitter(color[0], rng), jitter(color[1], rng), jitter(color[2], rng)];
        out.push(Point { x: p.x, y: p.y, z: p.z, r: rgb[0], g: rgb[1], b: rgb[2] });
    }
}

fn category_color(category: u32) -> [u8; 3] {
    let h = category.wrapping_mul(2_654_435_761);
    [(h >> 24) as u8 & 0xC0, (h >> 16) as u8 & 0xC0, (h >> 8) as u8 & 0xC0]
}

/// Surfaces points are sampled from: every wall, the floor and five faces per box.
fn sample_surfaces(
    rng: &mut ChaCha8Rng,
    footprint: &Footprint,
    walls: &[Wall],
    objects: &[DetectedObject],
    density: f64,
) -> Vec<Point> {
    let mut points = Vec::new();
    for wall in walls {
        let c = wall.corners();
        sample_patch(rng, &mut points, c[0], c[1] - c[0], c[3] - c[0], density, [200, 196, 184]);
    }
    let floor_count = (footprint.area() * density).round() as usize;
    let mut placed = 0;
    while placed < floor_count {
        let q = Vector2::new(rng.random::<f64>() * footprint.size.x, rng.random::<f64>() * footprint.size.y);
        if footprint.in_notch(q, q) {
            continue;
        }
        let shade = rng.random_range(0..16);
        points.push(Point { x: q.x, y: q.y, z: 0.0, r: 120 + shade, g: 100 + shade, b: 80 + shade });
        placed += 1;
    }
    for obj in objects {
        let (lo, hi, s) = (obj.bbox.min(), obj.bbox.max(), obj.bbox.size());
        let color = category_color(obj.category);
        let ex = Vector3::x() * s.x;
        let ey = Vector3::y() * s.y;
        let ez = Vector3::z() * s.z;
        sample_patch(rng, &mut points, Vector3::new(lo.x, lo.y, hi.z), ex, ey, density, color);
        sample_patch(rng, &mut points, lo, ex, ez, density, color);
        sample_patch(rng, &mut points, lo, ey, ez, density, color);
        sample_patch(rng, &mut points, Vector3::new(lo.x, hi.y, lo.z), ex, ez, density, color);
        sample_patch(rng, &mut points, Vector3::new(hi.x, lo.y, lo.z), ey, ez, density, color);
    }
    points
}

fn footprint_walls(outline: &[Vector2<f64>], height: f64) -> Result<Vec<Wall>> {
    (0..outline.len())
        .map(|i| {
            let a = outline[i];
            let b = outline[(i + 1) % outline.len()];
            let (a, b) = (Vector3::new(a.x, a.y, 0.0), Vector3::new(b.x, b.y, 0.0));
            canonicalize_wall([a, b, b + up() * height, a + up() * height])
        })
        .collect()
}

pub fn generate_scene(cfg: &SynthConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = Vector2::new(sample_range(&mut rng, cfg.width), sample_range(&mut rng, cfg.depth));
    let height = sample_range(&mut rng, cfg.height);
    let notch = match cfg.room_type {
        RoomType::Rectangular => None,
        RoomType::LShaped => Some(Vector2::new(
            sample_range(&mut rng, [0.3 * size.x, 0.5 * size.x]),
            sample_range(&mut rng, [0.3 * size.y, 0.5 * size.y]),
        )),
    };
    let footprint = Footprint { size, notch };
    let walls = footprint_walls(&footprint.outline(), height)?;

    let count = rng.random_range(cfg.object_count[0]..=cfg.object_count[1]);
    let category_ids: Vec<u32> = cfg.categories.keys().copied().collect();
    let mut objects: Vec<DetectedObject> = Vec::with_capacity(count);
    for index in 0..count {
        let category = category_ids[rng.random_range(0..category_ids.len())];
        let extent = Vector3::new(
            sample_range(&mut rng, cfg.object_size[0]),
            sample_range(&mut rng, cfg.object_size[1]),
            sample_range(&mut rng, cfg.object_size[2]).min(height),
        );
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let lo = Vector2::new(
                rng.random::<f64>() * (size.x - extent.x).max(0.0),
                rng.random::<f64>() * (size.y - extent.y).max(0.0),
            );
            let hi = lo + extent.xy();
            if !footprint.contains(lo, hi, cfg.clearance) {
                continue;
            }
            let clear = objects.iter().all(|o| {
                let (olo, ohi) = (o.bbox.min().xy(), o.bbox.max().xy());
                let gap = cfg.clearance;
                hi.x + gap <= olo.x || ohi.x + gap <= lo.x || hi.y + gap <= olo.y || ohi.y + gap <= lo.y
            });
            if clear {
                placed = Some(lo);
                break;
            }
        }
        let lo = placed.ok_or(Error::PlacementFailure(index, PLACEMENT_ATTEMPTS))?;
        let center = Vector3::new(lo.x + extent.x / 2.0, lo.y + extent.y / 2.0, extent.z / 2.0);
        objects.push(DetectedObject::ground_truth(Box3::new(center, extent)?, category)?);
    }

    let mut points = sample_surfaces(&mut rng, &footprint, &walls, &objects, cfg.point_density);
    if cfg.noise_sigma > 0.0 {
        let noise = gaussian(cfg.noise_sigma);
        for p in &mut points {
            p.x += noise.sample(&mut rng);
            p.y += noise.sample(&mut rng);
            p.z += noise.sample(&mut rng);
        }
    }
    Scene::new(PointCloud::new(points), objects, walls, cfg.categories.clone())
}

/// Jitters object centers and wall geometry with i.i.d. Gaussian noise.
///
/// Walls are jittered through their lower-edge endpoints (in the floor
/// plane) and their height, so every output wall is still valid.
pub fn perturb(scene: &Scene, sigma_center: f64, sigma_corner: f64, seed: u64) -> Result<Scene> {
    if !(sigma_center >= 0.0 && sigma_corner >= 0.0) {
        return Err(Error::InvalidConfig("perturbation sigmas must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scene.clone();
    if sigma_center > 0.0 {
        let noise = gaussian(sigma_center);
        for obj in &mut out.objects {
            let shift = Vector3::from_fn(|_, _| noise.sample(&mut rng));
            obj.bbox = Box3::new(obj.bbox.center() + shift, obj.bbox.size())?;
        }
    }
    if sigma_corner > 0.0 {
        let noise = gaussian(sigma_corner);
        for wall in &mut out.walls {
            let (a, b) = wall.lower();
            let mut jitter = |p: Vector3<f64>| p + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), 0.0);
            let (ja, jb) = (jitter(a), jitter(b));
            let h = (wall.geometry().height + noise.sample(&mut rng)).max(0.05);
            if (ja - jb).norm() < 1e-3 {
                continue;
            }
            let lift = up() * h;
            let mut moved = canonicalize_wall([ja, jb, jb + lift, ja + lift])?;
            if let Some(s) = wall.score() {
                moved = moved.with_score(s)?;
            }
            *wall = moved;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_room(room_type: RoomType, objects: usize) -> SynthConfig {
        SynthConfig {
            seed: 17,
            room_type,
            width: [4.0, 4.0],
            depth: [3.0, 3.0],
            height: [2.5, 2.5],
            object_count: [objects, objects],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn rectangular_room_has_four_perimeter_walls() {
        let scene = generate_scene(&fixed_room(RoomType::Rectangular, 0)).unwrap();
        assert_eq!(scene.walls.len(), 4);
        assert!(scene.objects.is_empty());
        let mut lengths: Vec<f64> = scene.walls.iter().map(|w| w.geometry().length).collect();
        lengths.sort_by(f64::total_cmp);
        assert_eq!(lengths, vec![3.0, 3.0, 4.0, 4.0]);
        for w in &scene.walls {
            assert_eq!(w.corners()[0].z, 0.0);
            assert_eq!(w.geometry().height, 2.5);
            let (a, b) = w.footprint();
            let on_edge = |p: Vector2<f64>| p.x == 0.0 || p.x == 4.0 || p.y == 0.0 || p.y == 3.0;
            assert!(on_edge(a) && on_edge(b));
        }
    }

    #[test]
    fn l_shaped_room_has_six_walls() {
        let scene = generate_scene(&fixed_room(RoomType::LShaped, 2)).unwrap();
        assert_eq!(scene.walls.len(), 6);
        assert_eq!(scene.objects.len(), 2);
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SynthConfig { noise_sigma: 0.01, ..SynthConfig::default() };
        assert_eq!(generate_scene(&cfg).unwrap(), generate_scene(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate_scene(&cfg).unwrap(), generate_scene(&other).unwrap());
    }

    #[test]
    fn impossible_placement_fails() {
        let cfg = SynthConfig {
            object_count: [30, 30],
            object_size: [[1.5, 1.5], [1.5, 1.5], [1.0, 1.0]],
            ..fixed_room(RoomType::Rectangular, 0)
        };
        assert!(matches!(generate_scene(&cfg), Err(Error::PlacementFailure(_, PLACEMENT_ATTEMPTS))));
    }

    #[test]
    fn default_configs_place_reliably() {
        for room_type in [RoomType::Rectangular, RoomType::LShaped] {
            for seed in 0..300 {
                let cfg = SynthConfig { seed, room_type, point_density: 1.0, ..SynthConfig::default() };
                generate_scene(&cfg).unwrap();
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = SynthConfig { width: [3.0, 2.0], ..SynthConfig::default() };
        assert!(generate_scene(&bad).is_err());
        let bad = SynthConfig { point_density: 0.0, ..SynthConfig::default() };
        assert!(generate_scene(&bad).is_err());
    }

    fn point_to_rect(p: Vector3<f64>, o: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>) -> f64 {
        let n = u.cross(&v).normalize();
        let d = p - o;
        let (s, t) = (d.dot(&u) / u.norm_squared(), d.dot(&v) / v.norm_squared());
        let inside = (-1e-12..=1.0 + 1e-12).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&t);
        if inside { d.dot(&n).abs() } else { f64::INFINITY }
    }

    #[test]
    fn noiseless_points_lie_on_surfaces() {
        for room_type in [RoomType::Rectangular, RoomType::LShaped] {
            let cfg = SynthConfig { room_type, point_density: 40.0, ..SynthConfig::default() };
            let scene = generate_scene(&cfg).unwrap();
            let mut rects: Vec<[Vector3<f64>; 3]> = scene
                .walls
                .iter()
                .map(|w| {
                    let c = w.corners();
                    [c[0], c[1] - c[0], c[3] - c[0]]
                })
                .collect();
            let (lo, hi) = scene.walls.iter().flat_map(|w| w.corners().iter()).fold(
                (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), c| (lo.inf(c), hi.sup(c)),
            );
            rects.push([lo, Vector3::x() * (hi.x - lo.x), Vector3::y() * (hi.y - lo.y)]);
            for obj in &scene.objects {
                let (a, b) = (obj.bbox.min(), obj.bbox.max());
                let s = obj.bbox.size();
                let (ex, ey, ez) = (Vector3::x() * s.x, Vector3::y() * s.y, Vector3::z() * s.z);
                rects.extend([
                    [Vector3::new(a.x, a.y, b.z), ex, ey],
                    [a, ex, ez],
                    [a, ey, ez],
                    [Vector3::new(a.x, b.y, a.z), ex, ez],
                    [Vector3::new(b.x, a.y, a.z), ey, ez],
                ]);
            }
            assert!(scene.cloud.len() > 1000);
            for p in scene.cloud.iter() {
                let q = p.position();
                let d = rects.iter().map(|r| point_to_rect(q, r[0], r[1], r[2])).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-9, "point {q:?} is {d} off every surface");
                assert!((0..3).all(|i| q[i] >= lo[i] - 1e-9 && q[i] <= hi[i] + 1e-9));
            }
        }
    }

    #[test]
    fn zero_sigma_perturbation_is_identity() {
        let scene = generate_scene(&SynthConfig::default()).unwrap();
        assert_eq!(perturb(&scene, 0.0, 0.0, 5).unwrap(), scene);
    }

    #[test]
    fn perturbed_walls_stay_valid() {
        let scene = generate_scene(&fixed_room(RoomType::LShaped, 2)).unwrap();
        for (seed, sigma) in [(1, 0.1), (2, 0.6), (3, 2.0)] {
            let p = perturb(&scene, sigma, sigma, seed).unwrap();
            assert_eq!(p.walls.len(), scene.walls.len());
            for w in &p.walls {
                // re-canonicalizing succeeds and is a fixed point
                assert_eq!(&canonicalize_wall(*w.corners()).unwrap(), w);
                assert_eq!(w.corners()[0].z, 0.0);
            }
        }
    }
}
