//! Sparse voxel grids, the multi-level location hierarchy, floor-plane
//! pooling and the height profile that compensates for it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{GridLevel, PointCloud};

pub const DEFAULT_MAX_POINTS: usize = 100_000;
pub const BASE_VOXEL_SIZE: f64 = 0.02;
pub const HEIGHT_QUANTILES: usize = 10;
pub const HEIGHT_CODE_DIM: usize = 40;

/// Features of one occupied cell plus the number of points it absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub features: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    voxel_size: f64,
    origin: Vector3<f64>,
    channels: usize,
    cells: BTreeMap<[i64; 3], Cell>,
}

impl VoxelGrid {
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> &BTreeMap<[i64; 3], Cell> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.cells.values().map(|c| c.count).sum()
    }

    pub fn level(&self) -> Option<GridLevel> {
        GridLevel::from_voxel_size(self.voxel_size)
    }

    pub fn cell_index(&self, p: &Vector3<f64>) -> [i64; 3] {
        let rel = (p - self.origin) / self.voxel_size;
        [rel.x.floor() as i64, rel.y.floor() as i64, rel.z.floor() as i64]
    }

    pub fn cell_center(&self, index: &[i64; 3]) -> Vector3<f64> {
        let idx = Vector3::new(index[0] as f64, index[1] as f64, index[2] as f64);
        self.origin + (idx.add_scalar(0.5)) * self.voxel_size
    }
}

/// Randomly keeps at most `max_points` points (original order preserved).
pub fn cap_points(cloud: &PointCloud, max_points: usize, seed: u64) -> PointCloud {
    if cloud.len() <= max_points {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, cloud.len(), max_points).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| cloud.points[i]).collect()
}

/// Voxelizes with the origin at the cloud's componentwise minimum.
pub fn voxelize(cloud: &PointCloud, size: f64) -> Result<VoxelGrid> {
    let origin = cloud.min_corner().ok_or(Error::EmptyCloud)?;
    voxelize_with_origin(cloud, size, origin)
}

/// Half-open cells: index = floor((p - origin) / size). Cell features are the mean color.
pub fn voxelize_with_origin(cloud: &PointCloud, size: f64, origin: Vector3<f64>) -> Result<VoxelGrid> {
    if !(size > 0.0 && size.is_finite()) {
        return Err(Error::InvalidConfig(format!("voxel size must be positive, got {size}")));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut grid = VoxelGrid {
        voxel_size: size,
        origin,
        channels: 3,
        cells: BTreeMap::new(),
    };
    let mut sums: BTreeMap<[i64; 3], ([f64; 3], usize)> = BTreeMap::new();
    for p in cloud.iter() {
        let entry = sums.entry(grid.cell_index(&p.position())).or_insert(([0.0; 3], 0));
        for (acc, c) in entry.0.iter_mut().zip(p.color()) {
            *acc += c;
        }
        entry.1 += 1;
    }
    grid.cells = sums
        .into_iter()
        .map(|(idx, (sum, count))| {
            let features = sum.iter().map(|s| s / count as f64).collect();
            (idx, Cell { features, count })
        })
        .collect();
    Ok(grid)
}

/// Count-weighted merge of cells that share a key.
fn merge_cells<K: Ord, I>(channels: usize, cells: I) -> BTreeMap<K, Cell>
where
    I: IntoIterator<Item = (K, Cell)>,
{
    let mut acc: BTreeMap<K, (Vec<f64>, usize)> = BTreeMap::new();
    for (key, cell) in cells {
        let entry = acc.entry(key).or_insert_with(|| (vec![0.0; channels], 0));
        for (a, f) in entry.0.iter_mut().zip(&cell.features) {
            *a += f * cell.count as f64;
        }
        entry.1 += cell.count;
    }
    acc.into_iter()
        .map(|(key, (sum, count))| {
            let features = sum.into_iter().map(|s| s / count as f64).collect();
            (key, Cell { features, count })
        })
        .collect()
}

/// Merges child cells into parent index `floor(index / factor)`.
pub fn coarsen(grid: &VoxelGrid, factor: i64) -> Result<VoxelGrid> {
    if factor < 2 {
        return Err(Error::InvalidConfig(format!("coarsening factor must be >= 2, got {factor}")));
    }
    let cells = merge_cells(
        grid.channels,
        grid.cells
            .iter()
            .map(|(idx, cell)| (idx.map(|i| i.div_euclid(factor)), cell.clone())),
    );
    Ok(VoxelGrid {
        voxel_size: grid.voxel_size * factor as f64,
        origin: grid.origin,
        channels: grid.channels,
        cells,
    })
}

/// 2 cm voxels coarsened into the 8/16/32/64 cm levels.
pub fn build_levels(cloud: &PointCloud) -> Result<BTreeMap<GridLevel, VoxelGrid>> {
    let base = voxelize(cloud, BASE_VOXEL_SIZE)?;
    let mut levels = BTreeMap::new();
    let mut grid = coarsen(&base, 4)?;
    for level in GridLevel::ALL {
        if level != GridLevel::Cm8 {
            grid = coarsen(&grid, 2)?;
        }
        levels.insert(level, grid.clone());
    }
    Ok(levels)
}

/// Centers of occupied cells, sorted by cell index.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    voxel_size: f64,
    cells: Vec<[i64; 3]>,
    centers: Vec<Vector3<f64>>,
}

impl LocationSet {
    /// Wraps externally supplied cell centers (grid origin at zero).
    ///
    /// Centers must already be ordered by their cell index.
    pub fn from_centers(voxel_size: f64, centers: Vec<Vector3<f64>>) -> Result<Self> {
        if !(voxel_size > 0.0) {
            return Err(Error::InvalidConfig(format!("voxel size must be positive, got {voxel_size}")));
        }
        let cells: Vec<[i64; 3]> = centers
            .iter()
            .map(|c| (c / voxel_size).map(f64::floor).into())
            .map(|v: [f64; 3]| v.map(|x| x as i64))
            .collect();
        if cells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedLocations);
        }
        Ok(LocationSet {
            voxel_size,
            cells,
            centers,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn level(&self) -> Option<GridLevel> {
        GridLevel::from_voxel_size(self.voxel_size)
    }

    pub fn cells(&self) -> &[[i64; 3]] {
        &self.cells
    }

    pub fn centers(&self) -> &[Vector3<f64>] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Floor projection of location `i`.
    pub fn floor_point(&self, i: usize) -> Vector2<f64> {
        self.centers[i].xy()
    }

    /// Index of the location nearest to `p` (ties go to the smaller cell index).
    pub fn nearest(&self, p: &Vector3<f64>) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c - p).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| i)
    }
}

pub fn locations(grid: &VoxelGrid) -> Result<LocationSet> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let cells: Vec<[i64; 3]> = grid.cells.keys().copied().collect();
    let centers = cells.iter().map(|idx| grid.cell_center(idx)).collect();
    Ok(LocationSet {
        voxel_size: grid.voxel_size,
        cells,
        centers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    cell_size: f64,
    origin: Vector2<f64>,
    channels: usize,
    cells: BTreeMap<[i64; 2], Cell>,
}

impl BevGrid {
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> &BTreeMap<[i64; 2], Cell> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.cells.values().map(|c| c.count).sum()
    }
}

/// Average-pools every z-column of the grid onto the floor plane.
pub fn bev_pool(grid: &VoxelGrid) -> Result<BevGrid> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let cells = merge_cells(
        grid.channels,
        grid.cells
            .iter()
            .map(|(idx, cell)| ([idx[0], idx[1]], cell.clone())),
    );
    Ok(BevGrid {
        cell_size: grid.voxel_size,
        origin: grid.origin.xy(),
        channels: grid.channels,
        cells,
    })
}

/// Quantiles of point heights, nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightProfile(Vec<f64>);

impl HeightProfile {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Heights at probabilities `(i + 0.5) / k`, linearly interpolated between sorted samples.
pub fn z_quantiles(cloud: &PointCloud, k: usize) -> Result<HeightProfile> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("number of quantiles must be >= 1".into()));
    }
    let mut z: Vec<f64> = cloud.iter().map(|p| p.z).collect();
    z.sort_by(f64::total_cmp);
    let last = (z.len() - 1) as f64;
    let values = (0..k)
        .map(|i| {
            let pos = (i as f64 + 0.5) / k as f64 * last;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let t = pos - lo as f64;
            z[lo] + (z[hi] - z[lo]) * t
        })
        .collect();
    Ok(HeightProfile(values))
}

/// Weights of the height-profile encoder, row-major (`w[out][in]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    pub w3: Vec<Vec<f64>>,
    pub b3: Vec<f64>,
}

fn to_matrix(name: &str, rows: &[Vec<f64>], expected_cols: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::DimensionMismatch(format!("{name} has no rows")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != expected_cols) {
        return Err(Error::DimensionMismatch(format!(
            "{name} rows must have {expected_cols} columns, found {}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        expected_cols,
        rows.iter().flatten().copied(),
    ))
}

fn to_bias(name: &str, bias: &[f64], rows: usize) -> Result<DVector<f64>> {
    if bias.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "{name} has length {}, expected {rows}",
            bias.len()
        )));
    }
    Ok(DVector::from_column_slice(bias))
}

impl MlpWeights {
    /// Checks the 10 → H1 → H2 → 40 chain.
    pub fn validate(&self) -> Result<()> {
        self.layers().map(|_| ())
    }

    fn layers(&self) -> Result<[(DMatrix<f64>, DVector<f64>); 3]> {
        let w1 = to_matrix("w1", &self.w1, HEIGHT_QUANTILES)?;
        let b1 = to_bias("b1", &self.b1, w1.nrows())?;
        let w2 = to_matrix("w2", &self.w2, w1.nrows())?;
        let b2 = to_bias("b2", &self.b2, w2.nrows())?;
        let w3 = to_matrix("w3", &self.w3, w2.nrows())?;
        if w3.nrows() != HEIGHT_CODE_DIM {
            return Err(Error::DimensionMismatch(format!(
                "w3 must have {HEIGHT_CODE_DIM} rows, found {}",
                w3.nrows()
            )));
        }
        let b3 = to_bias("b3", &self.b3, w3.nrows())?;
        Ok([(w1, b1), (w2, b2), (w3, b3)])
    }
}

/// `W3 · relu(W2 · relu(W1 · x + b1) + b2) + b3`.
pub fn mlp_forward(profile: &HeightProfile, weights: &MlpWeights) -> Result<Vec<f64>> {
    if profile.len() != HEIGHT_QUANTILES {
        return Err(Error::DimensionMismatch(format!(
            "height profile has {} values, expected {HEIGHT_QUANTILES}",
            profile.len()
        )));
    }
    let [(w1, b1), (w2, b2), (w3, b3)] = weights.layers()?;
    let x = DVector::from_column_slice(profile.values());
    let h1 = (w1 * x + b1).map(|v| v.max(0.0));
    let h2 = (w2 * h1 + b2).map(|v| v.max(0.0));
    Ok((w3 * h2 + b3).as_slice().to_vec())
}

/// Appends the scene-wide height code to every floor cell.
pub fn concat_height(bev: &BevGrid, height_code: &[f64]) -> BevGrid {
    let cells = bev
        .cells
        .iter()
        .map(|(idx, cell)| {
            let mut features = cell.features.clone();
            features.extend_from_slice(height_code);
            (*idx, Cell { features, count: cell.count })
        })
        .collect();
    BevGrid {
        cell_size: bev.cell_size,
        origin: bev.origin,
        channels: bev.channels + height_code.len(),
        cells,
    }
}

/// Replaces the per-cell features (e.g. with neck outputs) keeping counts.
pub fn with_features(bev: &BevGrid, channels: usize, features: impl Fn(&[i64; 2]) -> Vec<f64>) -> Result<BevGrid> {
    let mut cells = BTreeMap::new();
    for (idx, cell) in &bev.cells {
        let f = features(idx);
        if f.len() != channels {
            return Err(Error::DimensionMismatch(format!(
                "feature of cell {idx:?} has {} channels, expected {channels}",
                f.len()
            )));
        }
        cells.insert(*idx, Cell { features: f, count: cell.count });
    }
    Ok(BevGrid { cells, channels, ..bev.clone() })
}
