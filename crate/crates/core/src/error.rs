use std::path::PathBuf;

use thiserror::Error;

use crate::scene::GridLevel;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corners do not form a vertical wall: {0}")]
    NonVerticalWall(String),
    #[error("degenerate wall: {0}")]
    DegenerateWall(String),
    #[error("wall normal has no horizontal component")]
    DegenerateNormal,
    #[error("wall lower corners are not on the floor plane z = 0 (max |z| = {0:.3e})")]
    FloorMisaligned(f64),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("category {0} has no feature level")]
    UnknownCategory(u32),
    #[error("no locations on the {0} level")]
    EmptyLevel(GridLevel),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("scheme {scheme} expects {expected} parameters, got {actual}")]
    ArityMismatch {
        scheme: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unknown wall scheme `{0}` (expected pq, corners4, lower2h or bev2h)")]
    UnknownScheme(String),
    #[error("no class has any ground-truth instance")]
    NoGroundTruth,
    #[error("could not place object {0} after {1} attempts")]
    PlacementFailure(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("category tables disagree: {0}")]
    CategoryMismatch(String),
    #[error("locations are not sorted by cell index")]
    UnsortedLocations,
    #[error("scene ids do not align: {0}")]
    SceneAlignment(String),
    #[error("closed loop failed: {0}")]
    ClosedLoop(String),
    #[error("malformed PLY: {0}")]
    Ply(String),
    #[error("invalid input file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
