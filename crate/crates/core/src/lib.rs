//! Voxel-based 3D object detection and wall layout estimation for indoor
//! point clouds: wall parameterizations, multi-scale voxel grids, target
//! assignment, losses, inference and evaluation.

pub mod assign;
pub mod error;
pub mod infer;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod synth;
pub mod voxel;
pub mod wall_codec;

pub use error::{Error, Result};
pub use scene::{Box3, DetectedObject, GridLevel, Point, PointCloud, Scene, Wall};
pub use wall_codec::WallScheme;
