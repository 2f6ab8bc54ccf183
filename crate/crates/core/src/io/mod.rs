//! File formats: canonical JSON, PLY and text point clouds, scene files,
//! head outputs, wall targets and evaluation reports.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub mod heads;
pub mod json;
pub mod ply;
pub mod report;
pub mod scene_file;

pub use scene_file::{align_scenes, read_scene, read_scene_list, write_scene, PointsOut, SceneRecord};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
