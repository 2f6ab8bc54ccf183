//! Dense head outputs and wall regression targets as JSON.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Wall;
use crate::wall_codec::{decode, encode, param_count, WallParams, WallScheme};

/// Raw per-location outputs of the detection and layout heads.
///
/// Detection rows align with `locations`; layout rows with `wall_locations`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadOutputs {
    #[serde(default)]
    pub locations: Vec<[f64; 3]>,
    #[serde(default)]
    pub logits: Vec<Vec<f64>>,
    #[serde(default)]
    pub delta_t: Vec<[f64; 3]>,
    #[serde(default)]
    pub log_size: Vec<[f64; 3]>,
    #[serde(default)]
    pub wall_locations: Vec<[f64; 3]>,
    #[serde(default)]
    pub wall_logits: Vec<f64>,
    #[serde(default)]
    pub wall_params: Vec<Vec<f64>>,
    pub scheme: String,
}

pub fn to_vectors(rows: &[[f64; 3]]) -> Vec<Vector3<f64>> {
    rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect()
}

pub fn from_vectors(v: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

impl HeadOutputs {
    pub fn scheme(&self) -> Result<WallScheme> {
        self.scheme.parse()
    }
}

/// Per-wall parameter rows produced by `encode-walls`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallTargets {
    pub scheme: String,
    pub anchors: Vec<[f64; 3]>,
    pub params: Vec<Vec<f64>>,
}

impl WallTargets {
    /// One row per wall, each relative to the anchor at the same position.
    pub fn encode(scheme: WallScheme, walls: &[Wall], anchors: &[Vector3<f64>]) -> Result<Self> {
        if anchors.len() != walls.len() {
            return Err(Error::LengthMismatch {
                expected: walls.len(),
                actual: anchors.len(),
            });
        }
        let params = walls
            .iter()
            .zip(anchors)
            .map(|(w, a)| encode(scheme, w, a).map(|p| p.to_vec()))
            .collect::<Result<_>>()?;
        Ok(WallTargets {
            scheme: scheme.to_string(),
            anchors: from_vectors(anchors),
            params,
        })
    }

    pub fn decode(&self) -> Result<Vec<Wall>> {
        let scheme = self.validate()?;
        to_vectors(&self.anchors)
            .iter()
            .zip(&self.params)
            .map(|(a, row)| decode(a, &WallParams::from_slice(scheme, row)?))
            .collect()
    }

    pub fn scheme(&self) -> Result<WallScheme> {
        self.scheme.parse()
    }

    pub fn validate(&self) -> Result<WallScheme> {
        let scheme = self.scheme()?;
        if self.anchors.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.anchors.len(),
                actual: self.params.len(),
            });
        }
        let arity = param_count(scheme);
        if let Some(row) = self.params.iter().find(|r| r.len() != arity) {
            return Err(Error::ArityMismatch {
                scheme: scheme.as_str(),
                expected: arity,
                actual: row.len(),
            });
        }
        Ok(scheme)
    }
}

/// Anchor files hold either a bare list of points or `{"anchors": [...]}`;
/// two-element rows are floor points at z = 0.
pub fn parse_anchors(text: &str) -> Result<Vec<Vector3<f64>>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Bare(Vec<Vec<f64>>),
        Wrapped { anchors: Vec<Vec<f64>> },
    }
    let rows = match serde_json::from_str(text)? {
        Doc::Bare(rows) | Doc::Wrapped { anchors: rows } => rows,
    };
    rows.iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [x, y] => Ok(Vector3::new(*x, *y, 0.0)),
            [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
            _ => Err(Error::Format(format!("anchor {i} must have 2 or 3 coordinates"))),
        })
        .collect()
}
