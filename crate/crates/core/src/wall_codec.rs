//! Wall parameterizations relative to an anchor location.
//!
//! Four schemes are supported, each with a fixed arity:
//!
//! | scheme     | parameters                                   | arity |
//! |------------|----------------------------------------------|-------|
//! | `pq`       | center offset, length, height, normal        | 8     |
//! | `corners4` | offsets to all four corners                  | 12    |
//! | `lower2h`  | offsets to both lower corners, height        | 7     |
//! | `bev2h`    | floor-plane offsets to lower corners, height | 5     |
//!
//! Every decode canonicalizes the resulting corners, so sign conventions of
//! the normal or the end ordering never leak into the parameters.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scene::{canonicalize_wall, up, Wall, WALL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WallScheme {
    Pq,
    Corners4,
    Lower2h,
    Bev2h,
}

impl WallScheme {
    pub const ALL: [WallScheme; 4] = [
        WallScheme::Pq,
        WallScheme::Corners4,
        WallScheme::Lower2h,
        WallScheme::Bev2h,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WallScheme::Pq => "pq",
            WallScheme::Corners4 => "corners4",
            WallScheme::Lower2h => "lower2h",
            WallScheme::Bev2h => "bev2h",
        }
    }
}

impl fmt::Display for WallScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WallScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WallScheme::ALL
            .into_iter()
            .find(|scheme| scheme.as_str() == s)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

/// Number of regressed values per wall for `scheme`.
pub fn param_count(scheme: WallScheme) -> usize {
    match scheme {
        WallScheme::Pq => 8,
        WallScheme::Corners4 => 12,
        WallScheme::Lower2h => 7,
        WallScheme::Bev2h => 5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqParams {
    pub center_offset: Vector3<f64>,
    pub length: f64,
    pub height: f64,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner4Params {
    pub offsets: [Vector3<f64>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lower2HParams {
    pub lower_offsets: [Vector3<f64>; 2],
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bev2HParams {
    pub floor_offsets: [Vector2<f64>; 2],
    pub height: f64,
}

fn check_extent(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > WALL_TOL {
        Ok(())
    } else {
        Err(Error::DegenerateWall(format!("{name} = {value}")))
    }
}

pub fn decode_pq(anchor: &Vector3<f64>, p: &PqParams) -> Result<Wall> {
    check_extent("length", p.length)?;
    check_extent("height", p.height)?;
    let horizontal = Vector3::new(p.normal.x, p.normal.y, 0.0);
    let norm = horizontal.norm();
    if !(norm > 1e-9) {
        return Err(Error::DegenerateNormal);
    }
    let normal = horizontal / norm;
    let along = normal.cross(&up()).normalize() * (p.length / 2.0);
    let vertical = up() * (p.height / 2.0);
    let c = anchor + p.center_offset;
    canonicalize_wall([
        c - along - vertical,
        c + along - vertical,
        c + along + vertical,
        c - along + vertical,
    ])
}

/// Inverse of [`decode_pq`] for walls with a horizontal lower edge.
pub fn encode_pq(wall: &Wall, anchor: &Vector3<f64>) -> PqParams {
    let g = wall.geometry();
    PqParams {
        center_offset: g.center - anchor,
        length: g.length,
        height: g.height,
        normal: g.normal,
    }
}

pub fn decode_corners4(anchor: &Vector3<f64>, p: &Corner4Params) -> Result<Wall> {
    canonicalize_wall(p.offsets.map(|o| anchor + o))
}

pub fn encode_corners4(wall: &Wall, anchor: &Vector3<f64>) -> Corner4Params {
    Corner4Params {
        offsets: wall.corners().map(|c| c - anchor),
    }
}

pub fn decode_lower2h(anchor: &Vector3<f64>, p: &Lower2HParams) -> Result<Wall> {
    check_extent("relative height", p.height)?;
    let [a, b] = p.lower_offsets.map(|o| anchor + o);
    if (a - b).norm() <= WALL_TOL {
        return Err(Error::DegenerateWall("lower corners coincide".into()));
    }
    let lift = up() * p.height;
    canonicalize_wall([a, b, b + lift, a + lift])
}

pub fn encode_lower2h(wall: &Wall, anchor: &Vector3<f64>) -> Lower2HParams {
    let (a, b) = wall.lower();
    Lower2HParams {
        lower_offsets: [a - anchor, b - anchor],
        height: wall.geometry().height,
    }
}

pub fn decode_bev(anchor: &Vector2<f64>, p: &Bev2HParams) -> Result<Wall> {
    check_extent("height", p.height)?;
    if (p.floor_offsets[0] - p.floor_offsets[1]).norm() <= WALL_TOL {
        return Err(Error::DegenerateWall("lower corners coincide".into()));
    }
    let [a, b] = p.floor_offsets.map(|o| {
        let q = anchor + o;
        Vector3::new(q.x, q.y, 0.0)
    });
    let lift = up() * p.height;
    canonicalize_wall([a, b, b + lift, a + lift])
}

/// Encodes a floor-aligned wall; lower corners must sit on z = 0.
pub fn encode_bev(wall: &Wall, anchor: &Vector2<f64>) -> Result<Bev2HParams> {
    let (a, b) = wall.lower();
    let off_floor = a.z.abs().max(b.z.abs());
    if off_floor > WALL_TOL {
        return Err(Error::FloorMisaligned(off_floor));
    }
    Ok(Bev2HParams {
        floor_offsets: [a.xy() - anchor, b.xy() - anchor],
        height: wall.geometry().height,
    })
}

/// Parameters of any scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallParams {
    Pq(PqParams),
    Corners4(Corner4Params),
    Lower2h(Lower2HParams),
    Bev2h(Bev2HParams),
}

impl WallParams {
    pub fn scheme(&self) -> WallScheme {
        match self {
            WallParams::Pq(_) => WallScheme::Pq,
            WallParams::Corners4(_) => WallScheme::Corners4,
            WallParams::Lower2h(_) => WallScheme::Lower2h,
            WallParams::Bev2h(_) => WallScheme::Bev2h,
        }
    }

    /// Flat row in the scheme's fixed field order.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            WallParams::Pq(p) => {
                let mut row = p.center_offset.as_slice().to_vec();
                row.extend([p.length, p.height]);
                row.extend(p.normal.iter());
                row
            }
            WallParams::Corners4(p) => p.offsets.iter().flat_map(|o| o.iter().copied()).collect(),
            WallParams::Lower2h(p) => {
                let mut row: Vec<f64> = p.lower_offsets.iter().flat_map(|o| o.iter().copied()).collect();
                row.push(p.height);
                row
            }
            WallParams::Bev2h(p) => {
                let mut row: Vec<f64> = p.floor_offsets.iter().flat_map(|o| o.iter().copied()).collect();
                row.push(p.height);
                row
            }
        }
    }

    pub fn from_slice(scheme: WallScheme, row: &[f64]) -> Result<Self> {
        let expected = param_count(scheme);
        if row.len() != expected {
            return Err(Error::ArityMismatch {
                scheme: scheme.as_str(),
                expected,
                actual: row.len(),
            });
        }
        let v3 = |i: usize| Vector3::new(row[i], row[i + 1], row[i + 2]);
        let v2 = |i: usize| Vector2::new(row[i], row[i + 1]);
        Ok(match scheme {
            WallScheme::Pq => WallParams::Pq(PqParams {
                center_offset: v3(0),
                length: row[3],
                height: row[4],
                normal: v3(5),
            }),
            WallScheme::Corners4 => WallParams::Corners4(Corner4Params {
                offsets: [v3(0), v3(3), v3(6), v3(9)],
            }),
            WallScheme::Lower2h => WallParams::Lower2h(Lower2HParams {
                lower_offsets: [v3(0), v3(3)],
                height: row[6],
            }),
            WallScheme::Bev2h => WallParams::Bev2h(Bev2HParams {
                floor_offsets: [v2(0), v2(2)],
                height: row[4],
            }),
        })
    }
}

/// Encodes `wall` relative to `anchor`; `bev2h` uses the anchor's floor projection.
pub fn encode(scheme: WallScheme, wall: &Wall, anchor: &Vector3<f64>) -> Result<WallParams> {
    Ok(match scheme {
        WallScheme::Pq => WallParams::Pq(encode_pq(wall, anchor)),
        WallScheme::Corners4 => WallParams::Corners4(encode_corners4(wall, anchor)),
        WallScheme::Lower2h => WallParams::Lower2h(encode_lower2h(wall, anchor)),
        WallScheme::Bev2h => WallParams::Bev2h(encode_bev(wall, &anchor.xy())?),
    })
}

pub fn decode(anchor: &Vector3<f64>, params: &WallParams) -> Result<Wall> {
    match params {
        WallParams::Pq(p) => decode_pq(anchor, p),
        WallParams::Corners4(p) => decode_corners4(anchor, p),
        WallParams::Lower2h(p) => decode_lower2h(anchor, p),
        WallParams::Bev2h(p) => decode_bev(&anchor.xy(), p),
    }
}
