//! PLY (ascii and binary little-endian) and whitespace text point clouds.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
    has_list: bool,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_start: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Ply(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let end = bytes
        .windows(10)
        .position(|w| w == b"end_header")
        .ok_or_else(|| bad("missing end_header"))?;
    let mut body_start = end + 10;
    // the header line ends with \n or \r\n
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(bad("missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", "binary_big_endian", _] => return Err(bad("binary_big_endian is not supported")),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count `{count}`")))?,
                props: Vec::new(),
                has_list: false,
            }),
            ["property", "list", ..] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                if el.name == "vertex" {
                    return Err(bad("list properties on vertices are not supported"));
                }
                el.has_list = true;
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type `{ty}`")))?;
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                el.props.push((name.to_string(), ty));
            }
            _ => return Err(bad(format!("unrecognized header line `{line}`"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| bad("missing format line"))?,
        elements,
        body_start,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout> {
    let find = |name: &str| el.props.iter().position(|(n, _)| n == name);
    let need = |name: &str| find(name).ok_or_else(|| bad(format!("vertex property `{name}` missing")));
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        (None, None, None) => None,
        _ => return Err(bad("incomplete red/green/blue properties")),
    };
    Ok(VertexLayout { xyz: [need("x")?, need("y")?, need("z")?], rgb })
}

fn make_point(values: &[f64], layout: &VertexLayout, index: usize) -> Result<Point> {
    let channel = |i: usize| values[i].round().clamp(0.0, 255.0) as u8;
    let rgb = layout.rgb.map_or([0; 3], |c| [channel(c[0]), channel(c[1]), channel(c[2])]);
    let [x, y, z] = layout.xyz.map(|i| values[i]);
    Point::new(x, y, z, rgb).map_err(|e| bad(format!("vertex {index}: {e}")))
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| bad("no vertex element"))?;
    if header.elements[..vi].iter().any(|e| e.has_list) {
        return Err(bad("list-valued elements before vertices are not supported"));
    }
    let vertex = &header.elements[vi];
    let layout = vertex_layout(vertex)?;
    let body = &bytes[header.body_start..];
    let mut points = Vec::with_capacity(vertex.count);
    match header.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| bad("ascii body is not UTF-8"))?;
            let skip: usize = header.elements[..vi].iter().map(|e| e.count).sum();
            let mut rows = text.lines().map(str::trim).filter(|l| !l.is_empty()).skip(skip);
            for index in 0..vertex.count {
                let row = rows.next().ok_or_else(|| bad(format!("expected {} vertices, found {index}", vertex.count)))?;
                let values: Vec<f64> = row
                    .split_whitespace()
                    .map(|w| w.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(format!("vertex {index}: non-numeric value")))?;
                if values.len() != vertex.props.len() {
                    return Err(bad(format!(
                        "vertex {index}: {} values for {} properties",
                        values.len(),
                        vertex.props.len()
                    )));
                }
                points.push(make_point(&values, &layout, index)?);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride = |e: &Element| e.props.iter().map(|(_, t)| t.size()).sum::<usize>();
            let mut offset: usize = header.elements[..vi].iter().map(|e| e.count * stride(e)).sum();
            let row_len = stride(vertex);
            let needed = offset + row_len * vertex.count;
            if body.len() < needed {
                return Err(bad(format!("body has {} bytes, header requires {needed}", body.len())));
            }
            let mut values = vec![0.0; vertex.props.len()];
            for index in 0..vertex.count {
                for (slot, (_, ty)) in values.iter_mut().zip(&vertex.props) {
                    *slot = ty.read_le(&body[offset..]);
                    offset += ty.size();
                }
                points.push(make_point(&values, &layout, index)?);
            }
        }
    }
    Ok(PointCloud::new(points))
}

/// Writes `x y z` as float32 and `red green blue` as uchar.
pub fn ply_bytes(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {name} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .into_bytes();
    for p in cloud.iter() {
        let (x, y, z) = (p.x as f32, p.y as f32, p.z as f32);
        match format {
            PlyFormat::Ascii => out.extend(format!("{x} {y} {z} {} {} {}\n", p.r, p.g, p.b).bytes()),
            PlyFormat::BinaryLittleEndian => {
                for v in [x, y, z] {
                    out.extend(v.to_le_bytes());
                }
                out.extend([p.r, p.g, p.b]);
            }
        }
    }
    out
}

/// Parses `x y z [r g b]` rows; blank lines and `#` comments are skipped.
pub fn parse_text_cloud(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = || Error::Format(format!("point line {}: expected `x y z` or `x y z r g b`", n + 1));
        let values: Vec<f64> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| err())?;
        let rgb = match values.len() {
            3 => [0; 3],
            6 => [3, 4, 5].map(|i| values[i].round().clamp(0.0, 255.0) as u8),
            _ => return Err(err()),
        };
        points.push(Point::new(values[0], values[1], values[2], rgb)?);
    }
    Ok(PointCloud::new(points))
}

/// Reads a PLY file (detected by its magic) or a text cloud.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = super::read_bytes(path)?;
    if bytes.starts_with(b"ply") {
        parse_ply(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not text or PLY", path.display())))?;
        parse_text_cloud(&text)
    }
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    super::write_bytes(path, &ply_bytes(cloud, format))
}
