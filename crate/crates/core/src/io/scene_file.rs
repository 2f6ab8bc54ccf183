//! Scene JSON documents and scene lists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::json::to_canonical_string;
use super::ply::read_cloud;
use crate::error::{Error, Result};
use crate::scene::{canonicalize_wall, Box3, DetectedObject, Point, PointCloud, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PointsDoc {
    Path(String),
    Inline(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    center: [f64; 3],
    size: [f64; 3],
    category: u32,
    #[serde(default = "one")]
    score: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallDoc {
    corners: [[f64; 3]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<PointsDoc>,
    #[serde(default)]
    categories: BTreeMap<String, String>,
    #[serde(default)]
    objects: Vec<ObjectDoc>,
    #[serde(default)]
    walls: Vec<WallDoc>,
}

/// A scene together with its optional identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub id: Option<String>,
    pub scene: Scene,
}

/// How the point cloud is referenced when writing a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum PointsOut {
    Omit,
    Inline,
    /// Path stored verbatim; relative paths resolve against the scene file.
    Path(String),
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn load_points(doc: Option<PointsDoc>, base: &Path) -> Result<PointCloud> {
    match doc {
        None => Ok(PointCloud::default()),
        Some(PointsDoc::Path(p)) => {
            let path = Path::new(&p);
            read_cloud(&if path.is_absolute() { path.to_path_buf() } else { base.join(path) })
        }
        Some(PointsDoc::Inline(rows)) => rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r.as_slice() {
                [x, y, z] => Point::new(*x, *y, *z, [0; 3]),
                [x, y, z, r, g, b] => Point::new(*x, *y, *z, [*r, *g, *b].map(|c| c.round().clamp(0.0, 255.0) as u8)),
                _ => Err(Error::Format(format!("inline point {i} must have 3 or 6 values"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PointCloud::new),
    }
}

fn from_doc(doc: SceneDoc, base: &Path) -> Result<SceneRecord> {
    let categories = doc
        .categories
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| Error::Format(format!("category key `{k}` is not an integer")))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let objects = doc
        .objects
        .iter()
        .map(|o| DetectedObject::new(Box3::new(v3(o.center), v3(o.size))?, o.category, o.score))
        .collect::<Result<Vec<_>>>()?;
    let walls = doc
        .walls
        .iter()
        .map(|w| {
            let wall = canonicalize_wall(w.corners.map(v3))?;
            match w.score {
                Some(s) => wall.with_score(s),
                None => Ok(wall),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let cloud = load_points(doc.points, base)?;
    Ok(SceneRecord {
        id: doc.id,
        scene: Scene::new(cloud, objects, walls, categories)?,
    })
}

fn to_doc(record: &SceneRecord, points: &PointsOut) -> SceneDoc {
    let s = &record.scene;
    let arr = |v: Vector3<f64>| [v.x, v.y, v.z];
    SceneDoc {
        id: record.id.clone(),
        points: match points {
            PointsOut::Omit => None,
            PointsOut::Path(p) => Some(PointsDoc::Path(p.clone())),
            PointsOut::Inline => Some(PointsDoc::Inline(
                s.cloud
                    .iter()
                    .map(|p| vec![p.x, p.y, p.z, p.r as f64, p.g as f64, p.b as f64])
                    .collect(),
            )),
        },
        categories: s.categories.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        objects: s
            .objects
            .iter()
            .map(|o| ObjectDoc {
                center: arr(o.bbox.center()),
                size: arr(o.bbox.size()),
                category: o.category,
                score: o.score,
            })
            .collect(),
        walls: s
            .walls
            .iter()
            .map(|w| WallDoc {
                corners: w.corners().map(arr),
                score: w.score(),
            })
            .collect(),
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn parse_doc(value: Value, base: &Path) -> Result<SceneRecord> {
    from_doc(serde_json::from_value(value)?, base)
}

/// Parses one scene document; `base` resolves relative point paths.
pub fn parse_scene(text: &str, base: &Path) -> Result<SceneRecord> {
    parse_doc(serde_json::from_str(text)?, base)
}

pub fn read_scene(path: &Path) -> Result<SceneRecord> {
    parse_scene(&super::read_text(path)?, &base_dir(path))
}

/// Accepts a JSON array of scenes, `{"scenes": [...]}`, or a single scene.
pub fn parse_scene_list(text: &str, base: &Path) -> Result<Vec<SceneRecord>> {
    let value: Value = serde_json::from_str(text)?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(mut map) if map.contains_key("scenes") => match map.remove("scenes") {
            Some(Value::Array(items)) if map.is_empty() => items,
            _ => return Err(Error::Format("`scenes` must be the only key and hold an array".into())),
        },
        single @ Value::Object(_) => vec![single],
        _ => return Err(Error::Format("expected a scene, a scene array or {\"scenes\": [...]}".into())),
    };
    items.into_iter().map(|v| parse_doc(v, base)).collect()
}

pub fn read_scene_list(path: &Path) -> Result<Vec<SceneRecord>> {
    parse_scene_list(&super::read_text(path)?, &base_dir(path))
}

pub fn scene_to_string(record: &SceneRecord, points: &PointsOut) -> Result<String> {
    Ok(to_canonical_string(&serde_json::to_value(to_doc(record, points))?))
}

pub fn scene_list_to_string(records: &[SceneRecord]) -> Result<String> {
    let docs: Vec<SceneDoc> = records.iter().map(|r| to_doc(r, &PointsOut::Omit)).collect();
    Ok(to_canonical_string(&serde_json::json!({ "scenes": docs })))
}

pub fn write_scene(path: &Path, record: &SceneRecord, points: &PointsOut) -> Result<()> {
    super::write_bytes(path, scene_to_string(record, points)?.as_bytes())
}

fn keys(records: &[SceneRecord]) -> Vec<String> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.id.clone().unwrap_or_else(|| format!("#{i}")))
        .collect()
}

/// Pairs predictions with ground truth by scene id, in ground-truth order.
/// Scenes without an id are keyed by position.
pub fn align_scenes(preds: Vec<SceneRecord>, gts: Vec<SceneRecord>) -> Result<(Vec<Scene>, Vec<Scene>)> {
    let (pk, gk) = (keys(&preds), keys(&gts));
    for (side, ks) in [("prediction", &pk), ("ground-truth", &gk)] {
        let mut seen = BTreeSet::new();
        if let Some(dup) = ks.iter().find(|k| !seen.insert(*k)) {
            return Err(Error::SceneAlignment(format!("duplicate {side} scene id `{dup}`")));
        }
    }
    let pset: BTreeSet<&String> = pk.iter().collect();
    let gset: BTreeSet<&String> = gk.iter().collect();
    if pset != gset {
        let missing: Vec<&&String> = gset.difference(&pset).take(3).collect();
        let extra: Vec<&&String> = pset.difference(&gset).take(3).collect();
        return Err(Error::SceneAlignment(format!(
            "ids missing from predictions {missing:?}, unexpected in predictions {extra:?}"
        )));
    }
    let mut by_key: BTreeMap<String, Scene> = pk.into_iter().zip(preds).map(|(k, r)| (k, r.scene)).collect();
    let pred_scenes = gk.iter().map(|k| by_key.remove(k).expect("key sets are equal")).collect();
    Ok((pred_scenes, gts.into_iter().map(|r| r.scene).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "id": "room",
        "points": [[0, 0, 0, 10, 20, 30], [1, 2, 3]],
        "categories": {"1": "chair", "2": "table"},
        "objects": [{"center": [1, 1, 0.5], "size": [1, 1, 1], "category": 2}],
        "walls": [{"corners": [[0, 0, 2], [0, 0, 0], [3, 0, 0], [3, 0, 2]], "score": 0.5}]
    }"#;

    #[test]
    fn reads_and_canonicalizes() {
        let rec = parse_scene(DOC, Path::new(".")).unwrap();
        assert_eq!(rec.id.as_deref(), Some("room"));
        let s = &rec.scene;
        assert_eq!(s.cloud.len(), 2);
        assert_eq!(s.cloud.points[0].g, 20);
        assert_eq!(s.objects[0].score, 1.0);
        assert_eq!(s.categories[&2], "table");
        assert_eq!(s.walls[0].corners()[0], Vector3::new(0.0, 0.0, 0.0));
        assert_eq!(s.walls[0].score(), Some(0.5));
    }

    #[test]
    fn write_read_round_trip() {
        let rec = parse_scene(DOC, Path::new(".")).unwrap();
        let text = scene_to_string(&rec, &PointsOut::Inline).unwrap();
        assert_eq!(parse_scene(&text, Path::new(".")).unwrap(), rec);
        let bare = parse_scene(&scene_to_string(&rec, &PointsOut::Omit).unwrap(), Path::new(".")).unwrap();
        assert!(bare.scene.cloud.is_empty());
        assert_eq!(bare.scene.walls, rec.scene.walls);
    }

    #[test]
    fn rejects_schema_errors() {
        for bad in [
            r#"{"objects": [{"center": [0,0,0], "size": [1,1,0], "category": 1}]}"#,
            r#"{"walls": [{"corners": [[0,0,0],[1,0,0],[1,0.5,1],[0,0,1]]}]}"#,
            r#"{"categories": {"x": "chair"}}"#,
            r#"{"points": [[1, 2]]}"#,
            r#"{"unexpected": 1}"#,
        ] {
            assert!(parse_scene(bad, Path::new(".")).is_err(), "{bad}");
        }
    }

    #[test]
    fn list_shapes() {
        let single = parse_scene_list(DOC, Path::new(".")).unwrap();
        assert_eq!(single.len(), 1);
        let wrapped = parse_scene_list(&format!("{{\"scenes\": [{DOC}, {{}}]}}"), Path::new(".")).unwrap();
        assert_eq!(wrapped.len(), 2);
        let array = parse_scene_list(&format!("[{DOC}]"), Path::new(".")).unwrap();
        assert_eq!(array, single);
    }

    fn rec(id: Option<&str>, n_walls: usize) -> SceneRecord {
        let w = canonicalize_wall([
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, 1.0),
        ])
        .unwrap();
        SceneRecord {
            id: id.map(String::from),
            scene: Scene { walls: vec![w; n_walls], ..Scene::default() },
        }
    }

    #[test]
    fn alignment_by_id() {
        let (p, g) = align_scenes(vec![rec(Some("b"), 2), rec(Some("a"), 1)], vec![rec(Some("a"), 0), rec(Some("b"), 0)]).unwrap();
        assert_eq!(p[0].walls.len(), 1);
        assert_eq!(p[1].walls.len(), 2);
        assert_eq!(g.len(), 2);
        let (p, _) = align_scenes(vec![rec(None, 3)], vec![rec(None, 0)]).unwrap();
        assert_eq!(p[0].walls.len(), 3);
        assert!(matches!(
            align_scenes(vec![rec(Some("a"), 0)], vec![rec(Some("b"), 0)]),
            Err(Error::SceneAlignment(_))
        ));
        assert!(align_scenes(vec![rec(None, 0)], vec![rec(None, 0), rec(None, 0)]).is_err());
        assert!(align_scenes(vec![rec(Some("a"), 0), rec(Some("a"), 0)], vec![rec(Some("a"), 0), rec(Some("b"), 0)]).is_err());
    }
}
