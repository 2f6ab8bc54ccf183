//! Evaluation report as canonical JSON and as a long-format CSV.

use std::collections::BTreeMap;
use std::path::Path;

use super::json::{round_significant, to_canonical};
use crate::error::Result;
use crate::losses::LossBreakdown;
use crate::metrics::EvalReport;

pub fn report_json(report: &EvalReport) -> Result<String> {
    to_canonical(report)
}

/// Loss terms as canonical JSON; the flat gradient is included on request.
pub fn loss_json(loss: &LossBreakdown, with_gradient: bool) -> Result<String> {
    let mut doc = serde_json::json!({
        "det_focal": loss.det_focal,
        "det_diou": loss.det_diou,
        "layout_focal": loss.layout_focal,
        "layout_l1": loss.layout_l1,
        "total": loss.total.value,
    });
    if with_gradient {
        doc["gradient"] = serde_json::json!(loss.total.gradient);
    }
    to_canonical(&doc)
}

/// One row per (kind, threshold, category): `kind,threshold,category,name,value`.
pub fn report_csv(report: &EvalReport, names: &BTreeMap<u32, String>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "threshold", "category", "name", "value"])?;
    let num = |x: f64| round_significant(x).to_string();
    for det in &report.detection {
        let thr = num(det.iou_threshold);
        for (cat, ap) in &det.ap {
            let name = names.get(cat).map_or("", String::as_str);
            w.write_record(["ap", &thr, &cat.to_string(), name, &num(*ap)])?;
        }
        if let Some(m) = det.map {
            w.write_record(["map", &thr, "", "", &num(m)])?;
        }
    }
    let layout = std::iter::once(("corner", report.layout_corner.distance_threshold, &report.layout_corner.scores))
        .chain(report.layout_projection.iter().map(|p| ("projection", p.iou_threshold, &p.scores)));
    for (variant, thr, s) in layout {
        for (metric, value) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1)] {
            w.write_record([&format!("{variant}_{metric}"), &num(thr), "", "", &num(value)])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_report(json_path: &Path, csv_path: Option<&Path>, report: &EvalReport, names: &BTreeMap<u32, String>) -> Result<()> {
    super::write_bytes(json_path, report_json(report)?.as_bytes())?;
    if let Some(path) = csv_path {
        super::write_bytes(path, report_csv(report, names)?.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate, EvalConfig};
    use crate::scene::{Box3, DetectedObject, Scene};
    use nalgebra::Vector3;

    #[test]
    fn csv_rows_cover_every_class_and_threshold() {
        let b = Box3::new(Vector3::zeros(), Vector3::repeat(1.0)).unwrap();
        let gt = Scene {
            objects: vec![DetectedObject::ground_truth(b, 1).unwrap(), DetectedObject::ground_truth(b, 3).unwrap()],
            ..Scene::default()
        };
        let report = evaluate(&[gt.clone()], &[gt], &EvalConfig::default()).unwrap();
        let names = BTreeMap::from([(1, "chair".to_string())]);
        let text = report_csv(&report, &names).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,threshold,category,name,value");
        assert_eq!(lines[1], "ap,0.25,1,chair,1");
        assert_eq!(lines[2], "ap,0.25,3,,1");
        assert_eq!(lines[3], "map,0.25,,,1");
        // 2 thresholds x (2 classes + map) + 3 layout variants x 3 metrics
        assert_eq!(lines.len(), 1 + 6 + 9);
        assert!(lines.iter().any(|l| l.starts_with("corner_f1,0.75,,,")), "{text}");
        let json: serde_json::Value = serde_json::from_str(&report_json(&report).unwrap()).unwrap();
        assert_eq!(json["scenes"], 1);
    }

    #[test]
    fn loss_json_lists_terms() {
        let loss = LossBreakdown {
            det_focal: 0.5,
            det_diou: 0.25,
            layout_focal: 0.0,
            layout_l1: 1.0,
            total: crate::losses::LossValue { value: 1.75, gradient: vec![1.0, -2.0] },
        };
        let v: serde_json::Value = serde_json::from_str(&loss_json(&loss, false).unwrap()).unwrap();
        assert_eq!(v["total"], 1.75);
        assert!(v.get("gradient").is_none());
        let v: serde_json::Value = serde_json::from_str(&loss_json(&loss, true).unwrap()).unwrap();
        assert_eq!(v["gradient"][1].as_f64(), Some(-2.0));
    }
}
