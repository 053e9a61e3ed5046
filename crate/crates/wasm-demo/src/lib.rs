//! Browser bindings over `crosswalk-core`: heatmaps from a score tensor,
//! annotator statistics, and the representative-extent oracle.
//!
//! Each operation is a plain function returning `Result<String, String>` so
//! it can be tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors into JS exceptions.

use std::collections::BTreeMap;

use crosswalk_core::analytics::{
    annotator_stats, fmt3, mad_matrix, mean_matrix, std_matrix, AnnotationRecord, ScoreTensor,
};
use crosswalk_core::crosswalk::representative_extent;
use crosswalk_core::reporting::{HeatmapFormat, HeatmapSpec};
use crosswalk_core::taxonomy::{builtin_taxonomy, AspectId};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Renders one heatmap from a long-format tensor CSV
/// (`method_key,pair_id,aspect_id,score,missing`). `kind` is `mean`, `std` or `mad`.
pub fn heatmap_svg(tensor_csv: &str, kind: &str) -> Result<String, String> {
    let t = ScoreTensor::read_csv(tensor_csv.as_bytes()).map_err(|e| e.to_string())?;
    let spec = match kind {
        "mean" => HeatmapSpec::similarity("Mean similarity", &mean_matrix(&t)),
        "std" => HeatmapSpec::spread("Std of similarity", &std_matrix(&t)),
        "mad" => HeatmapSpec::spread("Model-pair MAD", &mad_matrix(&t)),
        other => return Err(format!("unknown heatmap kind {other:?}; use mean, std or mad")),
    }
    .map_err(|e| e.to_string())?;
    let spec = if kind == "mad" { spec } else { spec.with_aspect_names(&builtin_taxonomy()) };
    spec.render(HeatmapFormat::Svg).map_err(|e| e.to_string())
}

/// One line per aspect, annotator scores separated by commas or spaces.
/// Blank lines and `#` comments are skipped. Returns a JSON array of
/// `{aspect, scores, stdev, median}` with three-decimal strings.
pub fn annotator_table(grid: &str) -> Result<String, String> {
    let mut rows: Vec<Vec<i64>> = Vec::new();
    for (n, line) in grid.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<i64>().map_err(|_| format!("line {}: {s:?} is not an integer", n + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: {} scores, expected {}", n + 1, row.len(), first.len()));
            }
        }
        rows.push(row);
    }
    let width = rows.first().map(Vec::len).ok_or("no scores given")?;
    let records: Vec<AnnotationRecord> = (0..width)
        .map(|k| AnnotationRecord {
            annotator_id: format!("annotator{}", k + 1),
            pair_id: "demo".into(),
            scores: rows
                .iter()
                .enumerate()
                .map(|(i, r)| (i as AspectId + 1, r[k]))
                .collect::<BTreeMap<_, _>>(),
        })
        .collect();
    let summary = annotator_stats(&records).map_err(|e| e.to_string())?;
    let out: Vec<_> = summary
        .per_aspect
        .iter()
        .map(|(id, a)| {
            json!({
                "aspect": id,
                "scores": a.scores,
                "stdev": a.stdev.map(fmt3),
                "median": a.median,
            })
        })
        .collect();
    Ok(serde_json::Value::Array(out).to_string())
}

/// Confidence-weighted representative extent for comma-separated lists.
/// Returns `{value, basis}` as JSON.
pub fn representative(extents: &str, confidences: &str) -> Result<String, String> {
    let parse = |s: &str, what: &str| {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| format!("{what}: {t:?} is not a number")))
            .collect::<Result<Vec<_>, _>>()
    };
    let r = representative_extent(&parse(extents, "extents")?, &parse(confidences, "confidences")?)
        .map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&r).expect("serializes"))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = heatmapSvg)]
pub fn heatmap_svg_js(tensor_csv: &str, kind: &str) -> Result<String, JsError> {
    js(heatmap_svg(tensor_csv, kind))
}

#[wasm_bindgen(js_name = annotatorTable)]
pub fn annotator_table_js(grid: &str) -> Result<String, JsError> {
    js(annotator_table(grid))
}

#[wasm_bindgen(js_name = representative)]
pub fn representative_js(extents: &str, confidences: &str) -> Result<String, JsError> {
    js(representative(extents, confidences))
}
