use crosswalk_wasm_demo::{annotator_table, heatmap_svg, representative};
use serde_json::Value;

fn tensor_csv() -> String {
    let mut s = String::from("method_key,pair_id,aspect_id,score,missing\n");
    for (m, method) in ["a", "b", "c"].iter().enumerate() {
        for pair in ["A-B", "A-C"] {
            for aspect in 1..=15 {
                s.push_str(&format!("{method},{pair},{aspect},{},0\n", (aspect + m) % 6));
            }
        }
    }
    s
}

#[test]
fn heatmaps_render_each_kind() {
    let csv = tensor_csv();
    let mean = heatmap_svg(&csv, "mean").unwrap();
    assert_eq!(mean.matches("<rect x=").count(), 30);
    assert!(mean.contains("Mean similarity"));
    let mad = heatmap_svg(&csv, "mad").unwrap();
    assert_eq!(mad.matches("<rect x=").count(), 9);
    assert!(heatmap_svg(&csv, "std").unwrap().starts_with("<svg"));
    assert!(heatmap_svg(&csv, "median").unwrap_err().contains("unknown heatmap kind"));
    assert!(heatmap_svg("not,a,tensor\n", "mean").is_err());
}

#[test]
fn annotator_grid() {
    let out: Value = serde_json::from_str(&annotator_table("0,1,2\n# comment\n3 2 2\n\n0 2 3").unwrap()).unwrap();
    let rows = out.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["stdev"], "1.000");
    assert_eq!(rows[1]["stdev"], "0.577");
    assert_eq!(rows[2]["stdev"], "1.528");
    assert_eq!(rows[2]["median"], 2.0);
}

#[test]
fn annotator_grid_errors() {
    assert!(annotator_table("").is_err());
    assert!(annotator_table("1,2\n1").unwrap_err().contains("expected 2"));
    assert!(annotator_table("1,x").unwrap_err().contains("not an integer"));
}

#[test]
fn single_annotator_has_no_stdev() {
    let out: Value = serde_json::from_str(&annotator_table("4").unwrap()).unwrap();
    assert!(out[0]["stdev"].is_null());
}

#[test]
fn representative_weighted() {
    let v: Value = serde_json::from_str(&representative("4, 5", "0.73, 0.86").unwrap()).unwrap();
    assert!((v["value"].as_f64().unwrap() - 7.22 / 1.59).abs() < 1e-12);
    assert_eq!(v["basis"], "weighted-mean");
    let empty: Value = serde_json::from_str(&representative("", "").unwrap()).unwrap();
    assert!(empty["value"].is_null());
    assert!(representative("4", "0.5, 0.6").is_err());
    assert!(representative("four", "0.5").is_err());
}
