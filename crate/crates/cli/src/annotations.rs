//! On-disk annotation store: `<out>/annotations/<pair>__<annotator>.json`.

use std::path::{Path, PathBuf};

use crosswalk_core::analytics::AnnotationRecord;

pub const ANNOTATIONS_DIR: &str = "annotations";

/// Every record in the `.json` files of `dir`, sorted by pair then
/// annotator. A file may hold one record or a list. A missing directory
/// yields no records.
pub fn read_dir(dir: &Path) -> Result<Vec<AnnotationRecord>, String> {
    let Ok(entries) = std::fs::read_dir(dir) else { return Ok(Vec::new()) };
    let mut paths: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut records = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let err = |e: serde_json::Error| format!("{}: {e}", path.display());
        let value: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
        if value.is_array() {
            records.extend(serde_json::from_value::<Vec<AnnotationRecord>>(value).map_err(err)?);
        } else {
            records.push(serde_json::from_value(value).map_err(err)?);
        }
    }
    records.sort_by(|a, b| (&a.pair_id, &a.annotator_id).cmp(&(&b.pair_id, &b.annotator_id)));
    Ok(records)
}

pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_'))
}

pub fn record_path(dir: &Path, record: &AnnotationRecord) -> PathBuf {
    dir.join(format!("{}__{}.json", record.pair_id, record.annotator_id))
}

/// Writes through a temporary file so readers never see a partial record.
/// A second write for the same pair and annotator replaces the first.
pub fn write(dir: &Path, record: &AnnotationRecord) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = record_path(dir, record);
    let tmp = path.with_extension("json.tmp");
    let json = serde_json::to_string_pretty(record).expect("annotation serializes");
    std::fs::write(&tmp, json + "\n")?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}
