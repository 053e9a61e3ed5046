//! Heatmaps, agreement tables and the run manifest.

mod agreement;
mod heatmap;
mod manifest;

use std::path::Path;

pub use agreement::{agreement_csv, agreement_markdown, agreement_row};
pub use heatmap::{HeatmapFormat, HeatmapSpec};
pub use manifest::{emit_manifest, FailureEntry, RunManifest, NORMALIZED_TIMESTAMP};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("heatmap matrix is empty")]
    EmptyMatrix,
    #[error("heatmap values do not match the label dimensions")]
    ShapeMismatch,
    #[error("heatmap range [{0}, {1}] is empty")]
    BadRange(f64, f64),
    #[error("run produced nothing to put in a manifest")]
    EmptyRun,
    #[error("manifest lists {0}, which does not exist")]
    MissingArtifact(String),
    #[error("manifest does not parse: {0}")]
    Manifest(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ReportError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes `spec` as `<stem>.csv` and `<stem>.svg` under `dir`.
pub fn emit_heatmap(spec: &HeatmapSpec, dir: &Path, stem: &str) -> Result<[String; 2], ReportError> {
    std::fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    let mut names = [String::new(), String::new()];
    for (i, (format, ext)) in [(HeatmapFormat::Csv, "csv"), (HeatmapFormat::Svg, "svg")]
        .into_iter()
        .enumerate()
    {
        let name = format!("{stem}.{ext}");
        let path = dir.join(&name);
        std::fs::write(&path, spec.render(format)?).map_err(|e| ReportError::io(&path, e))?;
        names[i] = name;
    }
    Ok(names)
}
