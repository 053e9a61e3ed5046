//! The per-run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::gateway::ModelSpec;
use crate::taxonomy::AspectId;

/// Placeholder written over timestamps by [`RunManifest::normalized`].
pub const NORMALIZED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureEntry {
    pub stage: String,
    pub method_key: String,
    /// Pair id for crosswalk failures, document label for extraction ones.
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<AspectId>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub taxonomy_source: String,
    pub corpus_manifest_digest: String,
    pub models: Vec<ModelSpec>,
    pub pack: String,
    pub mode: String,
    pub pairs: Vec<String>,
    /// Stage → artifact paths relative to the run directory.
    pub artifacts: BTreeMap<String, Vec<String>>,
    pub failures: Vec<FailureEntry>,
    pub missing_cells: usize,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn is_empty(&self) -> bool {
        self.artifacts.values().all(Vec::is_empty) && self.failures.is_empty()
    }

    /// Copy with both timestamps replaced by a fixed value.
    pub fn normalized(&self) -> Self {
        let mut m = self.clone();
        m.started_at = NORMALIZED_TIMESTAMP.into();
        m.finished_at = NORMALIZED_TIMESTAMP.into();
        m
    }

    pub fn add_artifact(&mut self, stage: &str, relative: impl Into<String>) {
        let list = self.artifacts.entry(stage.to_string()).or_default();
        list.push(relative.into());
        list.sort();
        list.dedup();
    }

    pub fn read_from(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Manifest(e.to_string()))
    }
}

/// Writes `manifest.json` into `run_dir` after checking that every listed
/// artifact exists there.
pub fn emit_manifest(manifest: &RunManifest, run_dir: &Path) -> Result<PathBuf, ReportError> {
    if manifest.is_empty() {
        return Err(ReportError::EmptyRun);
    }
    for path in manifest.artifacts.values().flatten() {
        if !run_dir.join(path).exists() {
            return Err(ReportError::MissingArtifact(path.clone()));
        }
    }
    std::fs::create_dir_all(run_dir).map_err(|e| ReportError::io(run_dir, e))?;
    let mut sorted = manifest.clone();
    sorted.failures.sort();
    let path = run_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&sorted).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| ReportError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest {
            run_id: "r1".into(),
            config_digest: "abc".into(),
            taxonomy_source: "builtin".into(),
            corpus_manifest_digest: "def".into(),
            models: vec![],
            pack: "en".into(),
            mode: "repair".into(),
            pairs: vec!["A-B".into()],
            artifacts: BTreeMap::new(),
            failures: vec![],
            missing_cells: 0,
            started_at: "2026-01-01T00:00:00Z".into(),
            finished_at: "2026-01-01T00:01:00Z".into(),
        }
    }

    #[test]
    fn empty_run_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_manifest(&manifest(), dir.path()), Err(ReportError::EmptyRun)));
    }

    #[test]
    fn artifacts_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        m.add_artifact("tensors", "tensors/scores.csv");
        assert!(matches!(emit_manifest(&m, dir.path()), Err(ReportError::MissingArtifact(_))));
        std::fs::create_dir_all(dir.path().join("tensors")).unwrap();
        std::fs::write(dir.path().join("tensors/scores.csv"), "x").unwrap();
        let path = emit_manifest(&m, dir.path()).unwrap();
        assert_eq!(RunManifest::read_from(&path).unwrap(), m);
    }

    #[test]
    fn failure_only_run_and_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        m.failures.push(FailureEntry {
            stage: "crosswalk".into(),
            method_key: "a".into(),
            subject: "A-B".into(),
            aspect: Some(7),
            message: "score 6".into(),
        });
        emit_manifest(&m, dir.path()).unwrap();
        let mut later = m.clone();
        later.finished_at = "2027-01-01T00:00:00Z".into();
        assert_ne!(later, m);
        assert_eq!(later.normalized(), m.normalized());
    }
}
