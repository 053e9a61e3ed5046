#![allow(dead_code)]

use std::path::{Path, PathBuf};

use crosswalk_core::reporting::RunManifest;
use crosswalk_core::synthetic::{synthetic_corpus, write_corpus};
use crosswalk_core::taxonomy::builtin_taxonomy;

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub fixtures: PathBuf,
}

impl Workspace {
    pub fn new(docs: usize, models: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus_docs = synthetic_corpus(&builtin_taxonomy(), docs, 7);
        let corpus = write_corpus(&dir.path().join("corpus"), &corpus_docs).unwrap();
        let models_path = dir.path().join("models.json");
        std::fs::write(&models_path, models_config(models)).unwrap();
        let fixtures = dir.path().join("fixtures");
        Self { dir, corpus, models: models_path, fixtures }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Pipeline flags shared by `extract` and `crosswalk`.
    pub fn common(&self, out: &Path) -> Vec<String> {
        [
            "--corpus",
            self.corpus.to_str().unwrap(),
            "--models",
            self.models.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--fixtures",
            self.fixtures.to_str().unwrap(),
            "--run-id",
            "r1",
            "--retry-delay-ms",
            "1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

pub fn models_config(n: usize) -> String {
    let models: Vec<serde_json::Value> = (0..n)
        .map(|i| {
            let key = ((b'a' + i as u8) as char).to_string();
            serde_json::json!({
                "method_key": key,
                "model_id": format!("synthetic-{key}"),
                "endpoint": "synthetic",
            })
        })
        .collect();
    serde_json::json!({ "temperature": 0.0, "models": models }).to_string()
}

/// Runs the binary's entry point in-process.
pub fn run<S: AsRef<str>>(cmd: &str, args: &[S], extra: &[&str]) -> i32 {
    let mut argv = vec!["crosswalk".to_string(), cmd.to_string()];
    argv.extend(args.iter().map(|s| s.as_ref().to_string()));
    argv.extend(extra.iter().map(|s| s.to_string()));
    crosswalk_cli::main_with(argv)
}

pub fn manifest(run_dir: &Path) -> RunManifest {
    RunManifest::read_from(&run_dir.join("manifest.json")).unwrap()
}

pub fn files_in(dir: &Path, suffix: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.flatten()
                .filter_map(|e| e.file_name().to_str().map(String::from))
                .filter(|n| n.ends_with(suffix))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}
