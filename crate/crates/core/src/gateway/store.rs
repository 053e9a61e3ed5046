//! Content-addressed store of recorded model responses.
//!
//! Layout: `<dir>/<request_key>.txt` holds the raw response bytes and
//! `<dir>/index.json` maps each key to its model id, prompt digest and
//! recording time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub model_id: String,
    pub prompt_digest: String,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("fixture store I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture index {path} is corrupt: {source}")]
    Index {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, IndexEntry>>,
    /// Keys written through this handle.
    written: Mutex<BTreeSet<String>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl FixtureStore {
    /// Opens (creating if needed) a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let index_path = dir.join(INDEX_FILE);
        let index = if index_path.exists() {
            let text = std::fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
            serde_json::from_str(&text).map_err(|source| StoreError::Index {
                path: index_path.display().to_string(),
                source,
            })?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            dir,
            index: Mutex::new(index),
            written: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn response_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, StoreError> {
        let path = self.response_path(key);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn written_this_session(&self, key: &str) -> bool {
        self.written.lock().expect("store lock").contains(key)
    }

    pub fn put(&self, key: &str, model_id: &str, prompt: &str, text: &str) -> Result<(), StoreError> {
        let entry = IndexEntry {
            model_id: model_id.to_string(),
            prompt_digest: super::sha256_hex(prompt.as_bytes()),
            recorded_at: Utc::now(),
        };
        self.put_entry(key, entry, text)
    }

    fn put_entry(&self, key: &str, entry: IndexEntry, text: &str) -> Result<(), StoreError> {
        // One writer at a time keeps the index file consistent.
        let mut index = self.index.lock().expect("store lock");
        write_atomic(&self.response_path(key), text.as_bytes())?;
        index.insert(key.to_string(), entry);
        let body = serde_json::to_string_pretty(&*index).expect("index serializes");
        write_atomic(&self.dir.join(INDEX_FILE), body.as_bytes())?;
        self.written.lock().expect("store lock").insert(key.to_string());
        Ok(())
    }

    pub fn entries(&self) -> BTreeMap<String, IndexEntry> {
        self.index.lock().expect("store lock").clone()
    }

    /// Copies every fixture from `other` that this store lacks. Returns the
    /// number of imported entries.
    pub fn import_from(&self, other: &FixtureStore) -> Result<usize, StoreError> {
        let mut imported = 0;
        for (key, entry) in other.entries() {
            if self.get(&key)?.is_some() {
                continue;
            }
            if let Some(text) = other.get(&key)? {
                self.put_entry(&key, entry, &text)?;
                imported += 1;
            }
        }
        Ok(imported)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}
