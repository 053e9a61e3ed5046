//! Document registry and pair enumeration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

const FORM_FEED: char = '\u{0C}';

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest does not parse: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("duplicate document label {0:?}")]
    DuplicateLabel(String),
    #[error("document {0:?} has an empty body")]
    EmptyBody(String),
    #[error("invalid document label {0:?}: use ASCII letters, digits or '_'")]
    InvalidLabel(String),
    #[error("corpus has no documents")]
    Empty,
    #[error("unknown anchor label {0:?}")]
    UnknownAnchor(String),
    #[error("need at least two documents to form pairs, found {0}")]
    TooSmall(usize),
    #[error("page markers for {0:?} must be strictly increasing and inside the body")]
    BadPageMarkers(String),
    #[error("invalid pair id {0:?}")]
    BadPairId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub label: String,
    pub title: String,
    pub entity: String,
    pub body: String,
    /// Byte offsets of page separators inside `body`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_markers: Option<Vec<usize>>,
}

impl DocumentRecord {
    pub fn new(
        label: impl Into<String>,
        title: impl Into<String>,
        entity: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let body = body.into();
        let label = label.into();
        check_label(&label)?;
        if body.trim().is_empty() {
            return Err(CorpusError::EmptyBody(label));
        }
        let markers: Vec<usize> = body
            .char_indices()
            .filter(|&(_, c)| c == FORM_FEED)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            label,
            title: title.into(),
            entity: entity.into(),
            page_markers: (!markers.is_empty()).then_some(markers),
            body,
        })
    }

    /// 1-based page containing `offset`, if the body carries page markers.
    pub fn page_of(&self, offset: usize) -> Option<usize> {
        let markers = self.page_markers.as_ref()?;
        Some(markers.iter().take_while(|&&m| m < offset).count() + 1)
    }

    fn check_markers(&self) -> Result<(), CorpusError> {
        if let Some(markers) = &self.page_markers {
            let increasing = markers.windows(2).all(|w| w[0] < w[1]);
            let in_bounds = markers.iter().all(|&m| m < self.body.len());
            if !increasing || !in_bounds {
                return Err(CorpusError::BadPageMarkers(self.label.clone()));
            }
        }
        Ok(())
    }
}

fn check_label(label: &str) -> Result<(), CorpusError> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CorpusError::InvalidLabel(label.to_string()))
    }
}

/// An ordered document pair `(doc1, doc2)`. Rendered as `doc1-doc2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DocumentPair {
    pub first: String,
    pub second: String,
}

impl DocumentPair {
    pub fn new(first: impl Into<String>, second: impl Into<String>) -> Result<Self, CorpusError> {
        let (first, second) = (first.into(), second.into());
        check_label(&first)?;
        check_label(&second)?;
        if first == second {
            return Err(CorpusError::BadPairId(format!("{first}-{second}")));
        }
        Ok(Self { first, second })
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Concatenated labels, as used in diff-table file names.
    pub fn compact(&self) -> String {
        format!("{}{}", self.first, self.second)
    }
}

impl fmt::Display for DocumentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.second)
    }
}

impl std::str::FromStr for DocumentPair {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| CorpusError::BadPairId(s.to_string()))?;
        Self::new(a, b).map_err(|_| CorpusError::BadPairId(s.to_string()))
    }
}

impl TryFrom<String> for DocumentPair {
    type Error = CorpusError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<DocumentPair> for String {
    fn from(p: DocumentPair) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ManifestEntry {
    pub label: String,
    pub title: String,
    pub entity: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CorpusManifest {
    pub documents: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: BTreeMap<String, DocumentRecord>,
    manifest_source: String,
}

impl Corpus {
    pub fn from_documents(
        docs: impl IntoIterator<Item = DocumentRecord>,
        manifest_source: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut documents = BTreeMap::new();
        for doc in docs {
            check_label(&doc.label)?;
            if doc.body.trim().is_empty() {
                return Err(CorpusError::EmptyBody(doc.label));
            }
            doc.check_markers()?;
            let label = doc.label.clone();
            if documents.insert(label.clone(), doc).is_some() {
                return Err(CorpusError::DuplicateLabel(label));
            }
        }
        if documents.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Self {
            documents,
            manifest_source: manifest_source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&DocumentRecord> {
        self.documents.get(label)
    }

    /// Documents in label order.
    pub fn documents(&self) -> impl Iterator<Item = &DocumentRecord> {
        self.documents.values()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.documents.keys().map(String::as_str)
    }

    pub fn manifest_source(&self) -> &str {
        &self.manifest_source
    }

    /// Pairs `(anchor, x)` for every other label, in label order.
    pub fn anchor_pairs(&self, anchor: &str) -> Result<Vec<DocumentPair>, CorpusError> {
        if !self.documents.contains_key(anchor) {
            return Err(CorpusError::UnknownAnchor(anchor.to_string()));
        }
        Ok(self
            .labels()
            .filter(|l| *l != anchor)
            .map(|l| DocumentPair {
                first: anchor.to_string(),
                second: l.to_string(),
            })
            .collect())
    }

    /// Every unordered pair once, smaller label first.
    pub fn all_pairs(&self) -> Result<Vec<DocumentPair>, CorpusError> {
        if self.len() < 2 {
            return Err(CorpusError::TooSmall(self.len()));
        }
        let labels: Vec<&str> = self.labels().collect();
        let mut pairs = Vec::with_capacity(labels.len() * (labels.len() - 1) / 2);
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                pairs.push(DocumentPair {
                    first: a.to_string(),
                    second: b.to_string(),
                });
            }
        }
        Ok(pairs)
    }
}

/// Loads a manifest and every body file it references. Relative body paths
/// resolve against the manifest's directory.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let manifest_path = manifest_path.as_ref();
    let text = read(manifest_path)?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut docs = Vec::with_capacity(manifest.documents.len());
    for entry in manifest.documents {
        let path = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let body = read(&path)?;
        docs.push(DocumentRecord::new(entry.label, entry.title, entry.entity, body)?);
    }
    Corpus::from_documents(docs, manifest_path.display().to_string())
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}
