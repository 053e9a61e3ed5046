//! The aspect set used as the shared crosswalk coordinate system.
//!
//! A taxonomy is data: the AMAIS categories ship embedded in the crate and any
//! other taxonomy with the same file shape can replace them.

use std::fmt::Write as _;
use std::path::Path;

use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};

/// Identifier of one aspect, 1-based.
pub type AspectId = u32;

const BUILTIN_DOCUMENT: &str = include_str!("../data/amais.json");

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read taxonomy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy has no categories")]
    Empty,
    #[error("category #{position}: duplicate id {id}")]
    DuplicateId { position: usize, id: AspectId },
    #[error("category #{position}: id {id} breaks the contiguous 1..n sequence (expected {expected})")]
    NonContiguous {
        position: usize,
        id: AspectId,
        expected: AspectId,
    },
    #[error("category #{position}: name_en is empty")]
    EmptyName { position: usize },
    #[error("category #{position}: keywords list is empty")]
    EmptyKeywords { position: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectCategory {
    pub id: AspectId,
    pub name_en: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_local: Option<String>,
    pub description: String,
    pub keywords: Vec<String>,
}

/// Where a taxonomy came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomySource {
    Builtin,
    File(String),
    Inline,
}

impl std::fmt::Display for TaxonomySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaxonomySource::Builtin => f.write_str("builtin"),
            TaxonomySource::File(p) => f.write_str(p),
            TaxonomySource::Inline => f.write_str("inline"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    categories: Vec<AspectCategory>,
    source: TaxonomySource,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyDocument {
    categories: Vec<AspectCategory>,
}

/// The 15 AMAIS activity categories.
pub fn builtin_taxonomy() -> Taxonomy {
    let mut taxonomy = Taxonomy::from_json(BUILTIN_DOCUMENT).expect("embedded taxonomy is valid");
    taxonomy.source = TaxonomySource::Builtin;
    taxonomy
}

/// Reads a taxonomy file from disk.
pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy, TaxonomyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut taxonomy = Taxonomy::from_json(&text)?;
    taxonomy.source = TaxonomySource::File(path.display().to_string());
    Ok(taxonomy)
}

impl Taxonomy {
    /// Parses and validates a taxonomy document. Categories are kept in file
    /// order, which must already be ascending `1..=n`.
    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDocument = serde_json::from_str(text)?;
        Self::new(doc.categories, TaxonomySource::Inline)
    }

    pub fn new(
        categories: Vec<AspectCategory>,
        source: TaxonomySource,
    ) -> Result<Self, TaxonomyError> {
        if categories.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (idx, cat) in categories.iter().enumerate() {
            let position = idx + 1;
            if !seen.insert(cat.id) {
                return Err(TaxonomyError::DuplicateId {
                    position,
                    id: cat.id,
                });
            }
            if cat.id as usize != position {
                return Err(TaxonomyError::NonContiguous {
                    position,
                    id: cat.id,
                    expected: position as AspectId,
                });
            }
            if cat.name_en.trim().is_empty() {
                return Err(TaxonomyError::EmptyName { position });
            }
            if cat.keywords.iter().all(|k| k.trim().is_empty()) {
                return Err(TaxonomyError::EmptyKeywords { position });
            }
        }
        Ok(Self { categories, source })
    }

    pub fn to_json(&self) -> String {
        let doc = TaxonomyDocument {
            categories: self.categories.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("taxonomy serializes")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AspectCategory> {
        self.categories.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = AspectId> + '_ {
        self.categories.iter().map(|c| c.id)
    }

    pub fn get(&self, id: AspectId) -> Option<&AspectCategory> {
        // ids are contiguous from 1
        let idx = (id as usize).checked_sub(1)?;
        self.categories.get(idx)
    }

    pub fn contains(&self, id: AspectId) -> bool {
        self.get(id).is_some()
    }

    pub fn source(&self) -> &TaxonomySource {
        &self.source
    }

    pub fn with_source(mut self, source: TaxonomySource) -> Self {
        self.source = source;
        self
    }
}

impl<'a> IntoIterator for &'a Taxonomy {
    type Item = &'a AspectCategory;
    type IntoIter = std::slice::Iter<'a, AspectCategory>;

    fn into_iter(self) -> Self::IntoIter {
        self.categories.iter()
    }
}

/// Renders the `<AMAIS_categories>` reference block that both prompt
/// templates embed. Output depends only on the taxonomy content.
pub fn render_category_block(taxonomy: &Taxonomy) -> String {
    let mut out = String::from("<AMAIS_categories>\n");
    for cat in taxonomy {
        let _ = writeln!(
            out,
            "  <category id=\"{}\" name=\"{}\">",
            cat.id,
            escape(cat.name_en.as_str())
        );
        if let Some(local) = &cat.name_local {
            let _ = writeln!(
                out,
                "    <category_name_jp>{}</category_name_jp>",
                escape(local.as_str())
            );
        }
        let _ = writeln!(
            out,
            "    <description>{}</description>",
            escape(cat.description.as_str())
        );
        let _ = writeln!(
            out,
            "    <keywords>{}</keywords>",
            escape(cat.keywords.join("; ").as_str())
        );
        out.push_str("  </category>\n");
    }
    out.push_str("</AMAIS_categories>");
    out
}
