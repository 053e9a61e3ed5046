//! Activity extraction: prompt construction, response parsing, validation and
//! grouping of items under taxonomy aspects.

mod parse;
mod validate;
mod xml;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentRecord;
use crate::diagnostics::{Finding, Location};
use crate::gateway::{Gateway, GatewayError, ModelSpec};
use crate::prompt::{render, PromptPack};
use crate::taxonomy::{render_category_block, AspectId, Taxonomy};

pub use parse::{activities_to_xml, parse_extraction, ParseError};
pub use validate::{validate_extraction, AMBIGUITY_THRESHOLD};

/// Default cap on document body size sent in one prompt, in characters.
pub const DEFAULT_PROMPT_BUDGET: usize = 400_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRef {
    pub id: AspectId,
    #[serde(default)]
    pub name: String,
}

/// Page reference of an activity: a page index or the literal `unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PageNumber {
    Page(u32),
    #[default]
    Unknown,
}

impl PageNumber {
    pub fn parse(raw: &str) -> Self {
        let t = raw.trim();
        if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
            t.parse().map(PageNumber::Page).unwrap_or(PageNumber::Unknown)
        } else {
            PageNumber::Unknown
        }
    }
}

impl fmt::Display for PageNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PageNumber::Page(n) => write!(f, "{n}"),
            PageNumber::Unknown => f.write_str("unknown"),
        }
    }
}

impl Serialize for PageNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PageNumber::Page(n) => s.serialize_u32(*n),
            PageNumber::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for PageNumber {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Text(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Num(n) => PageNumber::Page(n),
            Raw::Text(t) => PageNumber::parse(&t),
        })
    }
}

/// One document-backed activity as returned by the extraction prompt.
///
/// `extra_categories` holds any mapped categories beyond the first; a
/// conforming item has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityItem {
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub page_number: PageNumber,
    pub excerpts: Vec<String>,
    pub mapped_category: CategoryRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_categories: Vec<CategoryRef>,
    pub extent_score: f64,
    pub confidence: f64,
    pub reasoning: String,
    #[serde(default)]
    pub ambiguous: bool,
    #[serde(default)]
    pub alternative_category: Option<CategoryRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub document_label: String,
    /// Method key of the model that produced the items, or `precomputed`.
    pub method_key: String,
    pub items: Vec<ActivityItem>,
    /// Aspect id → indices into `items` of ERROR-free items mapped there.
    pub by_aspect: BTreeMap<AspectId, Vec<usize>>,
    pub raw_response: String,
    pub diagnostics: Vec<Finding>,
    /// Set when the response could not be parsed at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("document {label}: body has {chars} characters, over the prompt budget of {budget}")]
    BodyTooLarge {
        label: String,
        chars: usize,
        budget: usize,
    },
    #[error("document {label}: {source}")]
    Gateway {
        label: String,
        #[source]
        source: GatewayError,
    },
    #[error("cannot access extraction file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("extraction file {path} does not parse: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Template(#[from] crate::prompt::RenderError),
}

/// Fills the extraction template with the document body and the category
/// reference block.
pub fn build_extraction_prompt(
    doc: &DocumentRecord,
    taxonomy: &Taxonomy,
    pack: PromptPack,
    budget: usize,
) -> Result<String, ExtractionError> {
    let chars = doc.body.chars().count();
    if chars > budget {
        return Err(ExtractionError::BodyTooLarge {
            label: doc.label.clone(),
            chars,
            budget,
        });
    }
    let categories = render_category_block(taxonomy);
    let doc_id = format!("doc-{}", doc.label);
    let slots = BTreeMap::from([
        ("DOCUMENT_ID", doc_id.as_str()),
        ("DOCUMENT_BODY", doc.body.as_str()),
        ("AMAIS_CATEGORIES", categories.as_str()),
    ]);
    Ok(render(pack.extraction_template(), &slots)?)
}

/// One entry per taxonomy aspect, listing indices of items mapped there.
/// Items whose index is in `excluded` are left out; unknown category ids are
/// ignored.
pub fn group_by_aspect(
    items: &[ActivityItem],
    taxonomy: &Taxonomy,
    excluded: &BTreeSet<usize>,
) -> BTreeMap<AspectId, Vec<usize>> {
    let mut map: BTreeMap<AspectId, Vec<usize>> = taxonomy.ids().map(|id| (id, Vec::new())).collect();
    for (i, item) in items.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        if let Some(list) = map.get_mut(&item.mapped_category.id) {
            list.push(i);
        }
    }
    map
}

fn error_indices(findings: &[Finding]) -> BTreeSet<usize> {
    findings
        .iter()
        .filter(|f| f.is_error())
        .filter_map(|f| match f.location {
            Location::Activity(n) => Some(n - 1),
            Location::Aspect(_) => None,
        })
        .collect()
}

impl ExtractionResult {
    /// Validates `items` and groups the ERROR-free ones by aspect.
    pub fn from_items(
        document_label: impl Into<String>,
        method_key: impl Into<String>,
        items: Vec<ActivityItem>,
        taxonomy: &Taxonomy,
        raw_response: impl Into<String>,
    ) -> Self {
        let diagnostics = validate_extraction(&items, taxonomy);
        let by_aspect = group_by_aspect(&items, taxonomy, &error_indices(&diagnostics));
        Self {
            document_label: document_label.into(),
            method_key: method_key.into(),
            items,
            by_aspect,
            raw_response: raw_response.into(),
            diagnostics,
            failure: None,
        }
    }

    pub fn failed(
        document_label: impl Into<String>,
        method_key: impl Into<String>,
        taxonomy: &Taxonomy,
        raw_response: impl Into<String>,
        reason: &ParseError,
    ) -> Self {
        Self {
            document_label: document_label.into(),
            method_key: method_key.into(),
            items: Vec::new(),
            by_aspect: group_by_aspect(&[], taxonomy, &BTreeSet::new()),
            raw_response: raw_response.into(),
            diagnostics: Vec::new(),
            failure: Some(reason.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn has_errors(&self) -> bool {
        self.is_failed() || crate::diagnostics::has_errors(&self.diagnostics)
    }

    /// ERROR-free items mapped to `aspect`, in document order.
    pub fn items_for(&self, aspect: AspectId) -> impl Iterator<Item = &ActivityItem> {
        self.by_aspect
            .get(&aspect)
            .into_iter()
            .flatten()
            .map(move |&i| &self.items[i])
    }

    /// All ERROR-free items, in document order.
    pub fn valid_items(&self) -> Vec<&ActivityItem> {
        let keep: BTreeSet<usize> = self.by_aspect.values().flatten().copied().collect();
        keep.into_iter().map(|i| &self.items[i]).collect()
    }

    /// Re-runs validation and grouping against `taxonomy`, discarding any
    /// stored diagnostics. Used for precomputed extraction files.
    pub fn revalidated(self, taxonomy: &Taxonomy) -> Self {
        if self.is_failed() {
            return self;
        }
        let mut fresh = Self::from_items(
            self.document_label,
            self.method_key,
            self.items,
            taxonomy,
            self.raw_response,
        );
        fresh.failure = None;
        fresh
    }

    pub fn file_name(label: &str, method_key: &str) -> String {
        format!("extraction_{label}_{method_key}.json")
    }

    pub fn raw_file_name(label: &str, method_key: &str) -> String {
        format!("extraction_{label}_{method_key}.raw.txt")
    }

    /// Writes the JSON result plus the raw response beside it. Returns the
    /// JSON path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, ExtractionError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ExtractionError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(Self::file_name(&self.document_label, &self.method_key));
        let json = serde_json::to_string_pretty(self).expect("extraction serializes");
        std::fs::write(&path, json).map_err(io(&path))?;
        let raw = dir.join(Self::raw_file_name(&self.document_label, &self.method_key));
        std::fs::write(&raw, &self.raw_response).map_err(io(&raw))?;
        Ok(path)
    }

    pub fn read_from(path: &Path) -> Result<Self, ExtractionError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExtractionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ExtractionError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Fills in `unknown` page numbers by locating an excerpt in the body when
/// the document carries page markers.
pub fn resolve_pages(items: &mut [ActivityItem], doc: &DocumentRecord) {
    if doc.page_markers.is_none() {
        return;
    }
    for item in items.iter_mut() {
        if item.page_number != PageNumber::Unknown {
            continue;
        }
        let hit = item
            .excerpts
            .iter()
            .filter(|ex| !ex.trim().is_empty())
            .find_map(|ex| doc.body.find(ex.trim()));
        if let Some(page) = hit.and_then(|off| doc.page_of(off)) {
            item.page_number = PageNumber::Page(page as u32);
        }
    }
}

/// Runs build → complete → parse → validate → group for one document. An
/// unparseable response is retried once; a second failure yields a failed
/// result rather than an error.
pub fn extract_document(
    doc: &DocumentRecord,
    taxonomy: &Taxonomy,
    gateway: &Gateway,
    model: &Arc<ModelSpec>,
    pack: PromptPack,
    budget: usize,
) -> Result<ExtractionResult, ExtractionError> {
    let prompt = build_extraction_prompt(doc, taxonomy, pack, budget)?;
    let request = gateway.request(model, prompt);
    let gw_err = |source| ExtractionError::Gateway {
        label: doc.label.clone(),
        source,
    };
    let first = gateway.complete(&request).map_err(gw_err)?;
    let (raw, parsed) = match parse_extraction(&first.text) {
        Ok(items) => (first.text, Ok(items)),
        Err(_) => {
            let second = gateway.complete_fresh(&request).map_err(gw_err)?;
            let parsed = parse_extraction(&second.text);
            (second.text, parsed)
        }
    };
    Ok(match parsed {
        Ok(mut items) => {
            resolve_pages(&mut items, doc);
            ExtractionResult::from_items(&doc.label, &model.method_key, items, taxonomy, raw)
        }
        Err(reason) => ExtractionResult::failed(&doc.label, &model.method_key, taxonomy, raw, &reason),
    })
}
