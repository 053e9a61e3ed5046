//! The per-aspect diff table: wire schema, envelope extraction and
//! serialization.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::taxonomy::{AspectId, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSummary {
    pub avg: f64,
    pub max: f64,
}

/// A page reference in evidence; models emit both `"12"` and `12`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PageRef {
    Number(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub page_number: Vec<PageRef>,
    pub excerpts: Vec<String>,
}

/// Both keys are required by the schema; `None` records a missing key so the
/// validator can report it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Notes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguous: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative_category: Option<String>,
}

impl Notes {
    pub fn empty() -> Self {
        Self {
            ambiguous: Some(String::new()),
            alternative_category: Some(String::new()),
        }
    }
}

/// Deserializes a field that must be present but may be `null`.
fn nullable<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d)
}

/// One crosswalk cell. Field names and order follow the diff-table schema
/// exactly; the aspect id is the table key and is not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectDiff {
    #[serde(skip)]
    pub aspect_id: AspectId,
    pub category_name_en: String,
    #[serde(rename = "category_name_jp")]
    pub category_name_local: String,
    #[serde(rename = "docA_summary")]
    pub doc_a_summary: String,
    #[serde(rename = "docB_summary")]
    pub doc_b_summary: String,
    pub comparison_results: String,
    #[serde(rename = "comparison_score_0to5")]
    pub comparison_score: i64,
    pub unknown: bool,
    #[serde(rename = "extent_docA", deserialize_with = "nullable")]
    pub extent_doc_a: Option<f64>,
    #[serde(rename = "extent_docB", deserialize_with = "nullable")]
    pub extent_doc_b: Option<f64>,
    #[serde(deserialize_with = "nullable")]
    pub extent_delta: Option<f64>,
    #[serde(rename = "confidence_docA", deserialize_with = "nullable")]
    pub confidence_doc_a: Option<ConfidenceSummary>,
    #[serde(rename = "confidence_docB", deserialize_with = "nullable")]
    pub confidence_doc_b: Option<ConfidenceSummary>,
    #[serde(deserialize_with = "nullable")]
    pub confidence_delta: Option<f64>,
    #[serde(rename = "extent_raw_docA")]
    pub extent_raw_doc_a: Vec<f64>,
    #[serde(rename = "extent_raw_docB")]
    pub extent_raw_doc_b: Vec<f64>,
    #[serde(rename = "confidence_raw_docA")]
    pub confidence_raw_doc_a: Vec<f64>,
    #[serde(rename = "confidence_raw_docB")]
    pub confidence_raw_doc_b: Vec<f64>,
    #[serde(rename = "evidence_docA", deserialize_with = "nullable")]
    pub evidence_doc_a: Option<Evidence>,
    #[serde(rename = "evidence_docB", deserialize_with = "nullable")]
    pub evidence_doc_b: Option<Evidence>,
    #[serde(default)]
    pub notes: Notes,
}

/// A full diff table keyed by aspect id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiffTable {
    pub cells: BTreeMap<AspectId, AspectDiff>,
}

impl Serialize for DiffTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.cells.len()))?;
        for (id, cell) in &self.cells {
            map.serialize_entry(&id.to_string(), cell)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for DiffTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, AspectDiff>::deserialize(d)?;
        let mut cells = BTreeMap::new();
        for (k, mut cell) in raw {
            let id: AspectId = k
                .parse()
                .map_err(|_| D::Error::custom(format!("bad aspect key {k:?}")))?;
            cell.aspect_id = id;
            cells.insert(id, cell);
        }
        Ok(Self { cells })
    }
}

impl DiffTable {
    /// Pretty JSON with keys in ascending numeric order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diff table serializes")
    }

    pub fn get(&self, id: AspectId) -> Option<&AspectDiff> {
        self.cells.get(&id)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("top level is a JSON {0}, not an object keyed by category id")]
    NonObjectTopLevel(&'static str),
    #[error("model reported input errors: {}", .0.join("; "))]
    Fallback(Vec<String>),
    #[error("missing aspect key(s): {}", .0.iter().map(|k| format!("\"{k}\"")).collect::<Vec<_>>().join(", "))]
    MissingAspectKeys(Vec<AspectId>),
    #[error("unexpected top-level key {0:?}")]
    UnexpectedKey(String),
    #[error("aspect {aspect}: {path}: {message}")]
    Field {
        aspect: AspectId,
        path: String,
        message: String,
    },
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// Locates the first JSON value the response carries. A whole-response value
/// wins; otherwise the first `{` that starts a parseable object is used.
pub(crate) fn extract_json(response: &str) -> Result<Value, DiffParseError> {
    let body = strip_fences(response);
    if let Ok(v) = serde_json::from_str::<Value>(body) {
        return match v {
            Value::Object(_) => Ok(v),
            other => Err(DiffParseError::NonObjectTopLevel(kind(&other))),
        };
    }
    for (i, _) in response.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&response[i..]).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = stream.next() {
            return Ok(v);
        }
    }
    Err(DiffParseError::NoJson)
}

fn fallback_errors(obj: &serde_json::Map<String, Value>) -> Option<Vec<String>> {
    if obj.contains_key("1") {
        return None;
    }
    let errors = obj.get("errors")?.as_array()?;
    Some(
        errors
            .iter()
            .map(|e| match e {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect(),
    )
}

fn decode_cell(id: AspectId, value: Value) -> Result<AspectDiff, DiffParseError> {
    let mut cell: AspectDiff = serde_path_to_error::deserialize(value).map_err(|e| {
        DiffParseError::Field {
            aspect: id,
            path: e.path().to_string(),
            message: e.inner().to_string(),
        }
    })?;
    cell.aspect_id = id;
    Ok(cell)
}

/// Result of lenient parsing: decodable cells plus per-aspect decode errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LenientTable {
    pub table: DiffTable,
    pub cell_errors: BTreeMap<AspectId, DiffParseError>,
}

fn top_level(
    response: &str,
    taxonomy: &Taxonomy,
) -> Result<serde_json::Map<String, Value>, DiffParseError> {
    let Value::Object(obj) = extract_json(response)? else {
        unreachable!("extract_json returns objects only")
    };
    if let Some(errors) = fallback_errors(&obj) {
        return Err(DiffParseError::Fallback(errors));
    }
    let missing: Vec<AspectId> = taxonomy
        .ids()
        .filter(|id| !obj.contains_key(&id.to_string()))
        .collect();
    if !missing.is_empty() {
        return Err(DiffParseError::MissingAspectKeys(missing));
    }
    if let Some(extra) = obj
        .keys()
        .find(|k| k.parse::<AspectId>().map_or(true, |id| !taxonomy.contains(id)))
    {
        return Err(DiffParseError::UnexpectedKey(extra.clone()));
    }
    Ok(obj)
}

/// Strict parse: every aspect key present and every cell decodable.
pub fn parse_diff_table(response: &str, taxonomy: &Taxonomy) -> Result<DiffTable, DiffParseError> {
    let mut obj = top_level(response, taxonomy)?;
    let mut cells = BTreeMap::new();
    for id in taxonomy.ids() {
        let value = obj.remove(&id.to_string()).expect("presence checked");
        cells.insert(id, decode_cell(id, value)?);
    }
    Ok(DiffTable { cells })
}

/// Like [`parse_diff_table`] but a cell that fails to decode is set aside
/// instead of failing the whole table.
pub fn parse_diff_table_lenient(
    response: &str,
    taxonomy: &Taxonomy,
) -> Result<LenientTable, DiffParseError> {
    let mut obj = top_level(response, taxonomy)?;
    let mut table = DiffTable::default();
    let mut cell_errors = BTreeMap::new();
    for id in taxonomy.ids() {
        let value = obj.remove(&id.to_string()).expect("presence checked");
        match decode_cell(id, value) {
            Ok(cell) => {
                table.cells.insert(id, cell);
            }
            Err(e) => {
                cell_errors.insert(id, e);
            }
        }
    }
    Ok(LenientTable { table, cell_errors })
}
