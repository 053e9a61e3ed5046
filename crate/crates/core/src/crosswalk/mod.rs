//! Per-pair crosswalk: diff prompt, table parsing, validation and the local
//! oracle.

mod oracle;
mod table;
mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentPair;
use crate::diagnostics::{has_errors, Finding, Location};
use crate::extraction::{activities_to_xml, ExtractionResult, DEFAULT_PROMPT_BUDGET};
use crate::gateway::{Gateway, GatewayError, ModelSpec};
use crate::prompt::{render, PromptPack, RenderError};
use crate::taxonomy::{render_category_block, AspectId, Taxonomy};

pub use oracle::{
    check_cell, oracle_check, oracle_repair, recompute, representative_extent, Basis,
    OracleFinding, Recomputed, RepresentativeError, RepresentativeValue, Tolerance,
};
pub use table::{
    parse_diff_table, parse_diff_table_lenient, AspectDiff, ConfidenceSummary, DiffParseError,
    DiffTable, Evidence, LenientTable, Notes, PageRef,
};
pub use validate::{validate_diff_table, DELTA_TOLERANCE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Any ERROR finding fails the pair.
    Strict,
    /// Mechanical fields are recomputed; cells with residual errors drop out.
    #[default]
    Repair,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Mode::Strict),
            "repair" => Ok(Mode::Repair),
            other => Err(format!("unknown mode {other:?} (expected strict or repair)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CrosswalkError {
    #[error("pair {pair}: diff prompt has {chars} characters, over the budget of {budget}")]
    PromptTooLarge {
        pair: String,
        chars: usize,
        budget: usize,
    },
    #[error(transparent)]
    Template(#[from] RenderError),
    #[error("pair {pair}, model {model}: {source}")]
    Gateway {
        pair: String,
        model: String,
        #[source]
        source: GatewayError,
    },
    #[error("pair {pair}, model {model}: diff table unusable after retry: {source}")]
    Parse {
        pair: String,
        model: String,
        #[source]
        source: DiffParseError,
    },
    #[error("pair {pair}, model {model}: diff table fails validation at {}: {}",
        aspects_of(.findings), .findings.iter().filter(|f| f.is_error()).map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Validation {
        pair: String,
        model: String,
        findings: Vec<Finding>,
    },
    #[error("cannot write crosswalk artifact {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn aspects_of(findings: &[Finding]) -> String {
    let mut ids: Vec<AspectId> = findings
        .iter()
        .filter(|f| f.is_error())
        .filter_map(|f| match f.location {
            Location::Aspect(id) => Some(id),
            Location::Activity(_) => None,
        })
        .collect();
    ids.dedup();
    let list: Vec<String> = ids.iter().map(|id| id.to_string()).collect();
    format!("aspect {}", list.join(", "))
}

/// Fills the diff template with both documents' ERROR-free activities.
pub fn build_diff_prompt(
    pair: &DocumentPair,
    a: &ExtractionResult,
    b: &ExtractionResult,
    taxonomy: &Taxonomy,
    pack: PromptPack,
) -> Result<String, CrosswalkError> {
    let xml_a = activities_to_xml(a.valid_items());
    let xml_b = activities_to_xml(b.valid_items());
    let categories = render_category_block(taxonomy);
    let title_a = format!("Document {}", pair.first);
    let title_b = format!("Document {}", pair.second);
    let slots = BTreeMap::from([
        ("DOCUMENT_A_TITLE", title_a.as_str()),
        ("DOCUMENT_A_XML", xml_a.as_str()),
        ("DOCUMENT_B_TITLE", title_b.as_str()),
        ("DOCUMENT_B_XML", xml_b.as_str()),
        ("AMAIS_CATEGORIES", categories.as_str()),
    ]);
    let prompt = render(pack.diff_template(), &slots)?;
    let chars = prompt.chars().count();
    if chars > DEFAULT_PROMPT_BUDGET {
        return Err(CrosswalkError::PromptTooLarge {
            pair: pair.to_string(),
            chars,
            budget: DEFAULT_PROMPT_BUDGET,
        });
    }
    Ok(prompt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStamp {
    pub timestamp: String,
    pub config_digest: String,
}

impl RunStamp {
    pub fn now(config_digest: impl Into<String>) -> Self {
        Self {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_digest: config_digest.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkResult {
    pub pair: DocumentPair,
    pub method_key: String,
    pub cells: DiffTable,
    /// Aspects whose cell could not be decoded (repair mode only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failed_cells: BTreeMap<AspectId, String>,
    pub raw_response: String,
    /// Validation findings on the final cells.
    pub diagnostics: Vec<Finding>,
    pub oracle_report: Vec<OracleFinding>,
    pub run_stamp: RunStamp,
}

impl CrosswalkResult {
    /// The similarity score that enters the tensor, or `None` when the cell
    /// is missing or still carries an ERROR finding.
    pub fn score(&self, aspect: AspectId) -> Option<u8> {
        let cell = self.cells.get(aspect)?;
        let broken = self
            .diagnostics
            .iter()
            .any(|f| f.is_error() && f.location == Location::Aspect(aspect));
        if broken {
            return None;
        }
        u8::try_from(cell.comparison_score).ok().filter(|s| *s <= 5)
    }

    pub fn diff_file_name(pair: &DocumentPair, method_key: &str) -> String {
        format!("amais_diff_table_{}_{method_key}.json", pair.compact())
    }

    pub fn raw_file_name(pair: &DocumentPair, method_key: &str) -> String {
        format!("amais_diff_table_{}_{method_key}.raw.txt", pair.compact())
    }

    pub fn report_file_name(pair: &DocumentPair, method_key: &str) -> String {
        format!("crosswalk_{}_{method_key}.json", pair.compact())
    }

    /// Writes the diff table, the raw response and the full result. Returns
    /// the diff table path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, CrosswalkError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CrosswalkError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let table = dir.join(Self::diff_file_name(&self.pair, &self.method_key));
        std::fs::write(&table, self.cells.to_json()).map_err(io(&table))?;
        let raw = dir.join(Self::raw_file_name(&self.pair, &self.method_key));
        std::fs::write(&raw, &self.raw_response).map_err(io(&raw))?;
        let report = dir.join(Self::report_file_name(&self.pair, &self.method_key));
        let json = serde_json::to_string_pretty(self).expect("crosswalk result serializes");
        std::fs::write(&report, json).map_err(io(&report))?;
        Ok(table)
    }

    pub fn read_from(path: &Path) -> Result<Self, CrosswalkError> {
        let text = std::fs::read_to_string(path).map_err(|source| CrosswalkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CrosswalkError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CrosswalkOptions {
    pub pack: PromptPack,
    pub mode: Mode,
    pub tolerance: Tolerance,
    pub config_digest: String,
}

impl Default for CrosswalkOptions {
    fn default() -> Self {
        Self {
            pack: PromptPack::En,
            mode: Mode::Repair,
            tolerance: Tolerance::default(),
            config_digest: String::new(),
        }
    }
}

fn parse_for_mode(
    text: &str,
    taxonomy: &Taxonomy,
    mode: Mode,
) -> Result<LenientTable, DiffParseError> {
    match mode {
        Mode::Strict => parse_diff_table(text, taxonomy).map(|table| LenientTable {
            table,
            cell_errors: BTreeMap::new(),
        }),
        Mode::Repair => parse_diff_table_lenient(text, taxonomy),
    }
}

/// Runs build → complete → parse → oracle → validate for one pair and model.
pub fn crosswalk_pair(
    pair: &DocumentPair,
    a: &ExtractionResult,
    b: &ExtractionResult,
    taxonomy: &Taxonomy,
    gateway: &Gateway,
    model: &Arc<ModelSpec>,
    options: &CrosswalkOptions,
) -> Result<CrosswalkResult, CrosswalkError> {
    let prompt = build_diff_prompt(pair, a, b, taxonomy, options.pack)?;
    let request = gateway.request(model, prompt);
    let gw_err = |source| CrosswalkError::Gateway {
        pair: pair.to_string(),
        model: model.method_key.clone(),
        source,
    };
    let first = gateway.complete(&request).map_err(gw_err)?;
    let (raw, parsed) = match parse_for_mode(&first.text, taxonomy, options.mode) {
        Ok(t) => (first.text, Ok(t)),
        Err(_) => {
            let second = gateway.complete_fresh(&request).map_err(gw_err)?;
            let parsed = parse_for_mode(&second.text, taxonomy, options.mode);
            (second.text, parsed)
        }
    };
    let LenientTable { mut table, cell_errors } = parsed.map_err(|source| CrosswalkError::Parse {
        pair: pair.to_string(),
        model: model.method_key.clone(),
        source,
    })?;

    let (diagnostics, oracle_report) = match options.mode {
        Mode::Strict => {
            let diagnostics = validate_diff_table(&table, a, b);
            if has_errors(&diagnostics) {
                return Err(CrosswalkError::Validation {
                    pair: pair.to_string(),
                    model: model.method_key.clone(),
                    findings: diagnostics,
                });
            }
            (diagnostics, oracle_check(&table, a, b, options.tolerance))
        }
        Mode::Repair => {
            let report = oracle_repair(&mut table, a, b, options.tolerance);
            (validate_diff_table(&table, a, b), report)
        }
    };

    Ok(CrosswalkResult {
        pair: pair.clone(),
        method_key: model.method_key.clone(),
        cells: table,
        failed_cells: cell_errors.into_iter().map(|(id, e)| (id, e.to_string())).collect(),
        raw_response: raw,
        diagnostics,
        oracle_report,
        run_stamp: RunStamp::now(&options.config_digest),
    })
}

/// Builds the cell the oracle considers correct for `aspect`, with
/// placeholder text and the given score. Used by the synthetic backend and by
/// tests that need schema-valid tables.
pub fn consistent_cell(
    taxonomy: &Taxonomy,
    aspect: AspectId,
    a: &ExtractionResult,
    b: &ExtractionResult,
    score: i64,
) -> AspectDiff {
    let r = recompute(aspect, a, b);
    let cat = taxonomy.get(aspect);
    let evidence = |ex: &ExtractionResult| {
        let items: Vec<_> = ex.items_for(aspect).collect();
        (!items.is_empty()).then(|| Evidence {
            page_number: items
                .iter()
                .map(|i| PageRef::Text(i.page_number.to_string()))
                .collect(),
            excerpts: items.iter().filter_map(|i| i.excerpts.first().cloned()).collect(),
        })
    };
    let summary = |ex: &ExtractionResult| {
        let titles: Vec<&str> = ex.items_for(aspect).map(|i| i.title.as_str()).collect();
        if titles.is_empty() {
            "No corresponding activity can be found.".to_string()
        } else {
            titles.join("; ")
        }
    };
    AspectDiff {
        aspect_id: aspect,
        category_name_en: cat.map(|c| c.name_en.clone()).unwrap_or_default(),
        category_name_local: cat.and_then(|c| c.name_local.clone()).unwrap_or_default(),
        doc_a_summary: summary(a),
        doc_b_summary: summary(b),
        comparison_results: if r.unknown {
            "Not applicable.".to_string()
        } else {
            format!("Similarity {score} of 5.")
        },
        comparison_score: if r.unknown { 0 } else { score },
        unknown: r.unknown,
        extent_doc_a: r.extent_a.value,
        extent_doc_b: r.extent_b.value,
        extent_delta: r.extent_delta,
        confidence_doc_a: r.confidence_a,
        confidence_doc_b: r.confidence_b,
        confidence_delta: r.confidence_delta,
        extent_raw_doc_a: r.extent_raw_a,
        extent_raw_doc_b: r.extent_raw_b,
        confidence_raw_doc_a: r.confidence_raw_a,
        confidence_raw_doc_b: r.confidence_raw_b,
        evidence_doc_a: evidence(a),
        evidence_doc_b: evidence(b),
        notes: Notes::empty(),
    }
}
