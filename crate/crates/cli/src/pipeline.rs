//! The `extract` and `crosswalk` stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crosswalk_core::analytics::ScoreTensor;
use crosswalk_core::corpus::{DocumentPair, DocumentRecord};
use crosswalk_core::crosswalk::{crosswalk_pair, CrosswalkError, CrosswalkOptions, CrosswalkResult, Mode};
use crosswalk_core::diagnostics::{Finding, Location};
use crosswalk_core::extraction::{
    extract_document, parse_extraction, resolve_pages, ExtractionError, ExtractionResult,
    DEFAULT_PROMPT_BUDGET,
};
use crosswalk_core::gateway::ModelSpec;
use crosswalk_core::reporting::FailureEntry;
use crosswalk_core::taxonomy::{AspectId, Taxonomy};
use serde::Serialize;

use crate::args::{CrosswalkArgs, ExtractArgs};
use crate::error::CliError;
use crate::run::{parallel_map, record_stage, relative, RunContext, StageReport};

pub const EXTRACTIONS_DIR: &str = "extractions";
pub const DIFFS_DIR: &str = "diffs";
pub const TENSORS_DIR: &str = "tensors";
pub const TENSOR_FILE: &str = "scores.csv";
pub const PRECOMPUTED: &str = "precomputed";

const EXTRACT_STAGE: &str = "extract";
const CROSSWALK_STAGE: &str = "crosswalk";

#[derive(Serialize)]
struct ValidationEntry<'a> {
    document_label: &'a str,
    method_key: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
    findings: &'a [Finding],
}

fn failure(stage: &str, method: &str, subject: &str, aspect: Option<AspectId>, message: String) -> FailureEntry {
    FailureEntry {
        stage: stage.into(),
        method_key: method.into(),
        subject: subject.into(),
        aspect,
        message,
    }
}

fn aspect_of(f: &Finding) -> Option<AspectId> {
    match f.location {
        Location::Aspect(id) => Some(id),
        Location::Activity(_) => None,
    }
}

/// Reads a precomputed extraction for `doc` from `dir`: either the raw
/// activities XML as `<label>.xml` or a result file
/// `extraction_<label>_<key>.json`.
pub fn load_precomputed(
    dir: &Path,
    doc: &DocumentRecord,
    taxonomy: &Taxonomy,
) -> Result<ExtractionResult, CliError> {
    let xml = dir.join(format!("{}.xml", doc.label));
    if xml.is_file() {
        let text = std::fs::read_to_string(&xml).map_err(|e| CliError::io(format!("{}: {e}", xml.display())))?;
        return Ok(match parse_extraction(&text) {
            Ok(mut items) => {
                resolve_pages(&mut items, doc);
                ExtractionResult::from_items(&doc.label, PRECOMPUTED, items, taxonomy, text)
            }
            Err(reason) => ExtractionResult::failed(&doc.label, PRECOMPUTED, taxonomy, text, &reason),
        });
    }
    let prefix = format!("extraction_{}_", doc.label);
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(".json"))
        })
        .collect();
    candidates.sort();
    let path = candidates.first().ok_or_else(|| {
        CliError::Config(format!(
            "no precomputed extraction for document {} in {} (expected {}.xml or {prefix}<key>.json)",
            doc.label,
            dir.display(),
            doc.label
        ))
    })?;
    let result = ExtractionResult::read_from(path).map_err(CliError::config)?;
    if result.document_label != doc.label {
        return Err(CliError::Config(format!(
            "{} describes document {}, not {}",
            path.display(),
            result.document_label,
            doc.label
        )));
    }
    Ok(result.revalidated(taxonomy))
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<StageReport, CliError> {
    let ctx = RunContext::from_args(&args.common)?;
    let dir = ctx.run_dir.join(EXTRACTIONS_DIR);
    let outcomes: Vec<(String, String, Result<ExtractionResult, ExtractionError>)> =
        match &args.extractions_from {
            Some(src) => {
                let mut v = Vec::new();
                for doc in ctx.corpus.documents() {
                    let r = load_precomputed(src, doc, &ctx.taxonomy)?;
                    v.push((doc.label.clone(), r.method_key.clone(), Ok(r)));
                }
                v
            }
            None => {
                let tasks: Vec<(&DocumentRecord, &Arc<ModelSpec>)> = ctx
                    .corpus
                    .documents()
                    .flat_map(|d| ctx.models.iter().map(move |m| (d, m)))
                    .collect();
                parallel_map(&tasks, ctx.parallelism, |(doc, model)| {
                    let r = extract_document(doc, &ctx.taxonomy, &ctx.gateway, model, ctx.pack, DEFAULT_PROMPT_BUDGET);
                    (doc.label.clone(), model.method_key.clone(), r)
                })
            }
        };

    let mut report = StageReport {
        run_id: ctx.run_id.clone(),
        run_dir: ctx.run_dir.clone(),
        strict: ctx.mode == Mode::Strict,
        ..Default::default()
    };
    let mut validation = Vec::new();
    for (label, method, outcome) in &outcomes {
        match outcome {
            Ok(result) => {
                let path = result.write_to(&dir).map_err(CliError::io)?;
                report.artifacts.push(relative(&ctx.run_dir, &path));
                report.artifacts.push(format!(
                    "{EXTRACTIONS_DIR}/{}",
                    ExtractionResult::raw_file_name(label, method)
                ));
                if let Some(reason) = &result.failure {
                    report.validation_failures += 1;
                    report.failures.push(failure(
                        EXTRACT_STAGE,
                        method,
                        label,
                        None,
                        format!("response did not parse: {reason}"),
                    ));
                }
                let errors: Vec<&Finding> = result.diagnostics.iter().filter(|f| f.is_error()).collect();
                if !errors.is_empty() {
                    report.validation_failures += 1;
                }
                for f in errors {
                    report.failures.push(failure(EXTRACT_STAGE, method, label, None, f.to_string()));
                }
                validation.push(ValidationEntry {
                    document_label: label,
                    method_key: method,
                    failure: result.failure.as_deref(),
                    findings: &result.diagnostics,
                });
            }
            Err(e @ ExtractionError::Gateway { .. }) => {
                report.gateway_failures += 1;
                report.failures.push(failure(EXTRACT_STAGE, method, label, None, e.to_string()));
            }
            Err(e) => {
                report.validation_failures += 1;
                report.failures.push(failure(EXTRACT_STAGE, method, label, None, e.to_string()));
            }
        }
    }
    if !validation.is_empty() {
        let path = dir.join("validation.json");
        let json = serde_json::to_string_pretty(&validation).expect("validation report serializes");
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        report.artifacts.push(relative(&ctx.run_dir, &path));
    }
    record_stage(&ctx.run_dir, || ctx.seed_manifest(), EXTRACT_STAGE, &report, |_| {})?;
    Ok(report)
}

/// Finds the extraction a model's crosswalk should use: its own if present,
/// otherwise the shared precomputed one.
pub fn find_extraction(dir: &Path, label: &str, method: &str) -> Option<PathBuf> {
    [method, PRECOMPUTED]
        .into_iter()
        .map(|key| dir.join(ExtractionResult::file_name(label, key)))
        .find(|p| p.is_file())
}

fn pairs_for(ctx: &RunContext, args: &CrosswalkArgs) -> Result<Vec<DocumentPair>, CliError> {
    match &args.pairing.anchor {
        Some(anchor) => ctx.corpus.anchor_pairs(anchor),
        None => ctx.corpus.all_pairs(),
    }
    .map_err(CliError::config)
}

pub fn cmd_crosswalk(args: &CrosswalkArgs) -> Result<StageReport, CliError> {
    let ctx = RunContext::from_args(&args.common)?;
    let pairs = pairs_for(&ctx, args)?;

    let ext_dir = ctx.run_dir.join(EXTRACTIONS_DIR);
    let mut extractions: BTreeMap<(String, String), ExtractionResult> = BTreeMap::new();
    for pair in &pairs {
        for label in [&pair.first, &pair.second] {
            for model in &ctx.models {
                let key = (label.clone(), model.method_key.clone());
                if extractions.contains_key(&key) {
                    continue;
                }
                let path = find_extraction(&ext_dir, label, &model.method_key).ok_or_else(|| {
                    CliError::Config(format!(
                        "missing extraction for document {label} (method {}) under {}; run `crosswalk extract` first",
                        model.method_key,
                        ext_dir.display()
                    ))
                })?;
                extractions.insert(key, ExtractionResult::read_from(&path).map_err(CliError::config)?);
            }
        }
    }

    let options = CrosswalkOptions {
        pack: ctx.pack,
        mode: ctx.mode,
        config_digest: ctx.config_digest.clone(),
        ..CrosswalkOptions::default()
    };
    let tasks: Vec<(&DocumentPair, &Arc<ModelSpec>)> = pairs
        .iter()
        .flat_map(|p| ctx.models.iter().map(move |m| (p, m)))
        .collect();
    let outcomes = parallel_map(&tasks, ctx.parallelism, |(pair, model)| {
        let a = &extractions[&(pair.first.clone(), model.method_key.clone())];
        let b = &extractions[&(pair.second.clone(), model.method_key.clone())];
        crosswalk_pair(pair, a, b, &ctx.taxonomy, &ctx.gateway, model, &options)
    });

    let methods: Vec<String> = ctx.models.iter().map(|m| m.method_key.clone()).collect();
    let pair_ids: Vec<String> = pairs.iter().map(DocumentPair::id).collect();
    let mut tensor = ScoreTensor::new(methods, pair_ids.clone(), ctx.taxonomy.ids().collect())
        .map_err(CliError::config)?;
    let mut report = StageReport {
        run_id: ctx.run_id.clone(),
        run_dir: ctx.run_dir.clone(),
        strict: ctx.mode == Mode::Strict,
        ..Default::default()
    };
    let diff_dir = ctx.run_dir.join(DIFFS_DIR);
    for ((pair, model), outcome) in tasks.iter().zip(&outcomes) {
        let (pid, key) = (pair.id(), model.method_key.as_str());
        match outcome {
            Ok(result) => {
                let path = result.write_to(&diff_dir).map_err(CliError::io)?;
                report.artifacts.push(relative(&ctx.run_dir, &path));
                for name in [
                    CrosswalkResult::raw_file_name(pair, key),
                    CrosswalkResult::report_file_name(pair, key),
                ] {
                    report.artifacts.push(format!("{DIFFS_DIR}/{name}"));
                }
                for aspect in ctx.taxonomy.ids() {
                    let score = result.score(aspect);
                    tensor
                        .insert(key, &pid, aspect, score.map(i64::from))
                        .expect("tensor axes cover every task");
                    if score.is_none() {
                        report.validation_failures += 1;
                        report.failures.push(failure(
                            CROSSWALK_STAGE,
                            key,
                            &pid,
                            Some(aspect),
                            missing_reason(result, aspect),
                        ));
                    }
                }
            }
            Err(CrosswalkError::Validation { findings, .. }) => {
                report.validation_failures += 1;
                for f in findings.iter().filter(|f| f.is_error()) {
                    report.failures.push(failure(CROSSWALK_STAGE, key, &pid, aspect_of(f), f.to_string()));
                }
            }
            Err(e @ CrosswalkError::Gateway { .. }) => {
                report.gateway_failures += 1;
                report.failures.push(failure(CROSSWALK_STAGE, key, &pid, None, e.to_string()));
            }
            Err(e) => {
                report.validation_failures += 1;
                report.failures.push(failure(CROSSWALK_STAGE, key, &pid, None, e.to_string()));
            }
        }
    }

    let aborted = report.strict && !report.failures.is_empty();
    if !aborted {
        let dir = ctx.run_dir.join(TENSORS_DIR);
        std::fs::create_dir_all(&dir).map_err(CliError::io)?;
        let path = dir.join(TENSOR_FILE);
        std::fs::write(&path, tensor.to_csv()).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        report.artifacts.push(relative(&ctx.run_dir, &path));
    }
    let missing = tensor.missing_count();
    record_stage(&ctx.run_dir, || ctx.seed_manifest(), CROSSWALK_STAGE, &report, |m| {
        m.pairs = pair_ids;
        m.missing_cells = missing;
    })?;
    Ok(report)
}

fn missing_reason(result: &CrosswalkResult, aspect: AspectId) -> String {
    if let Some(e) = result.failed_cells.get(&aspect) {
        return format!("cell did not decode: {e}");
    }
    let errors: Vec<String> = result
        .diagnostics
        .iter()
        .filter(|f| f.is_error() && f.location == Location::Aspect(aspect))
        .map(|f| f.to_string())
        .collect();
    if errors.is_empty() {
        "cell is absent".into()
    } else {
        errors.join("; ")
    }
}
