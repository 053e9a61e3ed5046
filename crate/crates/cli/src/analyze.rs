//! The `analyze` stage: heatmaps, model-pair distances, ensembles and
//! annotator agreement from a score tensor.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crosswalk_core::analytics::{
    annotator_stats, ensemble_scores, mad_by_annotator, mad_by_aspect, mad_matrix, mean_matrix,
    std_matrix, AgreementSummary, AnnotationRecord, Ensemble, Matrix, ScoreTensor,
};
use crosswalk_core::reporting::{agreement_csv, agreement_markdown, HeatmapFormat, HeatmapSpec, RunManifest};
use crosswalk_core::taxonomy::{AspectId, Taxonomy};

use crate::annotations::{self, ANNOTATIONS_DIR};
use crate::args::AnalyzeArgs;
use crate::error::CliError;
use crate::pipeline::{TENSORS_DIR, TENSOR_FILE};
use crate::run::{list_runs, now, record_stage, relative, sha256_hex, taxonomy_from, StageReport};

pub const HEATMAPS_DIR: &str = "heatmaps";
pub const AGREEMENT_DIR: &str = "agreement";
const STAGE: &str = "analyze";

fn resolve_run(args: &AnalyzeArgs) -> Result<(String, PathBuf), CliError> {
    if let Some(id) = &args.run_id {
        crate::run::check_run_id(id)?;
        return Ok((id.clone(), args.out.join(id)));
    }
    if let Some(t) = &args.tensor {
        let bytes = std::fs::read(t).map_err(|e| CliError::Config(format!("cannot read {}: {e}", t.display())))?;
        let id = format!("analysis-{}", &sha256_hex(&bytes)[..12]);
        return Ok((id.clone(), args.out.join(id)));
    }
    let runs = list_runs(&args.out);
    match runs.as_slice() {
        [(id, dir)] => Ok((id.clone(), dir.clone())),
        [] => Err(CliError::Config(format!("no runs under {}", args.out.display()))),
        _ => Err(CliError::Config(format!(
            "{} holds {} runs; pick one with --run-id",
            args.out.display(),
            runs.len()
        ))),
    }
}

/// Loads a tensor and checks its aspect axis against the taxonomy.
pub fn load_tensor(path: &Path, taxonomy: &Taxonomy) -> Result<ScoreTensor, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let tensor = ScoreTensor::read_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let expected: Vec<AspectId> = taxonomy.ids().collect();
    if tensor.aspects() != expected.as_slice() {
        return Err(CliError::Config(format!(
            "shape mismatch: tensor has {} aspect(s) {:?} but the taxonomy defines {} {:?}",
            tensor.aspects().len(),
            tensor.aspects(),
            expected.len(),
            expected
        )));
    }
    Ok(tensor)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// CSV keeps numeric row labels; the SVG gets aspect names.
fn emit(spec: HeatmapSpec, taxonomy: &Taxonomy, dir: &Path, stem: &str, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let csv = spec.render(HeatmapFormat::Csv).map_err(CliError::io)?;
    let svg = spec.with_aspect_names(taxonomy).render(HeatmapFormat::Svg).map_err(CliError::io)?;
    for (ext, text) in [("csv", csv), ("svg", svg)] {
        let path = dir.join(format!("{stem}.{ext}"));
        write(&path, &text)?;
        out.push(path);
    }
    Ok(())
}

fn matrix_csv(m: &Matrix) -> Result<String, CliError> {
    HeatmapSpec::similarity("", m)
        .and_then(|s| s.render(HeatmapFormat::Csv))
        .map_err(CliError::io)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<StageReport, CliError> {
    let taxonomy = taxonomy_from(args.taxonomy.as_deref())?;
    let (run_id, run_dir) = resolve_run(args)?;
    let tensor_path = args
        .tensor
        .clone()
        .unwrap_or_else(|| run_dir.join(TENSORS_DIR).join(TENSOR_FILE));
    let tensor = load_tensor(&tensor_path, &taxonomy)?;

    let mut written = Vec::new();
    let heat = run_dir.join(HEATMAPS_DIR);
    let similarity = HeatmapSpec::similarity("Mean similarity across models", &mean_matrix(&tensor)).map_err(CliError::io)?;
    emit(similarity, &taxonomy, &heat, "mean_similarity", &mut written)?;
    let spread = HeatmapSpec::spread("Standard deviation across models", &std_matrix(&tensor)).map_err(CliError::io)?;
    emit(spread, &taxonomy, &heat, "std_similarity", &mut written)?;
    let mad = HeatmapSpec::spread("Mean absolute difference between models", &mad_matrix(&tensor)).map_err(CliError::io)?;
    emit(mad, &taxonomy, &heat, "model_mad", &mut written)?;

    let tdir = run_dir.join(TENSORS_DIR);
    for (method, name) in [(Ensemble::Mean, "ensemble_mean.csv"), (Ensemble::Median, "ensemble_median.csv")] {
        let m = ensemble_scores(&tensor, method).map_err(CliError::io)?;
        let path = tdir.join(name);
        write(&path, &matrix_csv(&m)?)?;
        written.push(path);
    }

    let ann_dir = args
        .annotations
        .clone()
        .unwrap_or_else(|| args.out.join(ANNOTATIONS_DIR));
    let records = annotations::read_dir(&ann_dir).map_err(CliError::Config)?;
    for r in &records {
        r.validate(&taxonomy)
            .map_err(|e| CliError::Config(format!("annotation {} for {}: {e}", r.annotator_id, r.pair_id)))?;
    }
    if !records.is_empty() {
        written.extend(write_agreement(&records, &tensor, &taxonomy, &run_dir.join(AGREEMENT_DIR))?);
    }

    let report = StageReport {
        run_id: run_id.clone(),
        run_dir: run_dir.clone(),
        artifacts: written.iter().map(|p| relative(&run_dir, p)).collect(),
        ..Default::default()
    };
    let seed = || {
        let ts = now();
        RunManifest {
            run_id: run_id.clone(),
            config_digest: std::fs::read(&tensor_path).map(|b| sha256_hex(&b)).unwrap_or_default(),
            taxonomy_source: taxonomy.source().to_string(),
            corpus_manifest_digest: String::new(),
            models: Vec::new(),
            pack: String::new(),
            mode: String::new(),
            pairs: tensor.pairs().to_vec(),
            artifacts: Default::default(),
            failures: Vec::new(),
            missing_cells: tensor.missing_count(),
            started_at: ts.clone(),
            finished_at: ts,
        }
    };
    record_stage(&run_dir, seed, STAGE, &report, |_| {})?;
    Ok(report)
}

fn write_agreement(
    records: &[AnnotationRecord],
    tensor: &ScoreTensor,
    taxonomy: &Taxonomy,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let mut by_pair: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_pair.entry(r.pair_id.as_str()).or_default().push(r.clone());
    }
    let mut written = Vec::new();
    let mut summaries: Vec<AgreementSummary> = Vec::new();
    for (pair, recs) in &by_pair {
        let summary = annotator_stats(recs)
            .map_err(CliError::config)?
            .with_model_mad(recs, tensor);
        for (ext, text) in [
            ("csv", agreement_csv(&summary, taxonomy)),
            ("md", agreement_markdown(&summary, taxonomy)),
        ] {
            let path = dir.join(format!("agreement_{pair}.{ext}"));
            write(&path, &text)?;
            written.push(path);
        }
        summaries.push(summary);
    }
    let path = dir.join("summary.json");
    write(&path, &(serde_json::to_string_pretty(&summaries).expect("summaries serialize") + "\n"))?;
    written.push(path);

    // Annotator × model, averaged over every pair the annotator scored.
    let overall = mad_by_annotator(records, tensor);
    let annotators: Vec<&str> = {
        let mut v: Vec<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
        v.sort();
        v.dedup();
        v
    };
    let lookup: BTreeMap<(&str, &str), f64> = overall
        .iter()
        .map(|m| ((m.annotator_id.as_str(), m.method_key.as_str()), m.value))
        .collect();
    let mut csv = String::from("annotator");
    for m in tensor.methods() {
        let _ = write!(csv, ",{m}");
    }
    csv.push('\n');
    for a in &annotators {
        csv.push_str(a);
        for m in tensor.methods() {
            csv.push(',');
            if let Some(v) = lookup.get(&(*a, m.as_str())) {
                let _ = write!(csv, "{v}");
            }
        }
        csv.push('\n');
    }
    let path = dir.join("human_llm_mad.csv");
    write(&path, &csv)?;
    written.push(path);

    let mut csv = String::from("method_key,pair_id,aspect_id,mad\n");
    for ((method, pair, aspect), v) in mad_by_aspect(records, tensor) {
        let _ = writeln!(csv, "{method},{pair},{aspect},{v}");
    }
    let path = dir.join("human_llm_mad_by_aspect.csv");
    write(&path, &csv)?;
    written.push(path);
    Ok(written)
}
