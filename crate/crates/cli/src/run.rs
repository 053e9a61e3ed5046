//! Run setup shared by the pipeline stages: configuration loading, the run
//! directory, the gateway and manifest bookkeeping.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use chrono::{SecondsFormat, Utc};
use crosswalk_core::corpus::{load_corpus, Corpus};
use crosswalk_core::crosswalk::Mode;
use crosswalk_core::gateway::{
    Backend, BackendError, CacheMode, FixtureStore, Gateway, ModelSpec, ModelsConfig, RetryPolicy,
};
use crosswalk_core::prompt::PromptPack;
use crosswalk_core::reporting::{emit_manifest, FailureEntry, RunManifest};
use crosswalk_core::synthetic::{SyntheticBackend, SYNTHETIC_ENDPOINT};
use crosswalk_core::taxonomy::{builtin_taxonomy, load_taxonomy, Taxonomy};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::args::PipelineArgs;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn taxonomy_from(path: Option<&Path>) -> Result<Taxonomy, CliError> {
    match path {
        None => Ok(builtin_taxonomy()),
        Some(p) => load_taxonomy(p).map_err(CliError::config),
    }
}

/// Digest of document content, independent of where the files live.
pub fn corpus_digest(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    for d in corpus.documents() {
        for field in [&d.label, &d.title, &d.entity, &d.body] {
            h.update(field.as_bytes());
            h.update([0]);
        }
    }
    hex::encode(h.finalize())
}

pub fn check_run_id(id: &str) -> Result<(), CliError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "run id {id:?} may only use ASCII letters, digits, '-', '_' and '.'"
        )))
    }
}

/// Dispatches `synthetic` endpoints to the offline generator and everything
/// else to the HTTP client. `fixture` endpoints never reach a backend.
pub struct RouterBackend {
    synthetic: SyntheticBackend,
    http: OnceLock<Result<crosswalk_core::gateway::http::HttpBackend, BackendError>>,
}

impl RouterBackend {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self {
            synthetic: SyntheticBackend::new(taxonomy),
            http: OnceLock::new(),
        }
    }
}

impl Backend for RouterBackend {
    fn generate(&self, model: &ModelSpec, prompt: &str) -> Result<String, BackendError> {
        match model.endpoint.as_str() {
            SYNTHETIC_ENDPOINT => self.synthetic.generate(model, prompt),
            "fixture" => Err(BackendError::Fatal(format!(
                "model {} is fixture-only and this request was never recorded",
                model.model_id
            ))),
            _ => {
                let http = self
                    .http
                    .get_or_init(|| crosswalk_core::gateway::http::HttpBackend::new(Duration::from_secs(600)));
                match http {
                    Ok(client) => client.generate(model, prompt),
                    Err(e) => Err(e.clone()),
                }
            }
        }
    }
}

/// Everything a pipeline stage needs, resolved from the flags.
pub struct RunContext {
    pub taxonomy: Taxonomy,
    pub corpus: Corpus,
    pub models: Vec<Arc<ModelSpec>>,
    pub pack: PromptPack,
    pub mode: Mode,
    pub parallelism: usize,
    pub run_id: String,
    pub run_dir: PathBuf,
    pub config_digest: String,
    pub corpus_digest: String,
    pub gateway: Gateway,
}

impl RunContext {
    pub fn from_args(args: &PipelineArgs) -> Result<Self, CliError> {
        let taxonomy = taxonomy_from(args.taxonomy.as_deref())?;
        let corpus = load_corpus(&args.corpus).map_err(CliError::config)?;
        let models = ModelsConfig::load(&args.models).map_err(CliError::config)?;
        let corpus_digest = corpus_digest(&corpus);
        let config = json!({
            "corpus": corpus_digest,
            "taxonomy": taxonomy.to_json(),
            "models": models,
            "pack": args.pack.id(),
            "mode": args.mode,
        });
        let config_digest = sha256_hex(config.to_string().as_bytes());
        let run_id = match &args.run_id {
            Some(id) => id.clone(),
            None => format!("run-{}", &config_digest[..12]),
        };
        check_run_id(&run_id)?;
        let run_dir = args.out.join(&run_id);

        let fixtures = args.fixtures.clone().unwrap_or_else(|| args.out.join("fixtures"));
        let store = FixtureStore::open(&fixtures).map_err(CliError::config)?;
        let cache = if args.replay_only {
            CacheMode::replay_only()
        } else if args.record {
            CacheMode::record()
        } else {
            CacheMode::default()
        };
        let gateway = Gateway::new(cache)
            .with_store(store)
            .with_backend(Arc::new(RouterBackend::new(taxonomy.clone())))
            .with_retry(RetryPolicy {
                base_delay: Duration::from_millis(args.retry_delay_ms),
                ..RetryPolicy::default()
            });

        Ok(Self {
            taxonomy,
            corpus,
            models: models.into_iter().map(Arc::new).collect(),
            pack: args.pack,
            mode: args.mode,
            parallelism: args.parallelism,
            run_id,
            run_dir,
            config_digest,
            corpus_digest,
            gateway,
        })
    }

    pub fn seed_manifest(&self) -> RunManifest {
        let ts = now();
        RunManifest {
            run_id: self.run_id.clone(),
            config_digest: self.config_digest.clone(),
            taxonomy_source: self.taxonomy.source().to_string(),
            corpus_manifest_digest: self.corpus_digest.clone(),
            models: self.models.iter().map(|m| (**m).clone()).collect(),
            pack: self.pack.id().to_string(),
            mode: match self.mode {
                Mode::Strict => "strict".into(),
                Mode::Repair => "repair".into(),
            },
            pairs: Vec::new(),
            artifacts: Default::default(),
            failures: Vec::new(),
            missing_cells: 0,
            started_at: ts.clone(),
            finished_at: ts,
        }
    }
}

/// Counts gathered while a stage runs.
#[derive(Debug, Default, Clone)]
pub struct StageReport {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub failures: Vec<FailureEntry>,
    pub gateway_failures: usize,
    pub validation_failures: usize,
    pub strict: bool,
}

impl StageReport {
    /// Gateway trouble wins over validation trouble; validation only fails
    /// the command in strict mode.
    pub fn exit_code(&self) -> i32 {
        if self.gateway_failures > 0 {
            crate::error::EXIT_GATEWAY
        } else if self.strict && self.validation_failures > 0 {
            crate::error::EXIT_VALIDATION
        } else {
            crate::error::EXIT_OK
        }
    }
}

/// Merges one stage's artifacts and failures into the run manifest,
/// replacing whatever that stage recorded before.
pub fn record_stage(
    run_dir: &Path,
    seed: impl FnOnce() -> RunManifest,
    stage: &str,
    report: &StageReport,
    edit: impl FnOnce(&mut RunManifest),
) -> Result<RunManifest, CliError> {
    let path = run_dir.join(MANIFEST_FILE);
    let mut manifest = if path.exists() {
        RunManifest::read_from(&path).map_err(CliError::config)?
    } else {
        seed()
    };
    manifest.artifacts.remove(stage);
    for a in &report.artifacts {
        manifest.add_artifact(stage, a.clone());
    }
    manifest.failures.retain(|f| f.stage != stage);
    manifest.failures.extend(report.failures.iter().cloned());
    edit(&mut manifest);
    manifest.finished_at = now();
    emit_manifest(&manifest, run_dir).map_err(CliError::io)?;
    Ok(manifest)
}

/// Maps `f` over `items` with at most `parallelism` calls in flight.
/// Results keep input order.
pub fn parallel_map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(items.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Run directories under `out` that hold a manifest, sorted by name.
pub fn list_runs(out: &Path) -> Vec<(String, PathBuf)> {
    let Ok(entries) = std::fs::read_dir(out) else { return Vec::new() };
    let mut runs: Vec<(String, PathBuf)> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .filter_map(|p| Some((p.file_name()?.to_str()?.to_string(), p)))
        .collect();
    runs.sort();
    runs
}

/// Path relative to the run directory, with forward slashes.
pub fn relative(run_dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(run_dir).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
