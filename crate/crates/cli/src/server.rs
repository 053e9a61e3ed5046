//! Read-mostly HTTP API over finished runs. The only thing it writes is the
//! annotation store.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crosswalk_core::analytics::{annotator_stats, AgreementError, AgreementSummary, AnnotationRecord, ScoreTensor};
use crosswalk_core::corpus::DocumentPair;
use crosswalk_core::crosswalk::{CrosswalkResult, DiffTable};
use crosswalk_core::reporting::RunManifest;
use crosswalk_core::taxonomy::{AspectId, Taxonomy};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::annotations::{self, ANNOTATIONS_DIR};
use crate::pipeline::{DIFFS_DIR, TENSORS_DIR, TENSOR_FILE};
use crate::run::{list_runs, MANIFEST_FILE};

struct Inner {
    out: PathBuf,
    taxonomy: Taxonomy,
    /// Serializes annotation writes.
    writes: tokio::sync::Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(out: impl Into<PathBuf>, taxonomy: Taxonomy) -> Self {
        Self(Arc::new(Inner {
            out: out.into(),
            taxonomy,
            writes: tokio::sync::Mutex::new(()),
        }))
    }

    fn annotations_dir(&self) -> PathBuf {
        self.0.out.join(ANNOTATIONS_DIR)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/runs", get(list_runs_handler))
        .route("/api/runs/{id}/pairs", get(list_pairs))
        .route("/api/runs/{id}/pairs/{pair}/cells", get(pair_cells))
        .route("/api/runs/{id}/pairs/{pair}/agreement", get(pair_agreement))
        .route("/api/annotations", post(post_annotation))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    aspect: Option<AspectId>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            aspect: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(a) = self.aspect {
            body["aspect"] = json!(a);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub methods: Vec<String>,
    pub pairs: Vec<String>,
    pub mode: String,
    pub pack: String,
    pub missing_cells: usize,
    pub failures: usize,
    pub has_tensor: bool,
    pub started_at: String,
    pub finished_at: String,
}

fn load_manifest(state: &AppState, id: &str) -> Result<(PathBuf, RunManifest), ApiError> {
    if crate::run::check_run_id(id).is_err() {
        return Err(ApiError::not_found(format!("no run {id:?}")));
    }
    let dir = state.0.out.join(id);
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(ApiError::not_found(format!("no run {id:?}")));
    }
    let manifest = RunManifest::read_from(&path).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((dir, manifest))
}

fn load_run_tensor(dir: &Path) -> Option<ScoreTensor> {
    let file = std::fs::File::open(dir.join(TENSORS_DIR).join(TENSOR_FILE)).ok()?;
    ScoreTensor::read_csv(file).ok()
}

async fn list_runs_handler(State(state): State<AppState>) -> ApiResult<Vec<RunSummary>> {
    let mut out = Vec::new();
    for (id, dir) in list_runs(&state.0.out) {
        let Ok(m) = RunManifest::read_from(&dir.join(MANIFEST_FILE)) else { continue };
        out.push(RunSummary {
            run_id: id,
            methods: m.models.iter().map(|x| x.method_key.clone()).collect(),
            pairs: m.pairs,
            mode: m.mode,
            pack: m.pack,
            missing_cells: m.missing_cells,
            failures: m.failures.len(),
            has_tensor: dir.join(TENSORS_DIR).join(TENSOR_FILE).is_file(),
            started_at: m.started_at,
            finished_at: m.finished_at,
        });
    }
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair_id: String,
    /// Methods with a stored crosswalk result for this pair.
    pub methods: Vec<String>,
    pub annotators: Vec<String>,
}

async fn list_pairs(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Vec<PairSummary>> {
    let (dir, manifest) = load_manifest(&state, &id)?;
    let records = annotations::read_dir(&state.annotations_dir()).map_err(ApiError::internal)?;
    let mut out = Vec::new();
    for pair_id in &manifest.pairs {
        let Ok(pair) = pair_id.parse::<DocumentPair>() else { continue };
        let methods = manifest
            .models
            .iter()
            .map(|m| m.method_key.clone())
            .filter(|k| dir.join(DIFFS_DIR).join(CrosswalkResult::report_file_name(&pair, k)).is_file())
            .collect();
        let annotators = records
            .iter()
            .filter(|r| &r.pair_id == pair_id)
            .map(|r| r.annotator_id.clone())
            .collect();
        out.push(PairSummary {
            pair_id: pair_id.clone(),
            methods,
            annotators,
        });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct CellsQuery {
    pub method: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct CellsResponse {
    pub run_id: String,
    pub pair_id: String,
    /// Method whose text fields are shown in `cells`.
    pub method_key: String,
    pub cells: DiffTable,
    pub failed_cells: BTreeMap<AspectId, String>,
    /// Aspect → method → score; `null` for a missing cell.
    pub scores: BTreeMap<AspectId, BTreeMap<String, Option<u8>>>,
}

fn find_pair(manifest: &RunManifest, pair_id: &str) -> Result<DocumentPair, ApiError> {
    if !manifest.pairs.iter().any(|p| p == pair_id) {
        return Err(ApiError::not_found(format!("run {} has no pair {pair_id:?}", manifest.run_id)));
    }
    pair_id
        .parse()
        .map_err(|e: crosswalk_core::corpus::CorpusError| ApiError::not_found(e.to_string()))
}

async fn pair_cells(
    State(state): State<AppState>,
    UrlPath((id, pair_id)): UrlPath<(String, String)>,
    Query(q): Query<CellsQuery>,
) -> ApiResult<CellsResponse> {
    let (dir, manifest) = load_manifest(&state, &id)?;
    let pair = find_pair(&manifest, &pair_id)?;
    let mut results: Vec<(String, CrosswalkResult)> = Vec::new();
    for m in &manifest.models {
        let path = dir.join(DIFFS_DIR).join(CrosswalkResult::report_file_name(&pair, &m.method_key));
        if let Ok(r) = CrosswalkResult::read_from(&path) {
            results.push((m.method_key.clone(), r));
        }
    }
    let shown = match &q.method {
        Some(k) => results
            .iter()
            .find(|(key, _)| key == k)
            .ok_or_else(|| ApiError::not_found(format!("no result for method {k:?} on pair {pair_id}")))?,
        None => results
            .first()
            .ok_or_else(|| ApiError::not_found(format!("no crosswalk results for pair {pair_id}")))?,
    };
    let scores = state
        .0
        .taxonomy
        .ids()
        .map(|aspect| {
            let per_method = manifest
                .models
                .iter()
                .map(|m| {
                    let s = results
                        .iter()
                        .find(|(k, _)| *k == m.method_key)
                        .and_then(|(_, r)| r.score(aspect));
                    (m.method_key.clone(), s)
                })
                .collect();
            (aspect, per_method)
        })
        .collect();
    Ok(Json(CellsResponse {
        run_id: id,
        pair_id,
        method_key: shown.0.clone(),
        cells: shown.1.cells.clone(),
        failed_cells: shown.1.failed_cells.clone(),
        scores,
    }))
}

fn agreement_error(e: AgreementError) -> ApiError {
    let aspect = match &e {
        AgreementError::MissingAspect(a) | AgreementError::UnknownAspect(a) => Some(*a),
        AgreementError::ScoreOutOfRange { aspect, .. } => Some(*aspect),
        _ => None,
    };
    ApiError {
        aspect,
        ..ApiError::invalid(e.to_string())
    }
}

async fn post_annotation(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<AnnotationRecord>), ApiError> {
    let record: AnnotationRecord = serde_json::from_slice(&body)
        .map_err(|e| ApiError::invalid(format!("annotation does not parse: {e}")))?;
    record.validate(&state.0.taxonomy).map_err(agreement_error)?;
    if record.pair_id.parse::<DocumentPair>().is_err() || !annotations::is_safe_id(&record.pair_id) {
        return Err(ApiError::invalid(format!("pair id {:?} is not of the form A-B", record.pair_id)));
    }
    if !annotations::is_safe_id(&record.annotator_id) {
        return Err(ApiError::invalid(format!(
            "annotator id {:?} may only use ASCII letters, digits, '-' and '_'",
            record.annotator_id
        )));
    }
    let _guard = state.0.writes.lock().await;
    annotations::write(&state.annotations_dir(), &record).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn pair_agreement(
    State(state): State<AppState>,
    UrlPath((id, pair_id)): UrlPath<(String, String)>,
) -> ApiResult<AgreementSummary> {
    let (dir, manifest) = load_manifest(&state, &id)?;
    find_pair(&manifest, &pair_id)?;
    let records: Vec<AnnotationRecord> = {
        let _guard = state.0.writes.lock().await;
        annotations::read_dir(&state.annotations_dir()).map_err(ApiError::internal)?
    }
    .into_iter()
    .filter(|r| r.pair_id == pair_id)
    .collect();
    if records.is_empty() {
        return Err(ApiError::not_found(format!("no annotations for pair {pair_id}")));
    }
    let summary = annotator_stats(&records).map_err(agreement_error)?;
    Ok(Json(match load_run_tensor(&dir) {
        Some(t) => summary.with_model_mad(&records, &t),
        None => summary,
    }))
}

/// Binds `127.0.0.1:port` and serves until the process is stopped.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("review API listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
