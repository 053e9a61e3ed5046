mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{run, Workspace};
use crosswalk_cli::error::EXIT_OK;
use crosswalk_cli::server::{router, AppState};
use crosswalk_core::taxonomy::builtin_taxonomy;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

/// One pair (A-B), two models, already crosswalked.
fn served_run() -> (Workspace, AppState) {
    let ws = Workspace::new(2, 2);
    let out = ws.out("out");
    assert_eq!(run("extract", &ws.common(&out), &[]), EXIT_OK);
    assert_eq!(run("crosswalk", &ws.common(&out), &["--anchor", "A"]), EXIT_OK);
    let state = AppState::new(out, builtin_taxonomy());
    (ws, state)
}

async fn call(state: &AppState, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, Value) {
    call(state, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(state: &AppState, body: Value) -> (StatusCode, Value) {
    let req = Request::post("/api/annotations")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(state, req).await
}

fn annotation(annotator: &str, aspect1: i64, aspects: u32) -> Value {
    let scores: serde_json::Map<String, Value> = (1..=aspects)
        .map(|i| (i.to_string(), json!(if i == 1 { aspect1 } else { 3 })))
        .collect();
    json!({ "annotator_id": annotator, "pair_id": "A-B", "scores": scores })
}

#[tokio::test]
async fn runs_pairs_and_cells() {
    let (_ws, state) = served_run();
    let (s, runs) = get(&state, "/api/runs").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(runs[0]["run_id"], "r1");
    assert_eq!(runs[0]["methods"], json!(["a", "b"]));
    assert_eq!(runs[0]["has_tensor"], true);

    let (s, pairs) = get(&state, "/api/runs/r1/pairs").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(pairs, json!([{ "pair_id": "A-B", "methods": ["a", "b"], "annotators": [] }]));

    let (s, cells) = get(&state, "/api/runs/r1/pairs/A-B/cells").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(cells["method_key"], "a");
    let table = cells["cells"].as_object().unwrap();
    assert_eq!(table.len(), 15);
    assert!(table["7"]["comparison_score_0to5"].is_i64());
    let scores = cells["scores"].as_object().unwrap();
    assert_eq!(scores.len(), 15);
    assert_eq!(scores["7"].as_object().unwrap().len(), 2);
    assert_eq!(scores["7"]["a"], table["7"]["comparison_score_0to5"]);

    let (s, b) = get(&state, "/api/runs/r1/pairs/A-B/cells?method=b").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["method_key"], "b");

    assert_eq!(get(&state, "/api/runs/nope/pairs").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&state, "/api/runs/r1/pairs/A-Z/cells").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&state, "/api/runs/r1/pairs/A-B/cells?method=z").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn single_annotator_has_null_stdev() {
    let (_ws, state) = served_run();
    assert_eq!(get(&state, "/api/runs/r1/pairs/A-B/agreement").await.0, StatusCode::NOT_FOUND);
    let (s, echoed) = post(&state, annotation("h1", 2, 15)).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(echoed["annotator_id"], "h1");

    let (s, summary) = get(&state, "/api/runs/r1/pairs/A-B/agreement").await;
    assert_eq!(s, StatusCode::OK);
    let per_aspect = summary["per_aspect"].as_object().unwrap();
    assert_eq!(per_aspect.len(), 15);
    assert!(per_aspect.values().all(|a| a["stdev"].is_null()));
    assert_eq!(per_aspect["1"]["scores"], json!([2]));
    // One annotator against two models.
    assert_eq!(summary["per_model_mad"].as_array().unwrap().len(), 2);
    let (_, pairs) = get(&state, "/api/runs/r1/pairs").await;
    assert_eq!(pairs[0]["annotators"], json!(["h1"]));
}

#[tokio::test]
async fn incomplete_annotation_names_missing_aspect() {
    let (ws, state) = served_run();
    let (s, body) = post(&state, annotation("h1", 2, 14)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["aspect"], 15);
    assert!(body["error"].as_str().unwrap().contains("aspect 15"));
    assert!(!ws.out("out").join("annotations").exists());

    let (s, _) = post(&state, json!({ "annotator_id": "h1" })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let mut bad = annotation("../h1", 2, 15);
    assert_eq!(post(&state, bad.clone()).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    bad["annotator_id"] = json!("h1");
    bad["scores"]["3"] = json!(6);
    let (s, body) = post(&state, bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["aspect"], 3);
}

#[tokio::test]
async fn three_annotators_reproduce_unit_stdev() {
    let (_ws, state) = served_run();
    for (a, s) in [("h1", 0), ("h2", 1), ("h3", 2)] {
        assert_eq!(post(&state, annotation(a, s, 15)).await.0, StatusCode::CREATED);
    }
    let (_, summary) = get(&state, "/api/runs/r1/pairs/A-B/agreement").await;
    let a1 = &summary["per_aspect"]["1"];
    assert_eq!(a1["scores"], json!([0, 1, 2]));
    assert_eq!(format!("{:.3}", a1["stdev"].as_f64().unwrap()), "1.000");
    assert_eq!(a1["median"], 1.0);
    assert_eq!(summary["per_aspect"]["2"]["stdev"], 0.0);

    // Reposting replaces the earlier record.
    assert_eq!(post(&state, annotation("h3", 4, 15)).await.0, StatusCode::CREATED);
    let (_, summary) = get(&state, "/api/runs/r1/pairs/A-B/agreement").await;
    assert_eq!(summary["annotators"], json!(["h1", "h2", "h3"]));
    assert_eq!(summary["per_aspect"]["1"]["scores"], json!([0, 1, 4]));
}
