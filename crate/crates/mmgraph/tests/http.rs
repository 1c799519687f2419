//! HTTP contract tests against a small trained snapshot.

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mmgraph::api::SearchResponse;
use mmgraph::formats;
use mmgraph::service::{router, AppState};
use mmgraph::snapshot::{ArtifactPaths, Snapshot};
use mmgraph::synth::TwoClusters;
use mmgraph_core::encoder::Model;
use mmgraph_core::index::EmbeddingTable;
use mmgraph_core::ingest::{build_graph, BuildConfig};
use mmgraph_core::trainer::{embed_all, train, TrainConfig};
use mmgraph_core::MultiModalGraph;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Artifacts {
    graph: MultiModalGraph,
    model: Model<f32>,
    table: EmbeddingTable,
}

fn artifacts() -> &'static Artifacts {
    static CELL: OnceLock<Artifacts> = OnceLock::new();
    CELL.get_or_init(|| {
        let records = TwoClusters {
            per_cluster: 12,
            dim: 32,
            seed: 4,
            ..TwoClusters::default()
        }
        .generate();
        let graph = build_graph(
            &records,
            &BuildConfig {
                d_in: 32,
                ..BuildConfig::default()
            },
        )
        .unwrap();
        let mut cfg = TrainConfig {
            epochs: 2,
            hidden: [16, 16],
            learning_rate: 1e-3,
            rng_seed: 5,
            ..TrainConfig::default()
        };
        cfg.sampler.walks_per_node = 5;
        cfg.sampler.fanouts = [5, 3];
        cfg.sampler.rng_seed = 5;
        let model = train::<f32>(&graph, &cfg).unwrap().model;
        let table = embed_all(&graph, &model).unwrap();
        Artifacts { graph, model, table }
    })
}

fn snapshot() -> Snapshot {
    let a = artifacts();
    Snapshot::new(a.graph.clone(), a.model.clone(), a.table.clone()).unwrap()
}

fn app() -> Router {
    router(Arc::new(AppState::with_snapshot(snapshot())), None)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

async fn post_raw(app: &Router, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

async fn search(app: &Router, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = post_raw(app, "/api/v1/search", &body.to_string()).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn health_is_503_before_load_and_ok_after() {
    let state = Arc::new(AppState::empty());
    let app = router(state.clone(), None);
    let (status, body) = get(&app, "/api/v1/health").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "loading");
    let (status, _) = search(&app, json!({"tags": ["alpha"], "visual_weight": 0.0})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    state.install(snapshot());
    let (status, body) = get(&app, "/api/v1/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["node_count"], artifacts().graph.node_count());
    assert_eq!(body["index_rows"], artifacts().graph.node_count());
}

#[tokio::test]
async fn search_returns_results_and_weights() {
    let app = app();
    let (status, body) = search(
        &app,
        json!({"image_key": "a00", "tags": ["beta"], "visual_weight": 0.25, "k": 4}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let resp: SearchResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.results.len(), 4);
    assert!(resp.results.iter().all(|r| r.key != "a00"));
    assert!(resp.dropped_tags.is_empty());
    assert_eq!(resp.effective_weights.w1, 0.25);
    assert_eq!(resp.effective_weights.w2, 0.75);
    assert!(resp.results.windows(2).all(|w| w[0].score >= w[1].score));
}

#[tokio::test]
async fn visual_weight_out_of_range_is_400() {
    let app = app();
    for w in [1.5, -0.1] {
        let (status, body) = search(&app, json!({"image_key": "a00", "visual_weight": w})).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{w}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let app = app();
    for body in [
        "{",
        r#"{"image_key": "a00"}"#,
        r#"{"image_key": "a00", "visual_weight": 0.5, "colour": 1}"#,
        r#"{"image_key": "a00", "visual_weight": 0.5, "connectivity": "sideways"}"#,
        r#"{"image_key": "a00", "visual_weight": 0.5, "k": 0}"#,
        r#"{"image_key": "a00", "feature": [1.0], "visual_weight": 0.5}"#,
    ] {
        let (status, _) = post_raw(&app, "/api/v1/search", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
}

#[tokio::test]
async fn unknown_image_key_is_404() {
    let app = app();
    let (status, _) = search(&app, json!({"image_key": "nope", "visual_weight": 1.0})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    // Tag nodes are not images.
    let (status, _) = search(&app, json!({"image_key": "tag:alpha", "visual_weight": 1.0})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&app, "/api/v1/tags/predict?image_key=nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&app, "/api/v1/nodes/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unresolvable_or_empty_queries_are_422() {
    let app = app();
    let (status, _) = search(&app, json!({"tags": ["zebra"], "visual_weight": 0.0})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = search(&app, json!({"visual_weight": 0.5})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn unknown_tags_are_reported_as_dropped() {
    let app = app();
    let (status, body) = search(&app, json!({"tags": ["Alpha", "zebra"], "visual_weight": 0.0})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["dropped_tags"], json!(["zebra"]));
}

#[tokio::test]
async fn tags_only_search_returns_only_images() {
    let app = app();
    let (status, body) = search(&app, json!({"tags": ["beta"], "visual_weight": 0.0, "k": 5})).await;
    assert_eq!(status, StatusCode::OK);
    let resp: SearchResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.results.len(), 5);
    assert!(resp.results.iter().all(|r| !r.key.starts_with("tag:")));
}

#[tokio::test]
async fn near_one_weight_matches_pure_visual_ids() {
    let app = app();
    let query = |w: f64| json!({"image_key": "b03", "tags": ["alpha"], "visual_weight": w, "k": 10});
    let (_, one) = search(&app, query(1.0)).await;
    let (_, near) = search(&app, query(0.999999)).await;
    let one: SearchResponse = serde_json::from_value(one).unwrap();
    let near: SearchResponse = serde_json::from_value(near).unwrap();
    // The continuity claim only holds without exact score ties.
    assert!(one.results.windows(2).all(|w| w[0].score != w[1].score));
    let ids = |r: &SearchResponse| r.results.iter().map(|h| h.key.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&one), ids(&near));
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let app = app();
    let body = json!({"image_key": "a02", "tags": ["beta"], "visual_weight": 0.4, "k": 7}).to_string();
    let (s1, b1) = post_raw(&app, "/api/v1/search", &body).await;
    let (s2, b2) = post_raw(&app, "/api/v1/search", &body).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);
    let req = || {
        Request::get("/api/v1/tags/predict?image_key=a02&k=2")
            .body(Body::empty())
            .unwrap()
    };
    assert_eq!(send(&app, req()).await, send(&app, req()).await);
}

#[tokio::test]
async fn predict_respects_k() {
    let app = app();
    let (status, body) = get(&app, "/api/v1/tags/predict?image_key=a01&k=3").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["image_key"], "a01");
    let tags = body["tags"].as_array().unwrap();
    assert!(!tags.is_empty() && tags.len() <= 3);
    assert!(tags.iter().all(|t| !t["key"].as_str().unwrap().starts_with("tag:")));
    let (status, _) = get(&app, "/api/v1/tags/predict?image_key=a01&k=0").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&app, "/api/v1/tags/predict").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn node_lookup_reports_kind_and_tags() {
    let app = app();
    let (status, body) = get(&app, "/api/v1/nodes/tag:alpha").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["kind"], "tag");
    assert!(body.get("tags").is_none());
    assert_eq!(body["degree"], 12);

    let (status, body) = get(&app, "/api/v1/nodes/b05").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["kind"], "image");
    assert_eq!(body["tags"], json!(["beta"]));
}

#[tokio::test]
async fn reload_swaps_in_artifacts_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let paths = ArtifactPaths::in_dir(dir.path());
    let state = Arc::new(AppState::new(paths.clone()));
    let app = router(state.clone(), None);

    // Missing files: reload fails and the service stays unready.
    let (status, _) = send(&app, Request::post("/api/v1/admin/reload").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(get(&app, "/api/v1/health").await.0, StatusCode::SERVICE_UNAVAILABLE);

    let a = artifacts();
    formats::save_graph(&paths.graph, &a.graph).unwrap();
    formats::save_model(&paths.weights, &a.model).unwrap();
    formats::save_embeddings(&paths.embeddings, &a.table).unwrap();
    let (status, body) = send(&app, Request::post("/api/v1/admin/reload").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["node_count"], a.graph.node_count());
    assert_eq!(get(&app, "/api/v1/health").await.0, StatusCode::OK);

    // A corrupt file leaves the loaded snapshot in place.
    let mut bytes = std::fs::read(&paths.embeddings).unwrap();
    bytes[20] ^= 1;
    std::fs::write(&paths.embeddings, bytes).unwrap();
    let (status, _) = send(&app, Request::post("/api/v1/admin/reload").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    let (status, _) = search(&app, json!({"image_key": "a00", "visual_weight": 1.0})).await;
    assert_eq!(status, StatusCode::OK);
}
