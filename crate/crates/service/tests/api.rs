use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use storyweave::config::EngineConfigFile;
use storyweave::fact::META_INCREASING;
use storyweave::{Aggregation, DataFact, FactType, Filter, Measure, Meta, Subspace};
use storyweave_service::{router, AppState};
use tempfile::TempDir;
use tower::ServiceExt;

const TOY: &str = include_str!("../../core/tests/fixtures/toy_sales.csv");
const OLYMPICS: &str = include_str!("../../core/tests/fixtures/winter_olympics.csv");

fn state_at(root: &std::path::Path, body_limit: usize) -> AppState {
    let mut config = EngineConfigFile::default();
    config.server.persistence_root = root.to_path_buf();
    config.server.body_limit = body_limit;
    AppState::new(config).unwrap()
}

fn app(root: &std::path::Path) -> Router {
    router(state_at(root, 1 << 20))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, body)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    send(app, req).await
}

async fn upload(app: &Router, csv: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, "text/csv")
        .body(Body::from(csv.to_string()))
        .unwrap();
    send(app, req).await
}

async fn dataset_id(app: &Router, csv: &str) -> String {
    let (status, body) = upload(app, csv).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["datasetId"].as_str().unwrap().to_string()
}

fn sales_trend() -> DataFact {
    DataFact::new(FactType::Trend, Measure::of("Sales", Aggregation::Sum))
        .with_breakdown("Year")
        .with_meta(Meta::extra(META_INCREASING))
}

fn region_rank() -> DataFact {
    DataFact::new(FactType::Rank, Measure::of("Profit", Aggregation::Sum))
        .with_subspace(Subspace::new(vec![Filter::new("Product", "A")]))
        .with_breakdown("Region")
}

fn keyframe(f: &DataFact) -> Value {
    json!({"provenance": "keyframe", "fact": f})
}

/// A story over the toy table holding `pieces`; returns its id and version.
async fn story_with(app: &Router, pieces: Value) -> (String, u64) {
    let ds = dataset_id(app, TOY).await;
    let (status, rec) = call(app, Method::POST, "/stories", Some(json!({"datasetId": ds, "title": "Sales"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{rec}");
    let id = rec["story"]["id"].as_str().unwrap().to_string();
    let (status, rec) = call(app, Method::PUT, &format!("/stories/{id}/pieces"), Some(json!({"pieces": pieces}))).await;
    assert_eq!(status, StatusCode::OK, "{rec}");
    (id, rec["version"].as_u64().unwrap())
}

fn provenances(rec: &Value) -> Vec<String> {
    rec["story"]["pieces"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["provenance"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn upload_returns_schema() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let (status, body) = upload(&app, TOY).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["rowCount"], 24);
    let names: Vec<&str> = body["schema"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["Year", "Region", "Product", "Sales", "Profit"]);
    assert_eq!(body["schema"][0]["kind"], "temporal");

    let (status, again) = call(&app, Method::GET, &format!("/datasets/{}", body["datasetId"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, body);

    let (status, body) = upload(&app, OLYMPICS).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["rowCount"], 118);
    assert_eq!(body["schema"].as_array().unwrap().len(), 6);
}

#[tokio::test]
async fn upload_multipart() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let boundary = "XbOuNdArY";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"sales.csv\"\r\n\
         Content-Type: text/csv\r\n\r\n{TOY}\r\n--{boundary}--\r\n"
    );
    let req = Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, body) = send(&app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["rowCount"], 24);
}

#[tokio::test]
async fn upload_errors() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let (status, body) = upload(&app, "Year,Region,Sales\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "EmptyDataset");

    let small = router(state_at(dir.path(), 256));
    let (status, _) = upload(&small, TOY).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let (status, body) = call(&app, Method::GET, "/datasets/ffff", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "NotFound");
}

#[tokio::test]
async fn story_round_trip_and_versions() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let pieces = json!([keyframe(&sales_trend()), {"provenance": "empty-slot"}, keyframe(&region_rank())]);
    let (id, version) = story_with(&app, pieces.clone()).await;
    assert_eq!(version, 2);

    let (status, rec) = call(&app, Method::GET, &format!("/stories/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["story"]["pieces"], pieces);
    assert_eq!(rec["version"], 2);

    let (status, _) = call(&app, Method::GET, "/stories/story-99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(&app, Method::POST, "/stories", Some(json!({"datasetId": "nope", "title": "x"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_fact_is_rejected_with_rule() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let (id, _) = story_with(&app, json!([])).await;
    let bogus = DataFact::new(FactType::Rank, Measure::of("Nope", Aggregation::Sum)).with_breakdown("Region");
    let (status, body) = call(
        &app,
        Method::PUT,
        &format!("/stories/{id}/pieces"),
        Some(json!({"pieces": [keyframe(&sales_trend()), keyframe(&bogus)]})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "ValidationError");
    assert_eq!(body["pieceIndex"], 1);
    assert_eq!(body["report"]["violations"][0]["rule"], "unknown-field");

    let (status, body) = call(
        &app,
        Method::PUT,
        &format!("/stories/{id}/pieces"),
        Some(json!({"pieces": [{"provenance": "keyframe"}]})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "MalformedPiece");
}

#[tokio::test]
async fn stale_version_put_conflicts() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let (id, version) = story_with(&app, json!([keyframe(&sales_trend())])).await;
    let uri = format!("/stories/{id}/pieces");
    let (status, rec) = call(&app, Method::PUT, &uri, Some(json!({"pieces": [], "version": version}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["version"], version + 1);
    // a second writer still holding the old version loses
    let (status, body) = call(&app, Method::PUT, &uri, Some(json!({"pieces": [], "version": version}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "VersionConflict");
}

#[tokio::test]
async fn interpolate_inserts_and_replaces() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let pieces = json!([keyframe(&sales_trend()), {"provenance": "empty-slot"}, keyframe(&region_rank())]);
    let (id, version) = story_with(&app, pieces).await;
    let uri = format!("/stories/{id}/interpolate");

    let (status, rec) = call(&app, Method::POST, &uri, Some(json!({"afterPieceIndex": 0, "N": 3}))).await;
    assert_eq!(status, StatusCode::OK, "{rec}");
    assert_eq!(provenances(&rec), ["keyframe", "interpolated", "interpolated", "interpolated", "keyframe"]);
    assert_eq!(rec["version"], version + 1);
    assert!(rec["warnings"].is_array());
    let first: Vec<Value> = rec["story"]["pieces"].as_array().unwrap().clone();
    for p in &first[1..4] {
        assert!(!p["caption"].as_str().unwrap().is_empty());
    }

    // edit the second keyframe, then run again: the old pieces are replaced
    let mut edited = first.clone();
    let new_target = DataFact::new(FactType::Rank, Measure::of("Sales", Aggregation::Sum))
        .with_subspace(Subspace::new(vec![Filter::new("Product", "B")]))
        .with_breakdown("Region");
    edited[4] = keyframe(&new_target);
    let (status, _) = call(&app, Method::PUT, &format!("/stories/{id}/pieces"), Some(json!({"pieces": edited}))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, rec) = call(&app, Method::POST, &uri, Some(json!({"afterPieceIndex": 0, "configOverrides": {"N": 2}}))).await;
    assert_eq!(status, StatusCode::OK, "{rec}");
    assert_eq!(provenances(&rec), ["keyframe", "interpolated", "interpolated", "keyframe"]);
    assert_eq!(rec["story"]["pieces"][3]["fact"], json!(new_target));

    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"afterPieceIndex": 3}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "KeyframeError");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"afterPieceIndex": 0, "N": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "ConfigError");
}

#[tokio::test]
async fn identical_keyframes_are_unprocessable() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let (id, _) = story_with(&app, json!([keyframe(&sales_trend()), keyframe(&sales_trend())])).await;
    let (status, body) =
        call(&app, Method::POST, &format!("/stories/{id}/interpolate"), Some(json!({"afterPieceIndex": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "DegenerateKeyframes");
}

#[tokio::test]
async fn one_interpolation_per_story() {
    let dir = TempDir::new().unwrap();
    let state = state_at(dir.path(), 1 << 20);
    let app = router(state.clone());
    let (id, _) = story_with(&app, json!([keyframe(&sales_trend()), keyframe(&region_rank())])).await;
    let uri = format!("/stories/{id}/interpolate");
    let guard = state.store.begin_interpolation(&id).unwrap();
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"afterPieceIndex": 0}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "InterpolationRunning");
    drop(guard);
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"afterPieceIndex": 0}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn validate_and_preview() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let ds = dataset_id(&app, OLYMPICS).await;
    let fact = DataFact::new(FactType::Distribution, Measure::of("Gold Medal", Aggregation::Sum))
        .with_subspace(Subspace::new(vec![Filter::new("Sex", "Female")]))
        .with_breakdown("Country")
        .with_focus(["China"]);
    let (status, report) = call(&app, Method::POST, "/facts/validate", Some(json!({"datasetId": ds, "fact": fact}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["valid"], true);

    let (status, view) = call(&app, Method::POST, "/facts/preview", Some(json!({"datasetId": ds, "fact": fact}))).await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["highlighted"], json!(["China"]));
    assert!(view["groups"].as_array().unwrap().iter().any(|g| g["label"] == "China"));
    assert!(view["caption"].as_str().unwrap().contains("China"));

    let bad = fact.clone().with_focus(["Atlantis"]);
    let (status, report) = call(&app, Method::POST, "/facts/validate", Some(json!({"datasetId": ds, "fact": bad}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["valid"], false);
    let (status, body) = call(&app, Method::POST, "/facts/preview", Some(json!({"datasetId": ds, "fact": bad}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["report"]["violations"].as_array().unwrap().iter().any(|v| v["rule"] == "focus-not-in-groups"));

    let (status, body) = call(&app, Method::POST, "/facts/validate", Some(json!({"datasetId": ds, "fact": {"type": "value"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "ParseError");
}

#[tokio::test]
async fn recommendations_are_sorted_and_bounded() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let ds = dataset_id(&app, TOY).await;
    let (status, recs) = call(&app, Method::GET, &format!("/datasets/{ds}/recommendations?k=5"), None).await;
    assert_eq!(status, StatusCode::OK);
    let recs = recs.as_array().unwrap();
    assert!(!recs.is_empty() && recs.len() <= 5);
    let scores: Vec<f64> = recs.iter().map(|r| r["significance"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let (status, recs) =
        call(&app, Method::GET, &format!("/datasets/{ds}/recommendations?k=3&filters=Region=North"), None).await;
    assert_eq!(status, StatusCode::OK);
    for r in recs.as_array().unwrap() {
        assert!(r["fact"]["subspace"].to_string().contains("North"), "{r}");
    }
    let (status, _) = call(&app, Method::GET, &format!("/datasets/{ds}/recommendations?filters=Planet=Mars"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn alternatives_need_two_keyframe_neighbors() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let pieces = json!([keyframe(&sales_trend()), {"provenance": "empty-slot"}, keyframe(&region_rank())]);
    let (id, _) = story_with(&app, pieces).await;
    let uri = format!("/stories/{id}/alternatives");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"pieceIndex": 0}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "MissingNeighbors");

    let (status, alts) = call(&app, Method::POST, &uri, Some(json!({"pieceIndex": 1}))).await;
    assert_eq!(status, StatusCode::OK, "{alts}");
    let alts = alts.as_array().unwrap();
    assert!(!alts.is_empty());
    let scores: Vec<f64> = alts.iter().map(|r| r["significance"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[tokio::test]
async fn export_forms_and_provenance() {
    let dir = TempDir::new().unwrap();
    let app = app(dir.path());
    let (id, _) = story_with(&app, json!([keyframe(&sales_trend()), keyframe(&region_rank())])).await;
    let (status, _) =
        call(&app, Method::POST, &format!("/stories/{id}/interpolate"), Some(json!({"afterPieceIndex": 0}))).await;
    assert_eq!(status, StatusCode::OK);

    let (status, line) = call(&app, Method::GET, &format!("/stories/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(line["form"], "storyline");
    let (status, sheet) = call(&app, Method::GET, &format!("/stories/{id}/export?form=factsheet"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sheet["form"], "factsheet");
    assert_eq!(sheet["pieces"], line["pieces"]);

    let pieces = sheet["pieces"].as_array().unwrap();
    assert_eq!(pieces.len(), 5);
    for p in &pieces[1..4] {
        assert_eq!(p["provenance"], "interpolated");
        assert!(p["view"]["groups"].is_array());
        assert!(p["caption"].is_string());
    }

    let (status, _) = call(&app, Method::GET, &format!("/stories/{id}/export?form=poster"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::GET, "/stories/story-42/export", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = TempDir::new().unwrap();
    let (id, story, doc) = {
        let app = app(dir.path());
        let (id, _) = story_with(&app, json!([keyframe(&sales_trend()), keyframe(&region_rank())])).await;
        let (status, _) =
            call(&app, Method::POST, &format!("/stories/{id}/interpolate"), Some(json!({"afterPieceIndex": 0}))).await;
        assert_eq!(status, StatusCode::OK);
        let (_, story) = call(&app, Method::GET, &format!("/stories/{id}"), None).await;
        let (_, doc) = call(&app, Method::GET, &format!("/stories/{id}/export?form=scrollup"), None).await;
        (id, story, doc)
    };
    let app = app(dir.path());
    let (status, again) = call(&app, Method::GET, &format!("/stories/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, story);
    let (_, doc_again) = call(&app, Method::GET, &format!("/stories/{id}/export?form=scrollup"), None).await;
    assert_eq!(doc_again, doc);
    // new stories do not reuse ids
    let ds = story["story"]["datasetId"].clone();
    let (_, rec) = call(&app, Method::POST, "/stories", Some(json!({"datasetId": ds, "title": "second"}))).await;
    assert_ne!(rec["story"]["id"], json!(id));
}
