use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use storyweave::caption::generate_caption;
use storyweave::data::{recommend_facts, Dataset, FactEngine, FactView, FieldSchema, ScoredFact};
use storyweave::interp::{interpolate_with, recommend_alternatives_with, InterpolationConfig};
use storyweave::story::{StoryDocument, StoryError, StoryForm, StoryPiece};
use storyweave::{DataFact, Filter, InterpolationError, Subspace};

use crate::error::ApiError;
use crate::store::{StoreError, StoryRecord};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(state: AppState) -> Router {
    let limit = state.config.server.body_limit;
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/recommendations", get(recommendations))
        .route("/stories", post(create_story))
        .route("/stories/{id}", get(get_story))
        .route("/stories/{id}/pieces", put(put_pieces))
        .route("/stories/{id}/interpolate", post(interpolate))
        .route("/stories/{id}/alternatives", post(alternatives))
        .route("/stories/{id}/export", get(export))
        .route("/facts/validate", post(validate))
        .route("/facts/preview", post(preview))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(what, id) => ApiError::not_found(what, &id),
            StoreError::VersionConflict { .. } => ApiError::conflict("VersionConflict", e.to_string()),
            StoreError::Data(d) => ApiError::upload(d),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => ApiError::internal(e.to_string()),
        }
    }
}

/// Run CPU-bound engine work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DatasetInfo {
    dataset_id: String,
    schema: Vec<FieldSchema>,
    row_count: usize,
}

impl DatasetInfo {
    fn of(ds: &Dataset) -> Self {
        DatasetInfo {
            dataset_id: ds.id().to_string(),
            schema: ds.schema().to_vec(),
            row_count: ds.row_count(),
        }
    }
}

fn too_large_or(status: StatusCode, class: &'static str, message: String) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "PayloadTooLarge", message)
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, class, message)
    }
}

/// Accepts `multipart/form-data` (first part is the CSV) or a raw CSV body.
async fn upload_dataset(State(state): State<AppState>, req: Request) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let bytes = if is_multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| too_large_or(e.status(), "FormatError", e.body_text()))?;
        let field = form
            .next_field()
            .await
            .map_err(|e| too_large_or(e.status(), "FormatError", e.body_text()))?
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "FormatError", "multipart body has no parts"))?;
        field
            .bytes()
            .await
            .map_err(|e| too_large_or(e.status(), "FormatError", e.body_text()))?
    } else {
        Bytes::from_request(req, &())
            .await
            .map_err(|e| too_large_or(e.status(), "FormatError", e.body_text()))?
    };
    let store = Arc::clone(&state.store);
    let ds = blocking(move || store.put_dataset(&bytes).map_err(ApiError::from)).await?;
    Ok((StatusCode::CREATED, Json(DatasetInfo::of(&ds))))
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetInfo>> {
    let ds = state.store.dataset(&id)?;
    Ok(Json(DatasetInfo::of(&ds)))
}

#[derive(Deserialize)]
struct RecommendQuery {
    k: Option<usize>,
    /// `Field=Value;Other=Value`
    filters: Option<String>,
}

fn parse_filters(ds: &Dataset, text: &str) -> ApiResult<Subspace> {
    let mut filters = Vec::new();
    for part in text.split(';').filter(|p| !p.is_empty()) {
        let (field, value) = part.split_once('=').ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "ParseError", format!("filter `{part}` is not Field=Value"))
        })?;
        if ds.field(field).is_none() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "SchemaError",
                format!("unknown field `{field}`"),
            ));
        }
        filters.push(Filter::new(field, value));
    }
    Ok(Subspace::new(filters))
}

async fn recommendations(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RecommendQuery>,
) -> ApiResult<Json<Vec<ScoredFact>>> {
    let ds = state.store.dataset(&id)?;
    let filters = match &q.filters {
        Some(text) => Some(parse_filters(&ds, text)?),
        None => None,
    };
    let k = q.k.unwrap_or(10);
    let data = state.config.data.clone();
    let out = blocking(move || Ok(recommend_facts(&ds, k, filters.as_ref(), &data))).await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateStory {
    dataset_id: String,
    title: String,
}

async fn create_story(
    State(state): State<AppState>,
    body: Result<Json<CreateStory>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<StoryRecord>)> {
    let Json(body) = body?;
    state.store.dataset(&body.dataset_id)?;
    let record = state.store.create_story(body.title, body.dataset_id)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_story(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StoryRecord>> {
    Ok(Json(state.store.story(&id)?))
}

/// Validate every fact of `pieces` against the dataset.
fn check_pieces(ds: &Dataset, pieces: &[StoryPiece], data: &storyweave::data::DataConfig) -> ApiResult<()> {
    let engine = FactEngine::new(ds, data.clone());
    for (i, piece) in pieces.iter().enumerate() {
        if let Some(fact) = &piece.fact {
            let report = engine.validate(fact);
            if !report.valid {
                return Err(ApiError::invalid_fact(report, Some(i)));
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PutPieces {
    pieces: Vec<StoryPiece>,
    /// Version the client last saw; the write is refused if it is stale.
    version: Option<u64>,
}

async fn put_pieces(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PutPieces>, JsonRejection>,
) -> ApiResult<Json<StoryRecord>> {
    let Json(body) = body?;
    let record = state.store.story(&id)?;
    let mut draft = record.story.clone();
    draft.pieces = body.pieces;
    draft.check_shape()?;
    let ds = state.store.dataset(&record.story.dataset_id)?;
    let data = state.config.data.clone();
    let pieces = draft.pieces;
    let pieces = blocking(move || check_pieces(&ds, &pieces, &data).map(|_| pieces)).await?;
    let updated = state.store.update(&id, body.version, |s| {
        s.pieces = pieces;
        Ok::<_, StoryError>(())
    })??;
    Ok(Json(updated))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct InterpolateRequest {
    after_piece_index: usize,
    #[serde(rename = "N", alias = "n")]
    n: Option<usize>,
    config_overrides: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct InterpolateResponse {
    #[serde(flatten)]
    record: StoryRecord,
    warnings: Vec<String>,
}

/// Per-request interpolation settings: the configured defaults, then the
/// overrides, then `N`.
fn merged_config(base: &InterpolationConfig, req: &InterpolateRequest) -> ApiResult<InterpolationConfig> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    let obj = value.as_object_mut().expect("config is an object");
    if let Some(over) = &req.config_overrides {
        for (k, v) in over {
            let key = if k == "n" { "N".to_string() } else { k.clone() };
            obj.insert(key, v.clone());
        }
    }
    if let Some(n) = req.n {
        obj.insert("N".into(), n.into());
    }
    let cfg: InterpolationConfig = serde_json::from_value(value)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ConfigError", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

async fn interpolate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<InterpolateRequest>, JsonRejection>,
) -> ApiResult<Json<InterpolateResponse>> {
    let Json(req) = body?;
    let snapshot = state.store.story(&id)?;
    let after = req.after_piece_index;
    let next = snapshot.story.next_keyframe(after)?;
    let config = merged_config(&state.config.interpolation, &req)?;
    let _guard = state.store.begin_interpolation(&id).ok_or_else(|| {
        ApiError::conflict("InterpolationRunning", format!("an interpolation for `{id}` is already running"))
    })?;

    let fact_at = |i: usize| snapshot.story.pieces[i].fact.clone().expect("keyframes carry facts");
    let (fs, ft) = (fact_at(after), fact_at(next));
    let ds = state.store.dataset(&snapshot.story.dataset_id)?;
    let data = state.config.data.clone();
    let embedder = Arc::clone(&state.embedder);
    let (pieces, warnings) = blocking(move || {
        let engine = FactEngine::new(&ds, data);
        let result = interpolate_with(&engine, &fs, &ft, &config, embedder.as_ref())?;
        let pieces = result
            .facts
            .iter()
            .map(|f| {
                let view = engine.evaluate(f).map_err(InterpolationError::from)?;
                Ok(StoryPiece::interpolated(f.clone(), generate_caption(f, &view)))
            })
            .collect::<ApiResult<Vec<_>>>()?;
        Ok((pieces, result.warnings))
    })
    .await?;

    let record = state.store.update(&id, Some(snapshot.version), |s| {
        s.splice_between(after, pieces).map(|_| ())
    })??;
    Ok(Json(InterpolateResponse { record, warnings }))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct AlternativesRequest {
    piece_index: usize,
}

async fn alternatives(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AlternativesRequest>, JsonRejection>,
) -> ApiResult<Json<Vec<ScoredFact>>> {
    let Json(req) = body?;
    let record = state.store.story(&id)?;
    let (prev, next) = record.story.keyframe_neighbors(req.piece_index)?;
    let fact_at = |i: usize| record.story.pieces[i].fact.clone().expect("keyframes carry facts");
    let (fp, fnext) = (fact_at(prev), fact_at(next));
    let ds = state.store.dataset(&record.story.dataset_id)?;
    let data = state.config.data.clone();
    let config = state.config.interpolation.clone();
    let embedder = Arc::clone(&state.embedder);
    let out = blocking(move || {
        let engine = FactEngine::new(&ds, data);
        Ok(recommend_alternatives_with(&engine, &fp, &fnext, &config, embedder.as_ref())?)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct ExportQuery {
    form: Option<String>,
}

async fn export(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Json<StoryDocument>> {
    let form = match q.form.as_deref() {
        None => StoryForm::default(),
        Some(s) => s
            .parse::<StoryForm>()
            .map_err(|m| ApiError::new(StatusCode::BAD_REQUEST, "ParseError", m))?,
    };
    let record = state.store.story(&id)?;
    let ds = state.store.dataset(&record.story.dataset_id)?;
    let data = state.config.data.clone();
    let doc = blocking(move || {
        let engine = FactEngine::new(&ds, data);
        Ok(StoryDocument::build(&record.story, &engine, form))
    })
    .await?;
    Ok(Json(doc))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct FactRequest {
    dataset_id: String,
    fact: DataFact,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Preview {
    #[serde(flatten)]
    view: FactView,
    caption: String,
}

async fn validate(
    State(state): State<AppState>,
    body: Result<Json<FactRequest>, JsonRejection>,
) -> ApiResult<Json<storyweave::data::ValidityReport>> {
    let Json(req) = body?;
    let ds = state.store.dataset(&req.dataset_id)?;
    let data = state.config.data.clone();
    let report = blocking(move || Ok(FactEngine::new(&ds, data).validate(&req.fact))).await?;
    Ok(Json(report))
}

async fn preview(State(state): State<AppState>, body: Result<Json<FactRequest>, JsonRejection>) -> ApiResult<Json<Preview>> {
    let Json(req) = body?;
    let ds = state.store.dataset(&req.dataset_id)?;
    let data = state.config.data.clone();
    let out = blocking(move || {
        let engine = FactEngine::new(&ds, data);
        let report = engine.validate(&req.fact);
        if !report.valid {
            return Err(ApiError::invalid_fact(report, None));
        }
        let view = engine.evaluate(&req.fact).map_err(InterpolationError::from)?;
        let caption = generate_caption(&req.fact, &view);
        Ok(Preview { view, caption })
    })
    .await?;
    Ok(Json(out))
}
