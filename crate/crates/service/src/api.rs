//! HTTP+JSON surface of the service.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use yn_crowd::io::Payload;
use yn_crowd::model::{ClassInfo, LabelerId};

use crate::error::Error;
use crate::export::export;
use crate::state::{Ack, CampaignSpec, Mode, Phase};
use crate::store::{Next, Store};

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = match &self {
            Error::Validation(_) => StatusCode::BAD_REQUEST,
            Error::Conflict(_) | Error::Rejected(_) | Error::Closed => StatusCode::CONFLICT,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            Error::Corrupt(_) | Error::Io(_) | Error::Data(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, Error>;

/// Routes of the service; `static_dir`, when given, is served for every
/// other path (the labeling UI bundle).
pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/campaigns", post(create_campaign).get(list_campaigns))
        .route("/campaigns/{c}/labelers", post(register_labeler))
        .route("/campaigns/{c}/labelers/{l}/next", get(next_question))
        .route("/campaigns/{c}/labelers/{l}/responses", post(record_response))
        .route("/campaigns/{c}/progress", get(progress))
        .route("/campaigns/{c}/export", get(export_campaign))
        .route("/campaigns/{c}/close", post(close_campaign))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn create_campaign(State(store): State<Arc<Store>>, Json(spec): Json<CampaignSpec>) -> ApiResult<Response> {
    let id = store.create(spec)?;
    Ok((StatusCode::CREATED, Json(json!({ "campaign_id": id }))).into_response())
}

async fn list_campaigns(State(store): State<Arc<Store>>) -> Json<serde_json::Value> {
    Json(json!({ "campaigns": store.campaign_ids() }))
}

#[derive(Debug, Deserialize)]
struct Registration {
    labeler_id: String,
}

async fn register_labeler(
    State(store): State<Arc<Store>>,
    Path(c): Path<String>,
    Json(body): Json<Registration>,
) -> ApiResult<Response> {
    let token = store.register(&c, &body.labeler_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "labeler_id": body.labeler_id, "token": token })),
    )
        .into_response())
}

fn bearer(headers: &HeaderMap) -> ApiResult<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| Error::Unauthorized("missing bearer token".into()))
}

/// A question as shown to the labeler.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QuestionView {
    pub status: String,
    pub question_token: String,
    pub object_id: String,
    pub payload: Payload,
    pub mode: Mode,
    /// Asked class for yes/no questions.
    pub class_id: Option<String>,
    pub class_name: Option<String>,
    /// Choices for full questions.
    pub classes: Vec<ClassInfo>,
    pub answered: usize,
    pub budgeted: usize,
}

async fn next_question(
    State(store): State<Arc<Store>>,
    Path((c, l)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Json<serde_json::Value>> {
    store.authenticate(&c, &l, bearer(&headers)?)?;
    let next = store.next_question(&c, &l)?;
    let view = store.read(&c, |s| {
        let (answered, budgeted) = s.progress(&LabelerId::from(l.as_str()));
        match next {
            Next::Done => json!({ "status": "done", "answered": answered, "budgeted": budgeted }),
            Next::Question(q) => {
                let payload = s
                    .spec
                    .objects
                    .iter()
                    .find(|o| o.id == q.object_id)
                    .map_or(Payload::None, |o| o.payload.clone());
                let view = QuestionView {
                    status: "question".into(),
                    question_token: q.question_token,
                    object_id: q.object_id.to_string(),
                    payload,
                    mode: q.mode,
                    class_id: q.class.map(|k| s.classes.id(k).to_string()),
                    class_name: q.class.map(|k| s.classes.name(k).to_string()),
                    classes: s.classes.classes().to_vec(),
                    answered,
                    budgeted,
                };
                serde_json::to_value(view).expect("question view serializes")
            }
        }
    })?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct ResponseBody {
    question_token: String,
    answer: String,
    #[serde(default)]
    client_latency_ms: Option<u64>,
}

async fn record_response(
    State(store): State<Arc<Store>>,
    Path((c, l)): Path<(String, String)>,
    headers: HeaderMap,
    Json(body): Json<ResponseBody>,
) -> ApiResult<Json<serde_json::Value>> {
    store.authenticate(&c, &l, bearer(&headers)?)?;
    let ack = store.record_response(&c, &l, &body.question_token, &body.answer, body.client_latency_ms)?;
    let status = match ack {
        Ack::Recorded => "recorded",
        Ack::Duplicate => "duplicate",
    };
    Ok(Json(json!({ "status": status })))
}

async fn progress(State(store): State<Arc<Store>>, Path(c): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let body = store.read(&c, |s| {
        let labelers: Vec<serde_json::Value> = s
            .labelers
            .keys()
            .map(|l| {
                let (answered, budgeted) = s.progress(l);
                json!({
                    "labeler_id": l.as_str(),
                    "answered": answered,
                    "budgeted": budgeted,
                    "fraction": answered as f64 / budgeted as f64,
                })
            })
            .collect();
        json!({
            "campaign_id": s.spec.id,
            "phase": match s.phase { Phase::Open => "open", Phase::Closed => "closed" },
            "labelers": labelers,
        })
    })?;
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    file: Option<String>,
}

async fn export_campaign(
    State(store): State<Arc<Store>>,
    Path(c): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let bundle = store.read(&c, export)??;
    match q.file {
        None => Ok(Json(bundle).into_response()),
        Some(name) => {
            let body = bundle
                .files
                .get(&name)
                .cloned()
                .ok_or_else(|| Error::NotFound(format!("no export file {name}")))?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
        }
    }
}

async fn close_campaign(State(store): State<Arc<Store>>, Path(c): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    store.close(&c)?;
    Ok(Json(json!({ "status": "closed" })))
}
