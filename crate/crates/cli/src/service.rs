//! JSON-over-HTTP backend for human review of sampled dialogues.
//!
//! Reads are served concurrently; every score write goes through one mutex
//! around the append-only [`ScoreStore`], so the log has a single writer.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use agentdial_core::react::render_trace;
use agentdial_core::review::{HumanScore, ScoreStore, StoreError};
use agentdial_core::validate::{error_rate_report, ValidationReport};
use agentdial_core::ReactDialogue;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

/// Header carrying the shared token when one is configured.
pub const TOKEN_HEADER: &str = "x-api-token";

pub struct AppState {
    dialogues: HashMap<String, ReactDialogue>,
    reports: HashMap<String, ValidationReport>,
    /// Sampled dialogue ids in review order.
    sample: Vec<String>,
    store: Mutex<ScoreStore>,
    token: Option<String>,
}

impl AppState {
    /// Every sampled id must name a loaded dialogue that has a report.
    pub fn new(
        dialogues: Vec<ReactDialogue>,
        reports: Vec<ValidationReport>,
        sample: Vec<String>,
        store: ScoreStore,
        token: Option<String>,
    ) -> Result<Self, String> {
        let mut by_id = HashMap::new();
        for d in dialogues {
            d.check().map_err(|e| format!("dialogue {:?}: {e}", d.id))?;
            if let Some(prev) = by_id.insert(d.id.clone(), d) {
                return Err(format!("duplicate dialogue id {:?}", prev.id));
            }
        }
        let reports: HashMap<String, ValidationReport> =
            reports.into_iter().map(|r| (r.dialogue_id.clone(), r)).collect();
        for id in &sample {
            if !by_id.contains_key(id) {
                return Err(format!("sampled id {id:?} has no dialogue"));
            }
            if !reports.contains_key(id) {
                return Err(format!("sampled id {id:?} has no validation report"));
            }
        }
        if let Some(s) = store.scores().iter().find(|s| !sample.contains(&s.dialogue_id)) {
            return Err(format!("score log names dialogue {:?} outside the sample", s.dialogue_id));
        }
        Ok(AppState {
            dialogues: by_id,
            reports,
            sample,
            store: Mutex::new(store),
            token,
        })
    }

    fn sampled_reports(&self) -> Vec<ValidationReport> {
        self.sample.iter().map(|id| self.reports[id].clone()).collect()
    }
}

/// Opens (or creates) the score log at `path`.
pub fn open_store(path: &Path) -> Result<ScoreStore, StoreError> {
    ScoreStore::open(path)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/samples/next", get(next_sample))
        .route("/api/scores", post(post_score))
        .route("/api/summary", get(summary))
        .route("/api/dialogues/{id}", get(dialogue))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({"error": message.to_string()}))).into_response()
}

/// The rejection to send, if the request lacks the configured token.
fn rejected(state: &AppState, headers: &HeaderMap) -> Option<Response> {
    match &state.token {
        Some(t) if headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) != Some(t.as_str()) => {
            Some(error(StatusCode::UNAUTHORIZED, "missing or wrong API token"))
        }
        _ => None,
    }
}

fn dialogue_view(state: &AppState, id: &str) -> Value {
    let d = &state.dialogues[id];
    json!({
        "dialogue_id": id,
        "trace": render_trace(d),
        "turns": d.turns,
        "flags": state.reports.get(id).map(|r| r.flags.clone()).unwrap_or_default(),
        "auto_score": state.reports.get(id).map(|r| r.auto_score),
    })
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_sample(State(state): State<Arc<AppState>>, headers: HeaderMap, Query(q): Query<NextQuery>) -> Response {
    if let Some(r) = rejected(&state, &headers) {
        return r;
    }
    let Some(annotator) = q.annotator.filter(|a| !a.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "query parameter annotator is required");
    };
    let next = {
        let store = state.store.lock().expect("store lock");
        let scored = state.sample.iter().filter(|id| store.has_scored(id, &annotator)).count();
        state
            .sample
            .iter()
            .enumerate()
            .find(|(_, id)| !store.has_scored(id, &annotator))
            .map(|(pos, id)| (pos, id.clone(), scored))
    };
    match next {
        None => StatusCode::NO_CONTENT.into_response(),
        Some((position, id, scored)) => {
            let mut view = dialogue_view(&state, &id);
            view["position"] = json!(position);
            view["total"] = json!(state.sample.len());
            view["scored"] = json!(scored);
            Json(view).into_response()
        }
    }
}

async fn post_score(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    if let Some(r) = rejected(&state, &headers) {
        return r;
    }
    let mut score: HumanScore = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) if e.is_data() => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    if let Err(e) = score.check() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e);
    }
    if !state.sample.contains(&score.dialogue_id) {
        return error(StatusCode::NOT_FOUND, format!("dialogue {:?} is not in the review sample", score.dialogue_id));
    }
    if score.timestamp.is_none() {
        score.timestamp = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || st.store.lock().expect("store lock").record(score))
        .await
        .expect("score writer task");
    match result {
        Ok(position) => (StatusCode::CREATED, Json(json!({"position": position}))).into_response(),
        Err(e @ StoreError::Conflict { .. }) => error(StatusCode::CONFLICT, e),
        Err(StoreError::Invalid(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn summary(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Some(r) = rejected(&state, &headers) {
        return r;
    }
    let scores = state.store.lock().expect("store lock").scores().to_vec();
    match error_rate_report(&state.sampled_reports(), &scores) {
        Ok(s) => Json(s).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn dialogue(State(state): State<Arc<AppState>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> Response {
    if let Some(r) = rejected(&state, &headers) {
        return r;
    }
    if !state.dialogues.contains_key(&id) {
        return error(StatusCode::NOT_FOUND, format!("unknown dialogue {id:?}"));
    }
    Json(dialogue_view(&state, &id)).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;
    use agentdial_core::validate::check_dialogue;
    use agentdial_core::model::parse_compact_registry;
    use agentdial_core::ReactTurn;
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    fn state(dir: &Path, token: Option<&str>) -> Arc<AppState> {
        let reg = parse_compact_registry("1. Ping(host)").unwrap();
        let dialogues: Vec<ReactDialogue> = (0..3)
            .map(|i| {
                ReactDialogue::new(
                    format!("d{i}"),
                    vec![ReactTurn::direct("hello there", Some("No API is needed here.".into()), "Hi!")],
                    "r",
                )
                .unwrap()
            })
            .collect();
        let reports = dialogues.iter().map(|d| check_dialogue(d, &reg)).collect();
        let store = open_store(&dir.join("scores.jsonl")).unwrap();
        Arc::new(
            AppState::new(dialogues, reports, vec!["d1".into(), "d0".into()], store, token.map(String::from)).unwrap(),
        )
    }

    async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    fn post(body: Value) -> Request<Body> {
        Request::post("/api/scores")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap()
    }

    #[tokio::test]
    async fn next_follows_sample_order() {
        let dir = tempfile::tempdir().unwrap();
        let app = router(state(dir.path(), None));
        let (s, v) = call(&app, Request::get("/api/samples/next?annotator=a").body(Body::empty()).unwrap()).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["dialogue_id"], "d1");
        assert_eq!(v["total"], 2);
        let (s, _) = call(&app, Request::get("/api/samples/next").body(Body::empty()).unwrap()).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn unsampled_and_unknown_ids() {
        let dir = tempfile::tempdir().unwrap();
        let app = router(state(dir.path(), None));
        let (s, _) = call(&app, post(json!({"dialogue_id": "d2", "score": 1, "annotator": "a"}))).await;
        assert_eq!(s, StatusCode::NOT_FOUND);
        let (s, v) = call(&app, Request::get("/api/dialogues/d2").body(Body::empty()).unwrap()).await;
        assert_eq!(s, StatusCode::OK);
        assert!(v["trace"].as_str().unwrap().contains("User: hello there"));
        let (s, _) = call(&app, Request::get("/api/dialogues/zz").body(Body::empty()).unwrap()).await;
        assert_eq!(s, StatusCode::NOT_FOUND);
    }

    #[tokio::test]
    async fn malformed_bodies() {
        let dir = tempfile::tempdir().unwrap();
        let app = router(state(dir.path(), None));
        let (s, _) = call(&app, post(json!({"dialogue_id": "d1", "score": 2, "annotator": "a"}))).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
        let (s, _) = call(&app, post(json!({"dialogue_id": "d1"}))).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
        let bad = Request::post("/api/scores").body(Body::from("{oops")).unwrap();
        let (s, _) = call(&app, bad).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn token_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let app = router(state(dir.path(), Some("s3cret")));
        let (s, _) = call(&app, Request::get("/api/summary").body(Body::empty()).unwrap()).await;
        assert_eq!(s, StatusCode::UNAUTHORIZED);
        let req = Request::get("/api/summary").header(TOKEN_HEADER, "s3cret").body(Body::empty()).unwrap();
        let (s, v) = call(&app, req).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["dialogues"], 2);
        assert_eq!(v["human_error_rate"], Value::Null);
    }

    #[test]
    fn sample_must_reference_known_dialogues() {
        let dir = tempfile::tempdir().unwrap();
        let store = open_store(&dir.path().join("s.jsonl")).unwrap();
        assert!(AppState::new(vec![], vec![], vec!["x".into()], store, None).is_err());
    }
}
