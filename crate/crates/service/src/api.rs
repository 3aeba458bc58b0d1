//! HTTP routes. Request bodies are parsed by hand so that schema errors can
//! report the offending field path alongside the session clock.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use icl_core::context::LocationId;
use icl_core::engine::MemorySnapshot;
use icl_core::home::WorldOp;
use icl_core::Error;

use crate::session::{Operation, Outcome, Session};

pub type SharedSession = Arc<Mutex<Session>>;

pub fn router(session: SharedSession) -> Router {
    Router::new()
        .route("/teach/object", post(teach_object))
        .route("/teach/context", post(teach_context))
        .route("/fetch", post(fetch))
        .route("/clock/advance", post(advance_clock))
        .route("/world/mutate", post(mutate))
        .route("/state", get(state))
        .route("/log", get(log))
        .route("/snapshot", get(get_snapshot).post(load_snapshot))
        .with_state(session)
}

pub struct ApiError {
    status: StatusCode,
    message: String,
    path: Option<String>,
    clock: f64,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message, "clock": self.clock });
        if let Some(p) = self.path {
            body["path"] = Value::String(p);
        }
        (self.status, Json(body)).into_response()
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::UnknownInstance(_) | Error::UnknownLocation(_) | Error::UnknownLabel(_) => StatusCode::NOT_FOUND,
        Error::NoObjectsTaught | Error::DuplicateInstance(_) | Error::IndexFull(_) => StatusCode::CONFLICT,
        Error::InvalidParameter { .. }
        | Error::EmptyLabel
        | Error::NonFinite { .. }
        | Error::DimensionMismatch { .. }
        | Error::SnapshotVersion(_)
        | Error::NonPositiveWeight(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn lock(s: &SharedSession) -> MutexGuard<'_, Session> {
    // A panic while holding the lock leaves the session as it was before
    // the failed call; keep serving.
    s.lock().unwrap_or_else(|p| p.into_inner())
}

fn parse<T: DeserializeOwned>(bytes: &[u8], clock: f64) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: e.into_inner().to_string(),
            path: (path != ".").then_some(path),
            clock,
        }
    })
}

/// Parses, applies and answers with the outcome plus the clock.
fn run<T: DeserializeOwned>(
    session: &SharedSession,
    body: &[u8],
    to_op: impl FnOnce(T) -> Result<Operation, (String, String)>,
    render: impl FnOnce(Outcome, &Session) -> Value,
) -> Result<Json<Value>, ApiError> {
    let mut s = lock(session);
    let clock = s.clock();
    let req: T = parse(body, clock)?;
    let op = to_op(req).map_err(|(path, message)| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        message,
        path: Some(path),
        clock,
    })?;
    let outcome = s.apply(op).map_err(|e| ApiError {
        status: status_of(&e),
        message: e.to_string(),
        path: None,
        clock,
    })?;
    let mut v = render(outcome, &s);
    v["clock"] = json!(s.clock());
    Ok(Json(v))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response serialises")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TeachObjectReq {
    label: String,
    instance_id: String,
    n_views: usize,
}

async fn teach_object(State(s): State<SharedSession>, body: Bytes) -> Result<Json<Value>, ApiError> {
    run(
        &s,
        &body,
        |r: TeachObjectReq| {
            if r.n_views == 0 {
                return Err(("n_views".into(), "n_views must be >= 1".into()));
            }
            if r.label.is_empty() {
                return Err(("label".into(), "label must not be empty".into()));
            }
            Ok(Operation::TeachObject {
                label: r.label,
                instance_id: r.instance_id,
                n_views: r.n_views,
            })
        },
        |o, _| match o {
            Outcome::TeachObject(t) => json!({
                "views_used": t.views_used,
                "clusters_after": t.clusters_after,
                "recruited": t.recruited,
            }),
            other => to_value(&other),
        },
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TeachContextReq {
    name: String,
    location_id: LocationId,
    scene: Vec<String>,
}

async fn teach_context(State(s): State<SharedSession>, body: Bytes) -> Result<Json<Value>, ApiError> {
    run(
        &s,
        &body,
        |r: TeachContextReq| {
            if r.name.is_empty() {
                return Err(("name".into(), "name must not be empty".into()));
            }
            Ok(Operation::TeachContext {
                name: r.name,
                location_id: r.location_id,
                scene: r.scene,
            })
        },
        |o, _| match o {
            Outcome::TeachContext(t) => json!({
                "predicted_objects": t.predicted_objects,
                "outcome": t.outcome,
            }),
            other => to_value(&other),
        },
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FetchReq {
    label: String,
}

async fn fetch(State(s): State<SharedSession>, body: Bytes) -> Result<Json<Value>, ApiError> {
    run(
        &s,
        &body,
        |r: FetchReq| Ok(Operation::Fetch { label: r.label }),
        |o, _| match o {
            Outcome::Fetch(r) => to_value(&r),
            other => to_value(&other),
        },
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvanceReq {
    days: f64,
}

async fn advance_clock(State(s): State<SharedSession>, body: Bytes) -> Result<Json<Value>, ApiError> {
    run(
        &s,
        &body,
        |r: AdvanceReq| {
            if !(r.days > 0.0 && r.days.is_finite()) {
                return Err(("days".into(), "days must be a finite number > 0".into()));
            }
            Ok(Operation::AdvanceClock { days: r.days })
        },
        |_, _| json!({}),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MutateReq {
    op: WorldOp,
}

async fn mutate(State(s): State<SharedSession>, body: Bytes) -> Result<Json<Value>, ApiError> {
    run(
        &s,
        &body,
        |r: MutateReq| Ok(Operation::Mutate { op: r.op }),
        |_, s| json!({ "placements": s.engine().world().placements() }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadSnapshotReq {
    snapshot: MemorySnapshot,
}

async fn load_snapshot(State(s): State<SharedSession>, body: Bytes) -> Result<Json<Value>, ApiError> {
    run(
        &s,
        &body,
        |r: LoadSnapshotReq| {
            Ok(Operation::LoadSnapshot {
                snapshot: Box::new(r.snapshot),
            })
        },
        |_, _| json!({ "loaded": true }),
    )
}

async fn state(State(s): State<SharedSession>) -> Json<Value> {
    let s = lock(&s);
    Json(to_value(&s.summary()))
}

async fn log(State(s): State<SharedSession>) -> Json<Value> {
    let s = lock(&s);
    Json(json!({ "clock": s.clock(), "entries": s.log() }))
}

async fn get_snapshot(State(s): State<SharedSession>) -> Json<Value> {
    let s = lock(&s);
    Json(json!({ "clock": s.clock(), "snapshot": s.snapshot() }))
}
