use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use icl_core::cluster::NetworkConfig;
use icl_core::feature::make_category_model;
use icl_core::home::{ErrorProbs, InstanceDef, Location, TimeModel, WorldDef};
use icl_core::EngineConfig;
use icl_service::{replay, router, LogEntry, Session, SessionInit};

const SIGMA: f64 = 0.01;

fn inst(id: &str, label: &str, seed: u64, location: Option<u32>) -> InstanceDef {
    InstanceDef {
        id: id.into(),
        label: label.into(),
        seed,
        embeddings: None,
        location,
    }
}

/// A seed whose "cup" model sits far beyond recruitment range of the
/// default cup (seed 1) after one view: exp(-d / 1) < tau needs
/// d > ln(1 / tau), and we ask for a 25% margin.
fn far_cup_seed() -> u64 {
    let tau = NetworkConfig::objects().tau;
    let need = (1.0 / tau).ln() * 1.25;
    let cup = make_category_model("cup", 1, SIGMA, 64).unwrap();
    (2..500)
        .find(|&s| {
            let other = make_category_model("cup", s, SIGMA, 64).unwrap();
            cup.mean.l1_distance(&other.mean).unwrap() > need
        })
        .expect("some seed is far enough")
}

fn init() -> SessionInit {
    let mut config = EngineConfig::default();
    config.views.sigma = SIGMA;
    SessionInit {
        config,
        world: WorldDef {
            locations: vec![
                Location { id: 0, name: "dining".into(), x: 0.0, y: 0.0 },
                Location { id: 1, name: "kitchen".into(), x: 6.5, y: 0.0 },
                Location { id: 2, name: "office".into(), x: 0.0, y: 5.0 },
            ],
            base_station: 0,
            instances: vec![
                inst("cup-1", "cup", 1, Some(1)),
                inst("plate-1", "plate", 2, Some(1)),
                inst("bowl-1", "bowl", 3, Some(1)),
                inst("pen-1", "pen", 4, Some(2)),
                inst("cup-far", "cup", far_cup_seed(), None),
            ],
            error_probs: ErrorProbs::NONE,
            time_model: TimeModel::default(),
        },
        seed: 11,
    }
}

fn app_with(init: SessionInit) -> Router {
    router(Arc::new(Mutex::new(Session::new(init).unwrap())))
}

fn app() -> Router {
    app_with(init())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(b.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(body)).await
}

async fn teach(app: &Router, label: &str, instance: &str, n: usize) -> Value {
    let (s, v) = post(app, "/teach/object", json!({"label": label, "instance_id": instance, "n_views": n})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v
}

async fn teach_home(app: &Router) {
    for (l, i) in [("cup", "cup-1"), ("plate", "plate-1"), ("bowl", "bowl-1"), ("pen", "pen-1")] {
        teach(app, l, i, 5).await;
    }
    let (s, _) = post(app, "/teach/context", json!({"name": "kitchen", "location_id": 1, "scene": ["cup-1", "plate-1", "bowl-1"]})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = post(app, "/teach/context", json!({"name": "office", "location_id": 2, "scene": ["pen-1"]})).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn fresh_state_is_empty() {
    let (s, v) = call(&app(), "GET", "/state", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["clock"], 0.0);
    assert_eq!(v["object_clusters"], 0);
    assert_eq!(v["context_clusters"], 0);
    assert_eq!(v["object_labels"], json!([]));
    assert_eq!(v["stm_size"], 0);
}

#[tokio::test]
async fn tight_views_recruit_only_first() {
    let v = teach(&app(), "cup", "cup-1", 5).await;
    assert_eq!(v["recruited"], json!([true, false, false, false, false]));
    assert_eq!(v["views_used"], 5);
    assert_eq!(v["clusters_after"], 1);
    assert_eq!(v["clock"], 0.0);
}

#[tokio::test]
async fn far_instance_of_known_label_recruits() {
    let app = app();
    teach(&app, "cup", "cup-1", 1).await;
    let v = teach(&app, "cup", "cup-far", 3).await;
    assert_eq!(v["recruited"][0], true, "{v}");
    assert_eq!(v["clusters_after"], 2);
}

#[tokio::test]
async fn schema_errors_are_422_with_field_path() {
    let app = app();
    let (s, v) = post(&app, "/teach/object", json!({"label": "cup", "instance_id": "cup-1", "n_views": 0})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["path"], "n_views");
    assert_eq!(v["clock"], 0.0);

    let (s, v) = post(&app, "/teach/object", json!({"label": "cup", "instance_id": "cup-1", "n_views": "five"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["path"], "n_views");

    let (s, v) = post(&app, "/world/mutate", json!({"op": {"op": "move", "instance": "cup-1", "location": "attic"}})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    // tagged enums are buffered before dispatch, so the path stops at the op
    assert_eq!(v["path"], "op");
    assert!(v["error"].as_str().unwrap().contains("u32"), "{v}");

    let (s, v) = post(&app, "/fetch", json!({"lable": "cup"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("lable"));

    // nothing was logged
    let (_, log) = call(&app, "GET", "/log", None).await;
    assert_eq!(log["entries"], json!([]));
}

#[tokio::test]
async fn unknown_things_are_404() {
    let app = app();
    let (s, _) = post(&app, "/teach/object", json!({"label": "mug", "instance_id": "mug-1", "n_views": 2})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    teach(&app, "cup", "cup-1", 2).await;
    let (s, _) = post(&app, "/teach/context", json!({"name": "attic", "location_id": 7, "scene": ["cup-1"]})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = post(&app, "/fetch", json!({"label": "unicorn"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["clock"], 0.0);
}

#[tokio::test]
async fn context_before_objects_is_409() {
    let (s, v) = post(&app(), "/teach/context", json!({"name": "kitchen", "location_id": 1, "scene": ["cup-1"]})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("object"));
}

#[tokio::test]
async fn context_recruits_then_updates() {
    let app = app();
    for (l, i) in [("cup", "cup-1"), ("plate", "plate-1"), ("bowl", "bowl-1")] {
        teach(&app, l, i, 4).await;
    }
    let body = json!({"name": "kitchen", "location_id": 1, "scene": ["cup-1", "plate-1", "bowl-1"]});
    let (s, v) = post(&app, "/teach/context", body.clone()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["predicted_objects"], json!(["cup", "plate", "bowl"]));
    assert_eq!(v["outcome"]["kind"], "recruited");
    let (_, v) = post(&app, "/teach/context", body).await;
    assert_eq!(v["outcome"]["kind"], "updated");
    let h_out = v["outcome"]["winner_output"].as_f64().unwrap();
    assert!(h_out >= NetworkConfig::contexts().tau, "{h_out}");
}

#[tokio::test]
async fn fetch_returns_all_legs_and_clock() {
    let app = app();
    teach_home(&app).await;
    let (s, v) = post(&app, "/fetch", json!({"label": "plate"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["success"], true);
    assert_eq!(v["failure_kind"], "none");
    let kinds: Vec<&str> = v["legs"].as_array().unwrap().iter().map(|l| l["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["query", "navigate", "perceive", "pick", "return"]);
    assert_eq!(v["execution_time"], 97.0);
    assert_eq!(v["clock"], 0.0);
    let (_, state) = call(&app, "GET", "/state", None).await;
    assert!(state["stm_size"].as_u64().unwrap() > 0, "perceived views enter STM");
}

#[tokio::test]
async fn clock_advances_and_rejects_nonpositive() {
    let app = app();
    let (s, v) = post(&app, "/clock/advance", json!({"days": 1.0})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["clock"], 1.0);
    for bad in [json!(0.0), json!(-2.0)] {
        let (s, v) = post(&app, "/clock/advance", json!({"days": bad})).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(v["path"], "days");
        assert_eq!(v["clock"], 1.0);
    }
}

#[tokio::test]
async fn moved_object_is_fetched_from_new_place_after_reteach() {
    let app = app();
    for (l, i) in [("cup", "cup-1"), ("plate", "plate-1"), ("pen", "pen-1")] {
        teach(&app, l, i, 5).await;
    }
    // The kitchen is seen once with the cup and once without it.
    for scene in [json!(["cup-1", "plate-1"]), json!(["plate-1"])] {
        post(&app, "/teach/context", json!({"name": "kitchen", "location_id": 1, "scene": scene})).await;
    }
    post(&app, "/teach/context", json!({"name": "office", "location_id": 2, "scene": ["pen-1"]})).await;
    post(&app, "/clock/advance", json!({"days": 20.0})).await;
    let (s, v) = post(&app, "/world/mutate", json!({"op": {"op": "move", "instance": "cup-1", "location": 2}})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["placements"]["cup-1"], 2);
    post(&app, "/teach/context", json!({"name": "office", "location_id": 2, "scene": ["pen-1", "cup-1"]})).await;
    let (_, v) = post(&app, "/fetch", json!({"label": "cup"})).await;
    assert_eq!(v["predicted_context"], json!(["office", 2]));
    assert_eq!(v["success"], true);
}

#[tokio::test]
async fn log_replay_reproduces_state() {
    let app = app();
    teach_home(&app).await;
    post(&app, "/fetch", json!({"label": "cup"})).await;
    post(&app, "/clock/advance", json!({"days": 0.5})).await;
    post(&app, "/fetch", json!({"label": "pen"})).await;
    post(&app, "/world/mutate", json!({"op": {"op": "remove", "instance": "bowl-1"}})).await;
    post(&app, "/clock/advance", json!({"days": 3.0})).await;
    post(&app, "/fetch", json!({"label": "bowl"})).await;

    let (_, log) = call(&app, "GET", "/log", None).await;
    let entries: Vec<LogEntry> = serde_json::from_value(log["entries"].clone()).unwrap();
    assert_eq!(entries.len(), 12);
    assert!(entries.windows(2).all(|w| w[1].seq == w[0].seq + 1 && w[1].clock >= w[0].clock));

    let replayed = replay(init(), &entries).unwrap();
    let (_, state) = call(&app, "GET", "/state", None).await;
    assert_eq!(serde_json::to_value(replayed.summary()).unwrap(), state);
    assert_eq!(serde_json::to_value(replayed.log()).unwrap(), log["entries"]);
}

#[tokio::test]
async fn snapshot_roundtrip_through_http() {
    let app = app();
    teach_home(&app).await;
    post(&app, "/clock/advance", json!({"days": 2.0})).await;
    let (_, snap) = call(&app, "GET", "/snapshot", None).await;
    assert_eq!(snap["clock"], 2.0);

    let other = app_with(init());
    let (s, v) = post(&other, "/snapshot", json!({"snapshot": snap["snapshot"]})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["clock"], 2.0);
    let (_, a) = call(&app, "GET", "/state", None).await;
    let (_, b) = call(&other, "GET", "/state", None).await;
    assert_eq!(a["object_labels"], b["object_labels"]);
    assert_eq!(a["context_labels"], b["context_labels"]);

    let mut bad = snap["snapshot"].clone();
    bad["schema"] = json!(9);
    let (s, _) = post(&other, "/snapshot", json!({"snapshot": bad})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn concurrent_posts_are_totally_ordered() {
    let app = app();
    teach_home(&app).await;
    let mut handles = Vec::new();
    for i in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            if i % 2 == 0 {
                post(&app, "/fetch", json!({"label": "cup"})).await
            } else {
                post(&app, "/clock/advance", json!({"days": 0.25})).await
            }
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap().0, StatusCode::OK);
    }
    let (_, log) = call(&app, "GET", "/log", None).await;
    let entries: Vec<LogEntry> = serde_json::from_value(log["entries"].clone()).unwrap();
    assert_eq!(entries.len(), 6 + 16);
    assert_eq!(log["clock"], 2.0);
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    let replayed = replay(init(), &entries).unwrap();
    let (_, state) = call(&app, "GET", "/state", None).await;
    assert_eq!(serde_json::to_value(replayed.summary()).unwrap(), state);
}
