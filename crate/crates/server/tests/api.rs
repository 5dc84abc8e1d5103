use std::sync::atomic::{AtomicU64, Ordering};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use multiqa::annotation::{AnnotationService, AnnotatorConfig, Clock, ServiceConfig};
use multiqa::taxonomy::Lexicon;
use multiqa::{AnswerInput, Dataset, Instance};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Tick(AtomicU64);

impl Clock for Tick {
    fn now_ms(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

fn service(log: Option<&std::path::Path>) -> AnnotationService {
    let corpus = vec![Instance::build(
        "i1",
        Dataset::Other,
        "Who scored?",
        "Smith and Jones scored.",
        vec![AnswerInput::new("Smith"), AnswerInput::new("Jones")],
    )
    .unwrap()];
    let config = ServiceConfig {
        annotators: vec![
            AnnotatorConfig { id: "a".into(), adjudicator: false },
            AnnotatorConfig { id: "b".into(), adjudicator: false },
            AnnotatorConfig { id: "judge".into(), adjudicator: true },
        ],
        seed: 0,
    };
    let clock = Box::new(Tick(AtomicU64::new(0)));
    match log {
        Some(path) => AnnotationService::open(config, corpus, Lexicon::builtin(), clock, path).unwrap(),
        None => AnnotationService::new(config, corpus, Lexicon::builtin(), clock),
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn label(annotator: &str, kind: &str) -> Value {
    json!({ "annotator": annotator, "instance_id": "i1", "label": { "kind": kind } })
}

#[tokio::test]
async fn conflicting_session_reaches_adjudication() {
    let app = multiqa_server::router(service(None), None);
    let (s, v) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["insufficient_data"], true);
    assert_eq!(v["kappa"], Value::Null);

    let (s, v) = call(&app, "GET", "/api/task?annotator=a&stage=full", None).await;
    assert_eq!(s, StatusCode::OK);
    let task = &v["task"];
    assert_eq!(task["instance_id"], "i1");
    assert_eq!(task["question_tokens"], json!(["Who", "scored?"]));
    assert_eq!(task["answer_check"]["answers"], json!(["Smith", "Jones"]));
    call(&app, "GET", "/api/task?annotator=b&stage=full", None).await;

    let (s, v) = call(&app, "POST", "/api/label", Some(label("a", "passage_dependent"))).await;
    assert_eq!((s, v["final_label"].clone()), (StatusCode::OK, Value::Null));
    let (s, v) = call(&app, "POST", "/api/label", Some(label("b", "question_dependent"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stage"], "adjudication");

    let (_, v) = call(&app, "GET", "/api/conflicts", None).await;
    assert_eq!(v["conflicts"].as_array().unwrap().len(), 1);
    let (_, v) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(v["queues"]["adjudication"], 1);
    assert_eq!(v["pairs"], 1);
    // Two raters, one pair, disagreeing: chance agreement is 0, so kappa is 0.
    assert_eq!(v["kappa"], 0.0);

    let (s, v) = call(&app, "GET", "/api/task?annotator=a&stage=adjudication", None).await;
    assert_eq!((s, v["error"].clone()), (StatusCode::FORBIDDEN, json!("not_adjudicator")));
    let (_, v) = call(&app, "GET", "/api/task?annotator=judge&stage=adjudication", None).await;
    assert_eq!(v["task"]["prior_labels"].as_array().unwrap().len(), 2);
    let (_, v) = call(&app, "POST", "/api/label", Some(label("judge", "passage_dependent"))).await;
    assert_eq!(v["final_label"]["kind"], "passage_dependent");
    let (_, v) = call(&app, "GET", "/api/task?annotator=b&stage=full", None).await;
    assert_eq!(v["task"], Value::Null);
}

#[tokio::test]
async fn error_mapping() {
    let app = multiqa_server::router(service(None), None);
    let (s, _) = call(&app, "GET", "/api/task?stage=full", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/api/task?annotator=a&stage=third", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call(&app, "GET", "/api/task?annotator=zed", None).await;
    assert_eq!((s, v["error"].clone()), (StatusCode::FORBIDDEN, json!("unknown_annotator")));
    let (s, v) = call(&app, "POST", "/api/label", Some(label("a", "passage_dependent"))).await;
    assert_eq!((s, v["error"].clone()), (StatusCode::FORBIDDEN, json!("not_assigned")));
    let (s, _) = call(&app, "POST", "/api/label", Some(json!({ "annotator": "a" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    call(&app, "GET", "/api/task?annotator=a", None).await;
    let clue = json!({ "annotator": "a", "instance_id": "i1",
        "label": { "kind": "question_dependent", "clues": [{ "type": "cardinal", "tokens": { "start": 4, "end": 5 } }] } });
    let (s, v) = call(&app, "POST", "/api/label", Some(clue)).await;
    assert_eq!((s, v["error"].clone()), (StatusCode::UNPROCESSABLE_ENTITY, json!("invalid_label")));
    call(&app, "POST", "/api/label", Some(label("a", "passage_dependent"))).await;
    let (s, v) = call(&app, "POST", "/api/label", Some(label("a", "passage_dependent"))).await;
    assert_eq!((s, v["duplicate"].clone()), (StatusCode::OK, json!(true)));
    let (s, _) = call(&app, "POST", "/api/label", Some(label("a", "question_dependent"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn state_survives_restart_and_static_files_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    std::fs::write(dir.path().join("index.html"), "<html>workbench</html>").unwrap();
    let app = multiqa_server::router(service(Some(&log)), Some(dir.path().to_owned()));
    call(&app, "GET", "/api/task?annotator=a", None).await;
    call(&app, "POST", "/api/label", Some(label("a", "bad_annotation"))).await;
    drop(app);

    let app = multiqa_server::router(service(Some(&log)), Some(dir.path().to_owned()));
    let (_, v) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(v["final_counts"]["bad_annotation"], 1);
    let req = Request::builder().uri("/index.html").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>workbench</html>");
}
