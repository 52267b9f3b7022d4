use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;
use tower::ServiceExt;
use tqk_core::ingest::{save_unified, table_from_delimited};
use tqk_core::linearize::to_markdown;
use tqk_core::reasoner::{LanguageModel, ScriptedModel};
use tqk_core::{Answer, Category, QAExample, UnifiedTable};
use tqk_service::{router, AppState, Datasets, ServiceConfig, TableStore};

fn example(i: usize) -> QAExample {
    QAExample {
        id: format!("demo-{i}"),
        dataset: "demo".into(),
        category: Category::Structured,
        question: format!("What is row {i}?"),
        table: UnifiedTable::from_text("t", &[vec!["k", "v"], vec!["a", "1"], vec!["b", "2"]], 1),
        passages: Vec::new(),
        images: Vec::new(),
        answer: Answer::direct(format!("gold {i}")),
    }
}

fn demo() -> Datasets {
    BTreeMap::from([("demo".to_string(), BTreeMap::from([("dev".to_string(), (0..3).map(example).collect())]))])
}

struct Harness {
    app: Router,
    _dir: tempfile::TempDir,
}

fn harness(datasets: Datasets, model: Option<Arc<dyn LanguageModel>>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store = TableStore::open(dir.path().join("tables")).unwrap();
    Harness { app: router(AppState::new(datasets, store, model)), _dir: dir }
}

async fn call(app: &Router, method: Method, uri: &str, body: Body) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    call(app, Method::GET, uri, Body::empty()).await
}

async fn upload(app: &Router, name: &str, text: &str) -> (StatusCode, Value) {
    let (status, body) = call(app, Method::POST, &format!("/tables?name={name}"), Body::from(text.to_string())).await;
    (status, serde_json::from_str(&body).unwrap())
}

async fn ask(app: &Router, req: Value) -> (StatusCode, Value) {
    let (status, body) = call(app, Method::POST, "/ask", Body::from(req.to_string())).await;
    (status, serde_json::from_str(&body).unwrap())
}

#[tokio::test]
async fn no_datasets_lists_empty() {
    let h = harness(Datasets::new(), None);
    assert_eq!(get(&h.app, "/datasets").await, (StatusCode::OK, "[]".to_string()));
}

#[tokio::test]
async fn browse_dataset_example_with_gold() {
    let h = harness(demo(), None);
    let (status, body) = get(&h.app, "/datasets").await;
    assert_eq!(status, StatusCode::OK);
    let list: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(list, json!([{"name": "demo", "splits": [{"name": "dev", "count": 3}]}]));

    let (status, body) = get(&h.app, "/datasets/demo/dev/1").await;
    assert_eq!(status, StatusCode::OK);
    let ex: QAExample = serde_json::from_str(&body).unwrap();
    assert_eq!(ex, example(1));
    assert_eq!(ex.answer.value, "gold 1");
}

#[tokio::test]
async fn browse_errors_are_404() {
    let h = harness(demo(), None);
    let (status, body) = get(&h.app, "/datasets/demo/dev/9").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body.contains("valid range 0..2"), "{body}");
    let (status, body) = get(&h.app, "/datasets/demo/test/0").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body.contains("available: dev"), "{body}");
    assert_eq!(get(&h.app, "/datasets/nope/dev/0").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn upload_download_delete_lifecycle() {
    let h = harness(Datasets::new(), None);
    let (status, meta) = upload(&h.app, "t.csv", "a,b\n1,2").await;
    assert_eq!(status, StatusCode::CREATED);
    let id = meta["id"].as_str().unwrap().to_string();
    assert_eq!((meta["rows"].as_u64(), meta["cols"].as_u64()), (Some(2), Some(2)));

    let expected = to_markdown(&table_from_delimited("t", "a,b\n1,2", ',', true).unwrap());
    assert_eq!(get(&h.app, &format!("/tables/{id}/download?format=md")).await, (StatusCode::OK, expected));

    let (status, body) = get(&h.app, &format!("/tables/{id}/download?format=xml")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.contains("valid formats: csv, tsv, md, json"), "{body}");

    let (status, list) = get(&h.app, "/tables").await;
    assert_eq!(status, StatusCode::OK);
    assert!(list.contains(&id));

    assert_eq!(call(&h.app, Method::DELETE, &format!("/tables/{id}"), Body::empty()).await.0, StatusCode::NO_CONTENT);
    assert_eq!(get(&h.app, &format!("/tables/{id}/download?format=md")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&h.app, Method::DELETE, &format!("/tables/{id}"), Body::empty()).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn csv_download_round_trips() {
    let h = harness(Datasets::new(), None);
    let text = "name,note\n\"Lee, Ann\",\"said \"\"hi\"\"\"\nBo,\n";
    let (_, meta) = upload(&h.app, "t.csv", text).await;
    let id = meta["id"].as_str().unwrap();
    let (status, csv) = get(&h.app, &format!("/tables/{id}/download?format=csv")).await;
    assert_eq!(status, StatusCode::OK);
    let original = table_from_delimited("x", text, ',', true).unwrap();
    let back = table_from_delimited("x", &csv, ',', true).unwrap();
    assert_eq!(back.cells, original.cells);
}

#[tokio::test]
async fn tsv_upload_by_name() {
    let h = harness(Datasets::new(), None);
    let (status, meta) = upload(&h.app, "t.tsv", "a\tb\n1\t2\n").await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(meta["cols"], 2);
}

#[tokio::test]
async fn malformed_upload_is_400() {
    let h = harness(Datasets::new(), None);
    let (status, body) = upload(&h.app, "t.csv", "a,b\n\"open,c\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "malformed table: row 2: unterminated quoted field");
}

#[tokio::test]
async fn ask_uploaded_table_with_mock() {
    let model: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["  2 "]));
    let h = harness(Datasets::new(), Some(model));
    let (_, meta) = upload(&h.app, "t.csv", "a,b\n1,2").await;
    let req = json!({
        "source": {"kind": "table", "id": meta["id"]},
        "question": "What is b?",
        "spec": {"input_format": "flatten", "scheme": "direct"}
    });
    let (status, body) = ask(&h.app, req.clone()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["answer"], "2");
    assert_eq!(body["format"], "Direct");
    assert_eq!(body["prompt_id"], "v1/flatten/direct");
    let (_, again) = ask(&h.app, req).await;
    assert_eq!(again["answer"], body["answer"]);
}

#[tokio::test]
async fn ask_pot_executes_program() {
    let model: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["subtract(5,3)"]));
    let h = harness(demo(), Some(model));
    let req =
        json!({"source": {"kind": "dataset", "name": "demo", "split": "dev", "index": 0}, "spec": {"scheme": "pot"}});
    let (status, body) = ask(&h.app, req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["answer"], "2");
    assert_eq!(body["derivation"], "subtract(5, 3)");
    assert_eq!(body["format"], "Program");
}

#[tokio::test]
async fn ask_without_endpoint_is_502() {
    let h = harness(demo(), None);
    let req = json!({"source": {"kind": "dataset", "name": "demo", "split": "dev", "index": 0}});
    let (status, body) = ask(&h.app, req).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error"], "auth: endpoint not configured");
}

#[tokio::test]
async fn ask_unknown_source_is_400() {
    let model: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["x"]));
    let h = harness(demo(), Some(model));
    let (status, _) = ask(&h.app, json!({"source": {"kind": "table", "id": "nope"}, "question": "q"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) =
        ask(&h.app, json!({"source": {"kind": "dataset", "name": "demo", "split": "dev", "index": 7}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn ask_unparseable_pot_is_stage_labeled_502() {
    let model: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["no idea"]));
    let h = harness(demo(), Some(model));
    let req =
        json!({"source": {"kind": "dataset", "name": "demo", "split": "dev", "index": 0}, "spec": {"scheme": "pot"}});
    let (status, body) = ask(&h.app, req).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert!(body["error"].as_str().unwrap().starts_with("extract: "));
}

#[test]
fn config_file_registers_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let examples: Vec<QAExample> = (0..3).map(example).collect();
    save_unified(&examples, dir.path().join("dev.jsonl")).unwrap();
    let cfg_path = dir.path().join("service.toml");
    std::fs::write(
        &cfg_path,
        "store_dir = \"tables\"\n\n[[datasets]]\nname = \"demo\"\nsplit = \"dev\"\npath = \"dev.jsonl\"\n",
    )
    .unwrap();
    let cfg = ServiceConfig::from_file(&cfg_path).unwrap();
    assert_eq!(cfg.store_dir.as_deref(), Some(dir.path().join("tables").as_path()));
    let datasets = cfg.load_datasets().unwrap();
    assert_eq!(datasets["demo"]["dev"], examples);
}

#[test]
fn config_rejects_duplicate_split() {
    let dir = tempfile::tempdir().unwrap();
    save_unified(&[example(0)], dir.path().join("dev.jsonl")).unwrap();
    let entry = "[[datasets]]\nname = \"demo\"\nsplit = \"dev\"\npath = \"dev.jsonl\"\n";
    let cfg_path = dir.path().join("service.toml");
    std::fs::write(&cfg_path, format!("{entry}{entry}")).unwrap();
    let err = ServiceConfig::from_file(&cfg_path).unwrap().load_datasets().unwrap_err();
    assert_eq!(err.to_string(), "dataset demo/dev registered twice");
}
