use std::collections::BTreeMap;
use std::sync::Arc;
use tqk_client::{Client, ClientError};
use tqk_core::api::{AskRequest, AskSource, PromptSettings};
use tqk_core::reasoner::{LanguageModel, ScriptedModel};
use tqk_core::{Answer, Category, QAExample, UnifiedTable};
use tqk_service::{AppState, Datasets, TableStore};

async fn spawn(datasets: Datasets, model: Option<Arc<dyn LanguageModel>>) -> (Client, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let store = TableStore::open(dir.path()).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(tqk_service::serve(listener, AppState::new(datasets, store, model)));
    (Client::new(format!("http://{addr}/")), dir)
}

fn demo() -> Datasets {
    let ex = QAExample {
        id: "d0".into(),
        dataset: "demo".into(),
        category: Category::Structured,
        question: "How many rows?".into(),
        table: UnifiedTable::from_text("t", &[vec!["k"], vec!["a"], vec!["b"]], 1),
        passages: Vec::new(),
        images: Vec::new(),
        answer: Answer::direct("2"),
    };
    BTreeMap::from([("demo".to_string(), BTreeMap::from([("dev".to_string(), vec![ex])]))])
}

#[tokio::test]
async fn browse_and_table_lifecycle() {
    let (client, _dir) = spawn(demo(), None).await;
    client.health().await.unwrap();
    let datasets = client.datasets().await.unwrap();
    assert_eq!(datasets[0].splits[0].count, 1);
    assert_eq!(client.example("demo", "dev", 0).await.unwrap().answer.value, "2");
    let err = client.example("demo", "dev", 5).await.unwrap_err();
    assert_eq!(err.status(), Some(404));
    assert!(err.to_string().contains("valid range 0..0"));

    let meta = client.upload_table("sales.csv", "Item,Qty\nPen,3\n", true).await.unwrap();
    assert_eq!(client.tables().await.unwrap(), vec![meta.clone()]);
    assert_eq!(client.table(&meta.id).await.unwrap().table.text(1, 1), "3");
    assert_eq!(client.download(&meta.id, "csv").await.unwrap(), "Item,Qty\nPen,3\n");
    assert!(matches!(client.download(&meta.id, "xml").await, Err(ClientError::Status { status: 400, .. })));
    assert!(client.delete_table(&meta.id).await.unwrap());
    assert!(!client.delete_table(&meta.id).await.unwrap());
}

#[tokio::test]
async fn ask_over_http() {
    let model: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["Pen"]));
    let (client, _dir) = spawn(Datasets::new(), Some(model)).await;
    let meta = client.upload_table("t.csv", "Item,Qty\nPen,3\n", true).await.unwrap();
    let req = AskRequest {
        source: AskSource::Table { id: meta.id },
        question: Some("Which item?".into()),
        spec: PromptSettings::default(),
        retrieve: None,
    };
    let res = client.ask(&req).await.unwrap();
    assert_eq!(res.answer, "Pen");
    assert_eq!(res.prompt_id, "v1/markdown/direct");
}
