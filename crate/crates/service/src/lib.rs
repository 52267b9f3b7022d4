//! HTTP service: dataset browsing, table upload and download, and LLM
//! question answering over datasets or uploaded tables.

pub mod config;
pub mod store;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use std::sync::Arc;
use tower_http::cors::CorsLayer;
use tqk_core::api::{
    AskRequest, AskResponse, AskSource, DatasetInfo, ErrorBody, SplitInfo, TableMeta, Timing, DOWNLOAD_FORMATS,
};
use tqk_core::ingest::{delimiter_for, table_from_delimited, to_delimited};
use tqk_core::linearize::{to_markdown, TokenBudget, Tokenizer};
use tqk_core::reasoner::{answer_question, LanguageModel, LlmEndpoint, OpenAiClient, PromptSpec, Stage};
use tqk_core::{Answer, Category, QAExample};

pub use config::{ConfigError, Datasets, ServiceConfig};
pub use store::{StoreError, StoredTable, TableStore};

/// Split used for few-shot exemplars.
pub const SHOT_SPLIT: &str = "train";

#[derive(Clone)]
pub struct AppState {
    pub datasets: Arc<Datasets>,
    pub store: Arc<TableStore>,
    /// `None` when no LLM endpoint is configured.
    pub model: Option<Arc<dyn LanguageModel>>,
}

impl AppState {
    pub fn new(datasets: Datasets, store: TableStore, model: Option<Arc<dyn LanguageModel>>) -> Self {
        AppState { datasets: Arc::new(datasets), store: Arc::new(store), model }
    }

    /// Builds the OpenAI-compatible client from `TQK_LLM_*` variables, or
    /// none if they are unset.
    pub fn model_from_env() -> Option<Arc<dyn LanguageModel>> {
        let endpoint = LlmEndpoint::from_env().ok()?;
        match OpenAiClient::new(endpoint) {
            Ok(client) => Some(Arc::new(client)),
            Err(e) => {
                tracing::error!(error = %e, "cannot build LLM client");
                None
            }
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{name}/{split}/{index}", get(get_example))
        .route("/tables", get(list_tables).post(upload_table))
        .route("/tables/{id}", get(get_table).delete(delete_table))
        .route("/tables/{id}/download", get(download_table))
        .route("/ask", axum::routing::post(ask))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn list_datasets(State(state): State<AppState>) -> Json<Vec<DatasetInfo>> {
    let infos = state
        .datasets
        .iter()
        .map(|(name, splits)| DatasetInfo {
            name: name.clone(),
            splits: splits.iter().map(|(s, ex)| SplitInfo { name: s.clone(), count: ex.len() }).collect(),
        })
        .collect();
    Json(infos)
}

fn lookup<'a>(state: &'a AppState, name: &str, split: &str) -> Result<&'a [QAExample], ApiError> {
    let splits = state.datasets.get(name).ok_or_else(|| ApiError::not_found(format!("unknown dataset {name}")))?;
    splits.get(split).map(Vec::as_slice).ok_or_else(|| {
        let known: Vec<&str> = splits.keys().map(String::as_str).collect();
        ApiError::not_found(format!("unknown split {split} for dataset {name}; available: {}", known.join(", ")))
    })
}

fn example_at<'a>(state: &'a AppState, name: &str, split: &str, index: usize) -> Result<&'a QAExample, ApiError> {
    let examples = lookup(state, name, split)?;
    examples.get(index).ok_or_else(|| {
        let range = match examples.len() {
            0 => "split is empty".to_string(),
            n => format!("valid range 0..{}", n - 1),
        };
        ApiError::not_found(format!("index {index} out of range; {range}"))
    })
}

async fn get_example(
    State(state): State<AppState>,
    Path((name, split, index)): Path<(String, String, usize)>,
) -> Result<Json<QAExample>, ApiError> {
    example_at(&state, &name, &split, index).cloned().map(Json)
}

async fn list_tables(State(state): State<AppState>) -> Json<Vec<TableMeta>> {
    Json(state.store.list())
}

#[derive(Debug, Deserialize)]
struct UploadParams {
    #[serde(default)]
    name: Option<String>,
    /// `,`, `tab` or `\t`; otherwise inferred from the name.
    #[serde(default)]
    delimiter: Option<String>,
    /// `false` detects header rows instead of taking the first row.
    #[serde(default)]
    has_header: Option<bool>,
}

async fn upload_table(
    State(state): State<AppState>,
    Query(params): Query<UploadParams>,
    body: String,
) -> Result<(StatusCode, Json<TableMeta>), ApiError> {
    let name = params.name.unwrap_or_else(|| "table.csv".to_string());
    let delimiter = match params.delimiter.as_deref() {
        None => delimiter_for(&name),
        Some("tab" | "\\t" | "\t") => '\t',
        Some(d) if d.chars().count() == 1 => d.chars().next().expect("one char"),
        Some(d) => return Err(ApiError::bad_request(format!("delimiter must be one character, got {d:?}"))),
    };
    let table = table_from_delimited(name.clone(), &body, delimiter, params.has_header.unwrap_or(true))
        .map_err(|e| ApiError::bad_request(format!("malformed table: {e}")))?;
    let store = state.store.clone();
    let meta = tokio::task::spawn_blocking(move || store.insert(&name, table))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, Json(meta)))
}

fn stored(state: &AppState, id: &str) -> Result<StoredTable, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(format!("unknown table {id}")))
}

async fn get_table(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<StoredTable>, ApiError> {
    stored(&state, &id).map(Json)
}

async fn delete_table(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let store = state.store.clone();
    let key = id.clone();
    let removed = tokio::task::spawn_blocking(move || store.delete(&key))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    if removed {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(format!("unknown table {id}")))
    }
}

#[derive(Debug, Deserialize)]
struct DownloadParams {
    #[serde(default)]
    format: Option<String>,
}

async fn download_table(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<DownloadParams>,
) -> Result<Response, ApiError> {
    let format = params.format.unwrap_or_else(|| "csv".to_string());
    if !DOWNLOAD_FORMATS.contains(&format.as_str()) {
        return Err(ApiError::bad_request(format!(
            "unknown format {format}; valid formats: {}",
            DOWNLOAD_FORMATS.join(", ")
        )));
    }
    let table = stored(&state, &id)?.table;
    let (body, mime) = match format.as_str() {
        "csv" => (to_delimited(&table, ','), "text/csv; charset=utf-8"),
        "tsv" => (to_delimited(&table, '\t'), "text/tab-separated-values; charset=utf-8"),
        "md" => (to_markdown(&table), "text/markdown; charset=utf-8"),
        _ => (serde_json::to_string(&table).map_err(ApiError::internal)?, "application/json"),
    };
    let disposition = format!("attachment; filename=\"{id}.{format}\"");
    Ok(([(header::CONTENT_TYPE, mime.to_string()), (header::CONTENT_DISPOSITION, disposition)], body).into_response())
}

fn resolve_source(state: &AppState, req: &AskRequest) -> Result<(QAExample, Vec<QAExample>), ApiError> {
    let question = req.question.as_deref().map(str::trim).filter(|q| !q.is_empty());
    match &req.source {
        AskSource::Dataset { name, split, index } => {
            let mut ex = example_at(state, name, split, *index).map_err(|e| ApiError::bad_request(e.message))?.clone();
            if let Some(q) = question {
                ex.question = q.to_string();
            }
            let shots = state
                .datasets
                .get(name)
                .and_then(|s| s.get(SHOT_SPLIT))
                .map(|train| train.iter().take(req.spec.shots).cloned().collect())
                .unwrap_or_default();
            Ok((ex, shots))
        }
        AskSource::Table { id } => {
            let table = state.store.get(id).ok_or_else(|| ApiError::bad_request(format!("unknown table {id}")))?.table;
            let question = question.ok_or_else(|| ApiError::bad_request("question is required for a table source"))?;
            let ex = QAExample {
                id: id.clone(),
                dataset: "custom".into(),
                category: Category::Structured,
                question: question.to_string(),
                table,
                passages: Vec::new(),
                images: Vec::new(),
                answer: Answer::direct(""),
            };
            Ok((ex, Vec::new()))
        }
    }
}

async fn ask(State(state): State<AppState>, Json(req): Json<AskRequest>) -> Result<Json<AskResponse>, ApiError> {
    let (ex, shots) = resolve_source(&state, &req)?;
    let budget =
        TokenBudget::new(req.spec.max_tokens, Tokenizer::Default).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut spec = PromptSpec::new(req.spec.input_format, req.spec.scheme, budget);
    spec.shots = shots;
    let model =
        state.model.clone().ok_or_else(|| ApiError::new(StatusCode::BAD_GATEWAY, "auth: endpoint not configured"))?;
    let outcome = answer_question(&ex, &spec, req.retrieve.as_ref(), model.as_ref()).await.map_err(|e| {
        let status = match e.stage {
            Stage::Retrieve | Stage::Prompt => StatusCode::BAD_REQUEST,
            _ => StatusCode::BAD_GATEWAY,
        };
        ApiError::new(status, e.to_string())
    })?;
    Ok(Json(AskResponse {
        answer: outcome.answer.value,
        derivation: outcome.answer.derivation,
        format: outcome.answer.format,
        prompt_id: outcome.prompt_id,
        timing: Timing { total_ms: outcome.total_time.as_millis() as u64, llm_ms: outcome.llm_time.as_millis() as u64 },
    }))
}
