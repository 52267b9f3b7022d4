//! Typed client for the tqk HTTP service.

use reqwest::{Method, RequestBuilder, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tqk_core::api::{AskRequest, AskResponse, DatasetInfo, ErrorBody, TableMeta};
use tqk_core::{QAExample, UnifiedTable};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status().map(|s| s.as_u16()),
        }
    }
}

/// Table record returned by `GET /tables/{id}`.
#[derive(Debug, Clone, Deserialize)]
pub struct StoredTable {
    pub meta: TableMeta,
    pub table: UnifiedTable,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Client { base: base_url.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn with_http(base_url: impl Into<String>, http: reqwest::Client) -> Self {
        Client { base: base_url.into().trim_end_matches('/').to_string(), http }
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send(&self, req: RequestBuilder) -> Result<Response, ClientError> {
        let res = req.send().await?;
        let status = res.status();
        if status.is_success() {
            return Ok(res);
        }
        let text = res.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Status { status: status.as_u16(), message })
    }

    async fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        Ok(self.send(req).await?.json().await?)
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        self.send(self.request(Method::GET, "/health")).await.map(drop)
    }

    pub async fn datasets(&self) -> Result<Vec<DatasetInfo>, ClientError> {
        self.json(self.request(Method::GET, "/datasets")).await
    }

    pub async fn example(&self, name: &str, split: &str, index: usize) -> Result<QAExample, ClientError> {
        self.json(self.request(Method::GET, &format!("/datasets/{name}/{split}/{index}"))).await
    }

    pub async fn tables(&self) -> Result<Vec<TableMeta>, ClientError> {
        self.json(self.request(Method::GET, "/tables")).await
    }

    /// Uploads CSV or TSV text; the delimiter follows the name's extension.
    pub async fn upload_table(
        &self,
        name: &str,
        text: impl Into<String>,
        has_header: bool,
    ) -> Result<TableMeta, ClientError> {
        let req = self
            .request(Method::POST, "/tables")
            .query(&[("name", name), ("has_header", if has_header { "true" } else { "false" })])
            .header(reqwest::header::CONTENT_TYPE, "text/plain; charset=utf-8")
            .body(text.into());
        self.json(req).await
    }

    pub async fn table(&self, id: &str) -> Result<StoredTable, ClientError> {
        self.json(self.request(Method::GET, &format!("/tables/{id}"))).await
    }

    /// Returns `false` when the table did not exist.
    pub async fn delete_table(&self, id: &str) -> Result<bool, ClientError> {
        match self.send(self.request(Method::DELETE, &format!("/tables/{id}"))).await {
            Ok(_) => Ok(true),
            Err(ClientError::Status { status, .. }) if status == StatusCode::NOT_FOUND.as_u16() => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Renders a stored table as `csv`, `tsv`, `md` or `json`.
    pub async fn download(&self, id: &str, format: &str) -> Result<String, ClientError> {
        let req = self.request(Method::GET, &format!("/tables/{id}/download")).query(&[("format", format)]);
        Ok(self.send(req).await?.text().await?)
    }

    pub async fn ask(&self, req: &AskRequest) -> Result<AskResponse, ClientError> {
        self.json(self.request(Method::POST, "/ask").json(req)).await
    }
}
