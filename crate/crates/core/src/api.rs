//! Request and response bodies shared by the HTTP service and its client.

use crate::linearize::TableFormat;
use crate::reasoner::Scheme;
use crate::retrieval::RetrieverConfig;
use crate::table::AnswerFormat;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub splits: Vec<SplitInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub id: String,
    pub name: String,
    /// Seconds since the Unix epoch.
    pub uploaded_at: u64,
    pub rows: usize,
    pub cols: usize,
    pub header_rows: usize,
}

/// What an `/ask` request runs against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AskSource {
    Dataset { name: String, split: String, index: usize },
    Table { id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSettings {
    #[serde(default)]
    pub input_format: TableFormat,
    #[serde(default)]
    pub scheme: Scheme,
    /// Few-shot exemplars drawn from the dataset's `train` split.
    #[serde(default)]
    pub shots: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
}

fn default_max_tokens() -> usize {
    4096
}

impl Default for PromptSettings {
    fn default() -> Self {
        PromptSettings {
            input_format: TableFormat::Markdown,
            scheme: Scheme::Direct,
            shots: 0,
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskRequest {
    pub source: AskSource,
    /// Defaults to the dataset example's own question.
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub spec: PromptSettings,
    #[serde(default)]
    pub retrieve: Option<RetrieverConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u64,
    pub llm_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<String>,
    pub format: AnswerFormat,
    pub prompt_id: String,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Formats accepted by the table download endpoint.
pub const DOWNLOAD_FORMATS: [&str; 4] = ["csv", "tsv", "md", "json"];
