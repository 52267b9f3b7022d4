//! Prompting an LLM over a table: retrieve, build the prompt, complete,
//! extract, and for PoT execute the derivation.

pub mod extract;
pub mod llm;
pub mod prompt;

pub use extract::{extract_answer, extract_answer_with, Extracted};
pub use llm::{Completion, LanguageModel, LlmEndpoint, LlmError, OpenAiClient, ScriptedModel};
pub use prompt::{build_prompt, PromptError, PromptSpec, Scheme, TEMPLATE_VERSION};

use crate::retrieval::{retrieve, RetrievalUnit, RetrieverConfig};
use crate::table::{Answer, AnswerFormat, QAExample};
use std::fmt;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Retrieve,
    Prompt,
    Auth,
    Complete,
    Extract,
    Execute,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Retrieve => "retrieve",
            Stage::Prompt => "prompt",
            Stage::Auth => "auth",
            Stage::Complete => "complete",
            Stage::Extract => "extract",
            Stage::Execute => "execute",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, message: impl ToString) -> Self {
        PipelineError { stage, message: message.to_string() }
    }
}

impl From<LlmError> for PipelineError {
    fn from(e: LlmError) -> Self {
        let stage = if e.stage() == "auth" { Stage::Auth } else { Stage::Complete };
        PipelineError::new(stage, e)
    }
}

#[derive(Debug, Clone)]
pub struct AskOutcome {
    pub answer: Answer,
    pub prompt: String,
    pub prompt_id: String,
    pub completion: String,
    pub retries: u32,
    pub llm_time: Duration,
    pub total_time: Duration,
}

/// Answers `ex.question` over `ex.table` with the model.
///
/// Direct and CoT yield a `Direct` answer. PoT yields the parsed derivation
/// (program or SQL) with its executed value.
pub async fn answer_question(
    ex: &QAExample,
    spec: &PromptSpec,
    retriever: Option<&RetrieverConfig>,
    model: &dyn LanguageModel,
) -> Result<AskOutcome, PipelineError> {
    let started = Instant::now();
    let units: Option<Vec<RetrievalUnit>> = match retriever {
        Some(cfg) => {
            let ranked = retrieve(ex, cfg, &ex.question).map_err(|e| PipelineError::new(Stage::Retrieve, e))?;
            Some(ranked.into_iter().map(|r| r.unit).collect())
        }
        None => None,
    };
    let prompt = build_prompt(ex, spec, units.as_deref()).map_err(|e| PipelineError::new(Stage::Prompt, e))?;
    let llm_started = Instant::now();
    let completion = model.complete(&prompt).await?;
    let llm_time = llm_started.elapsed();
    let extracted = extract_answer(&completion.text, spec.scheme);
    let answer = match (spec.scheme, extracted.derivation) {
        (Scheme::PoT, Some(derivation)) => {
            let value = derivation.execute(&ex.table).map_err(|e| PipelineError::new(Stage::Execute, e))?;
            Answer::derived(derivation.format(), value, derivation.to_string())
        }
        (Scheme::PoT, None) => {
            return Err(PipelineError::new(Stage::Extract, "unparseable: no program or SQL query in completion"))
        }
        (_, _) => Answer { format: AnswerFormat::Direct, value: extracted.answer, derivation: None },
    };
    Ok(AskOutcome {
        answer,
        prompt,
        prompt_id: spec.prompt_id(),
        completion: completion.text,
        retries: completion.retries,
        llm_time,
        total_time: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{TableFormat, TokenBudget, Tokenizer};
    use crate::retrieval::Granularity;
    use crate::table::{Category, UnifiedTable};

    fn example() -> QAExample {
        QAExample {
            id: "e".into(),
            dataset: "demo".into(),
            category: Category::Structured,
            question: "How old is Ada?".into(),
            table: UnifiedTable::from_text("t", &[vec!["Name", "Age"], vec!["Ada", "36"], vec!["Bo", "12"]], 1),
            passages: Vec::new(),
            images: Vec::new(),
            answer: Answer::direct("36"),
        }
    }

    fn spec(scheme: Scheme) -> PromptSpec {
        PromptSpec::new(TableFormat::Flatten, scheme, TokenBudget::new(4096, Tokenizer::Default).unwrap())
    }

    #[tokio::test]
    async fn direct_returns_scripted_answer() {
        let out =
            answer_question(&example(), &spec(Scheme::Direct), None, &ScriptedModel::new([" 36 "])).await.unwrap();
        assert_eq!(out.answer, Answer::direct("36"));
        assert_eq!(out.prompt_id, "v1/flatten/direct");
    }

    #[tokio::test]
    async fn pot_executes_program() {
        let model = ScriptedModel::new(["Program: subtract(5,3)"]);
        let out = answer_question(&example(), &spec(Scheme::PoT), None, &model).await.unwrap();
        assert_eq!(out.answer.value, "2");
        assert_eq!(out.answer.format, AnswerFormat::Program);
        assert_eq!(out.answer.derivation.as_deref(), Some("subtract(5, 3)"));
    }

    #[tokio::test]
    async fn pot_executes_sql_against_table() {
        let model = ScriptedModel::new(["SELECT Age WHERE Name = 'Ada'"]);
        let out = answer_question(&example(), &spec(Scheme::PoT), None, &model).await.unwrap();
        assert_eq!(out.answer.value, "36");
        assert_eq!(out.answer.format, AnswerFormat::Sql);
    }

    #[tokio::test]
    async fn errors_are_stage_labeled() {
        let err =
            answer_question(&example(), &spec(Scheme::PoT), None, &ScriptedModel::new(["no idea"])).await.unwrap_err();
        assert_eq!(err.stage, Stage::Extract);
        let err = answer_question(&example(), &spec(Scheme::PoT), None, &ScriptedModel::new(["divide(1, 0)"]))
            .await
            .unwrap_err();
        assert_eq!(err.to_string(), "execute: division by zero at step 0");
    }

    #[tokio::test]
    async fn retrieval_limits_prompt_to_units() {
        let cfg = RetrieverConfig::new(Granularity::Row, 1);
        let out =
            answer_question(&example(), &spec(Scheme::Direct), Some(&cfg), &ScriptedModel::new(["36"])).await.unwrap();
        assert!(out.prompt.contains("Name is Ada"));
        assert!(!out.prompt.contains("Bo"));
    }
}
