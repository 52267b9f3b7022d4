//! Prompt templates and budget fitting.

use crate::linearize::{keep_body_prefix, render, TableFormat, TokenBudget};
use crate::retrieval::RetrievalUnit;
use crate::table::{AnswerFormat, QAExample, UnifiedTable};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Template revision; part of every prompt id.
pub const TEMPLATE_VERSION: &str = "v1";

/// Output scheme requested from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Direct,
    #[serde(rename = "cot")]
    CoT,
    #[serde(rename = "pot")]
    PoT,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::CoT => "cot",
            Scheme::PoT => "pot",
        }
    }

    fn instruction(&self) -> &'static str {
        match self {
            Scheme::Direct => "Answer the question using the table and passages below. Reply with the answer only.",
            Scheme::CoT => {
                "Answer the question using the table and passages below. Think step by step, \
                 then finish with \"the answer is\" followed by the answer."
            }
            Scheme::PoT => {
                "Write a program that computes the answer to the question from the table and passages below. \
                 A program is a comma-separated list of steps op(x, y) where op is one of add, subtract, \
                 multiply, divide, exp, greater; x and y are numbers or #k, the result of step k (counting from 0). \
                 Alternatively write one SQL query: SELECT [MAX|MIN|COUNT|SUM|AVG(]column[)] FROM t \
                 [WHERE column =|>|< value [AND ...]]. Reply with the program only."
            }
        }
    }

    fn cue(&self) -> &'static str {
        match self {
            Scheme::Direct | Scheme::CoT => "Answer:",
            Scheme::PoT => "Program:",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Scheme::Direct),
            "cot" => Ok(Scheme::CoT),
            "pot" => Ok(Scheme::PoT),
            other => Err(format!("unknown scheme {other:?}; expected direct, cot or pot")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub input_format: TableFormat,
    pub scheme: Scheme,
    pub shots: Vec<QAExample>,
    pub budget: TokenBudget,
}

impl PromptSpec {
    pub fn new(input_format: TableFormat, scheme: Scheme, budget: TokenBudget) -> Self {
        PromptSpec { input_format, scheme, shots: Vec::new(), budget }
    }

    /// Identifies the template, e.g. `v1/markdown/pot`.
    pub fn prompt_id(&self) -> String {
        format!("{TEMPLATE_VERSION}/{}/{}", self.input_format.as_str(), self.scheme.as_str())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("prompt needs at least {needed} tokens, budget is {budget}")]
    BudgetUnsatisfiable { needed: usize, budget: usize },
}

fn context(table: &UnifiedTable, ex: &QAExample, format: TableFormat, units: Option<&[RetrievalUnit]>) -> String {
    let mut out = String::new();
    if let Some(caption) = table.caption.as_deref().filter(|c| !c.trim().is_empty()) {
        out.push_str(&format!("Caption: {}\n", caption.trim()));
    }
    match units {
        Some(units) => {
            out.push_str("Table (retrieved):\n");
            for unit in units {
                out.push_str(&unit.text);
                out.push('\n');
            }
        }
        None => {
            out.push_str("Table:\n");
            let rendered = render(table, format);
            if !rendered.is_empty() {
                out.push_str(&rendered);
                out.push('\n');
            }
        }
    }
    if !ex.passages.is_empty() && units.is_none() {
        out.push_str("Passages:\n");
        for p in &ex.passages {
            if p.title.is_empty() {
                out.push_str(&format!("- {}\n", p.text.trim()));
            } else {
                out.push_str(&format!("- {}: {}\n", p.title.trim(), p.text.trim()));
            }
        }
    }
    out
}

fn shot_block(shot: &QAExample, index: usize, spec: &PromptSpec) -> String {
    let mut out = format!("Example {}\n", index + 1);
    out.push_str(&context(&shot.table, shot, spec.input_format, None));
    out.push_str(&format!("Question: {}\n", shot.question.trim()));
    let derivation = shot.answer.derivation.as_deref().filter(|_| shot.answer.format != AnswerFormat::Direct);
    match (spec.scheme, derivation) {
        (Scheme::PoT, Some(d)) => out.push_str(&format!("Program: {d}\n")),
        (Scheme::CoT, _) => out.push_str(&format!("Answer: The answer is {}.\n", shot.answer.value)),
        _ => out.push_str(&format!("Answer: {}\n", shot.answer.value)),
    }
    out
}

fn assemble(
    ex: &QAExample,
    spec: &PromptSpec,
    shots: usize,
    table: &UnifiedTable,
    units: Option<&[RetrievalUnit]>,
) -> String {
    let mut out = String::new();
    out.push_str(spec.scheme.instruction());
    out.push_str("\n\n");
    for (i, shot) in spec.shots.iter().take(shots).enumerate() {
        out.push_str(&shot_block(shot, i, spec));
        out.push('\n');
    }
    out.push_str(&context(table, ex, spec.input_format, units));
    out.push_str(&format!("Question: {}\n", ex.question.trim()));
    out.push_str(spec.scheme.cue());
    out
}

/// Largest `n` in `0..=max` with `fits(n)`, assuming `fits` is monotone
/// decreasing in `n`.
fn largest_fitting(max: usize, fits: impl Fn(usize) -> bool) -> Option<usize> {
    if !fits(0) {
        return None;
    }
    let (mut lo, mut hi) = (0, max);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(lo)
}

/// Builds the prompt for `ex`. When `units` is given, those retrieved units
/// replace the full table.
///
/// Over budget, shots are dropped from the tail first; with no shots left the
/// target table's body rows (or retrieved units) are cut from the end.
pub fn build_prompt(ex: &QAExample, spec: &PromptSpec, units: Option<&[RetrievalUnit]>) -> Result<String, PromptError> {
    let budget = &spec.budget;
    let full = |shots: usize| assemble(ex, spec, shots, &ex.table, units);
    for shots in (0..=spec.shots.len()).rev() {
        let prompt = full(shots);
        if budget.fits(&prompt) {
            return Ok(prompt);
        }
    }
    let prompt = match units {
        Some(units) => {
            let keep =
                largest_fitting(units.len(), |k| budget.fits(&assemble(ex, spec, 0, &ex.table, Some(&units[..k]))));
            keep.map(|k| assemble(ex, spec, 0, &ex.table, Some(&units[..k])))
        }
        None => {
            let rows = ex.table.body().len();
            let keep =
                largest_fitting(rows, |k| budget.fits(&assemble(ex, spec, 0, &keep_body_prefix(&ex.table, k), None)));
            keep.map(|k| assemble(ex, spec, 0, &keep_body_prefix(&ex.table, k), None))
        }
    };
    prompt.ok_or_else(|| {
        let minimal = match units {
            Some(_) => assemble(ex, spec, 0, &ex.table, Some(&[])),
            None => assemble(ex, spec, 0, &keep_body_prefix(&ex.table, 0), None),
        };
        PromptError::BudgetUnsatisfiable { needed: budget.count(&minimal), budget: budget.max_tokens }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{count_tokens, Tokenizer};
    use crate::table::{Answer, Category};

    fn example(id: &str, rows: usize) -> QAExample {
        let mut grid = vec![vec!["Name".to_string(), "Score".to_string()]];
        for i in 0..rows {
            grid.push(vec![format!("player{i}"), format!("{}", i * 7)]);
        }
        QAExample {
            id: id.into(),
            dataset: "demo".into(),
            category: Category::Structured,
            question: "Who scored 7?".into(),
            table: UnifiedTable::from_text(format!("{id}-t"), &grid, 1),
            passages: Vec::new(),
            images: Vec::new(),
            answer: Answer::derived(AnswerFormat::Program, "7", "add(0, 7)"),
        }
    }

    fn spec(scheme: Scheme, max_tokens: usize) -> PromptSpec {
        PromptSpec::new(TableFormat::Markdown, scheme, TokenBudget::new(max_tokens, Tokenizer::Default).unwrap())
    }

    #[test]
    fn direct_ends_with_answer_cue() {
        let p = build_prompt(&example("a", 2), &spec(Scheme::Direct, 10_000), None).unwrap();
        assert!(p.ends_with("Answer:"));
        assert!(p.contains("| player1 | 7 |"));
        assert!(p.contains("Question: Who scored 7?"));
    }

    #[test]
    fn pot_names_grammar() {
        let p = build_prompt(&example("a", 2), &spec(Scheme::PoT, 10_000), None).unwrap();
        assert!(p.ends_with("Program:"));
        for op in ["add", "subtract", "multiply", "divide", "exp", "greater", "SELECT"] {
            assert!(p.contains(op), "{op}");
        }
    }

    #[test]
    fn shots_render_per_scheme() {
        let mut s = spec(Scheme::PoT, 10_000);
        s.shots = vec![example("s1", 1)];
        let p = build_prompt(&example("a", 1), &s, None).unwrap();
        assert!(p.contains("Example 1\n"));
        assert!(p.contains("Program: add(0, 7)\n"));
        s.scheme = Scheme::CoT;
        let p = build_prompt(&example("a", 1), &s, None).unwrap();
        assert!(p.contains("Answer: The answer is 7.\n"));
    }

    #[test]
    fn drops_shots_from_tail_before_rows() {
        let target = example("a", 3);
        let mut s = spec(Scheme::Direct, 10_000);
        s.shots = vec![example("s1", 2), example("s2", 40)];
        let with_all = build_prompt(&target, &s, None).unwrap();
        let one_shot_len = count_tokens(&assemble(&target, &s, 1, &target.table, None), &Tokenizer::Default);
        assert!(count_tokens(&with_all, &Tokenizer::Default) > one_shot_len);

        s.budget = TokenBudget::new(one_shot_len, Tokenizer::Default).unwrap();
        let p = build_prompt(&target, &s, None).unwrap();
        assert!(p.contains("Example 1") && !p.contains("Example 2"));
        assert!(p.contains("player2"));
        assert!(count_tokens(&p, &Tokenizer::Default) <= one_shot_len);
    }

    #[test]
    fn truncates_rows_when_no_shots_fit() {
        let target = example("a", 50);
        let header_only = assemble(&target, &spec(Scheme::Direct, 1), 0, &keep_body_prefix(&target.table, 0), None);
        let base = count_tokens(&header_only, &Tokenizer::Default);
        // each body row "| playerN | M |" costs 5 tokens plus the newline
        let s = spec(Scheme::Direct, base + 12);
        let p = build_prompt(&target, &s, None).unwrap();
        assert!(p.contains("player1 ") && !p.contains("player2 "));
        assert!(count_tokens(&p, &Tokenizer::Default) <= base + 12);
    }

    #[test]
    fn unsatisfiable_budget() {
        let err = build_prompt(&example("a", 1), &spec(Scheme::Direct, 5), None).unwrap_err();
        assert!(matches!(err, PromptError::BudgetUnsatisfiable { budget: 5, .. }));
    }

    #[test]
    fn retrieved_units_replace_table() {
        use crate::retrieval::Locator;
        let units =
            vec![RetrievalUnit { locator: Locator::Row(2), text: "row 2: Name is player1 ; Score is 7".into() }];
        let p = build_prompt(&example("a", 30), &spec(Scheme::Direct, 10_000), Some(&units)).unwrap();
        assert!(p.contains("row 2: Name is player1 ; Score is 7"));
        assert!(!p.contains("player2"));
    }

    #[test]
    fn prompt_id_is_versioned() {
        assert_eq!(spec(Scheme::PoT, 10).prompt_id(), "v1/markdown/pot");
    }
}
