//! Table serialization for prompts, token counting and budget truncation.

use crate::table::{MergedRegion, UnifiedTable};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum LinearizeError {
    #[error("budget too small: header alone needs {needed} tokens, budget is {budget}")]
    BudgetTooSmall { needed: usize, budget: usize },
    #[error("max_tokens must be at least 1")]
    ZeroBudget,
    #[error("cannot read vocabulary {path}: {source}")]
    Vocabulary { path: PathBuf, source: std::io::Error },
}

/// How a table is rendered into text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Markdown,
    Flatten,
}

impl TableFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            TableFormat::Markdown => "markdown",
            TableFormat::Flatten => "flatten",
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "flatten" => Ok(TableFormat::Flatten),
            other => Err(format!("unknown table format {other:?}; expected markdown or flatten")),
        }
    }
}

pub fn render(table: &UnifiedTable, format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => to_markdown(table),
        TableFormat::Flatten => to_flatten(table),
    }
}

fn escape_cell(text: &str) -> String {
    text.trim().replace(['\n', '\r'], " ").replace('|', "\\|")
}

fn markdown_line<I, S>(cells: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut line = String::from("|");
    for cell in cells {
        line.push(' ');
        line.push_str(&escape_cell(cell.as_ref()));
        line.push_str(" |");
    }
    line
}

fn markdown_header(table: &UnifiedTable) -> String {
    let header = markdown_line(table.header_paths());
    let sep = markdown_line(std::iter::repeat_n("---", table.n_cols()));
    format!("{header}\n{sep}")
}

fn markdown_row(table: &UnifiedTable, body_index: usize) -> String {
    markdown_line(table.body()[body_index].iter().map(|c| c.text.as_str()))
}

/// Renders the table as a markdown pipe table. Multi-row headers collapse to
/// one header row whose cells are the joined header paths.
pub fn to_markdown(table: &UnifiedTable) -> String {
    if table.n_cols() == 0 {
        return String::new();
    }
    let mut out = markdown_header(table);
    for i in 0..table.body().len() {
        out.push('\n');
        out.push_str(&markdown_row(table, i));
    }
    out
}

/// One sentence for a body row (0-based index into the body), numbered from 1.
pub fn flatten_row(table: &UnifiedTable, body_index: usize) -> String {
    let row = &table.body()[body_index];
    let parts: Vec<String> = row
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let mut header = table.header_path(c);
            if header.is_empty() {
                header = format!("column {}", c + 1);
            }
            let text = cell.text.trim().replace(['\n', '\r'], " ");
            let value = if text.is_empty() { "-" } else { text.as_str() };
            format!("{header} is {value}")
        })
        .collect();
    format!("row {}: {}", body_index + 1, parts.join(" ; "))
}

/// Renders every body row as `row k: header is cell ; ...`.
pub fn to_flatten(table: &UnifiedTable) -> String {
    (0..table.body().len()).map(|i| flatten_row(table, i)).collect::<Vec<_>>().join("\n")
}

/// A vocabulary for greedy longest-match tokenization.
#[derive(Debug)]
pub struct Vocabulary {
    path: PathBuf,
    tokens: HashSet<String>,
    max_chars: usize,
}

impl Vocabulary {
    /// Reads one token per line; blank lines are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LinearizeError> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path)
            .map_err(|source| LinearizeError::Vocabulary { path: path.clone(), source })?;
        Ok(Self::from_tokens(path, text.lines().map(|l| l.trim_end_matches('\r'))))
    }

    pub fn from_tokens<'a>(path: PathBuf, tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let tokens: HashSet<String> = tokens.into_iter().filter(|t| !t.is_empty()).map(str::to_string).collect();
        let max_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Vocabulary { path, tokens, max_chars }
    }

    fn count(&self, text: &str) -> usize {
        let mut total = 0;
        for chunk in text.split_whitespace() {
            let chars: Vec<(usize, char)> = chunk.char_indices().collect();
            let mut i = 0;
            while i < chars.len() {
                let longest = (2..=self.max_chars.min(chars.len() - i)).rev().find(|&len| {
                    let start = chars[i].0;
                    let end = chars.get(i + len).map_or(chunk.len(), |(b, _)| *b);
                    self.tokens.contains(&chunk[start..end])
                });
                // Unknown characters and single-char vocab entries cost one token each.
                i += longest.unwrap_or(1);
                total += 1;
            }
        }
        total
    }
}

#[derive(Debug, Clone, Default)]
pub enum Tokenizer {
    #[default]
    Default,
    Plugged(Arc<Vocabulary>),
}

impl Tokenizer {
    pub fn plugged(path: impl AsRef<Path>) -> Result<Self, LinearizeError> {
        Ok(Tokenizer::Plugged(Arc::new(Vocabulary::from_file(path)?)))
    }

    pub fn count(&self, text: &str) -> usize {
        count_tokens(text, self)
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tokenizer::Default => f.write_str("default"),
            Tokenizer::Plugged(v) => write!(f, "vocab:{}", v.path.display()),
        }
    }
}

/// Counts tokens. The default rule counts maximal alphanumeric runs plus one
/// token per other non-whitespace character.
pub fn count_tokens(text: &str, tokenizer: &Tokenizer) -> usize {
    match tokenizer {
        Tokenizer::Default => default_count(text),
        Tokenizer::Plugged(vocab) => vocab.count(text),
    }
}

fn default_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone)]
pub struct TokenBudget {
    pub max_tokens: usize,
    pub tokenizer: Tokenizer,
}

impl TokenBudget {
    pub fn new(max_tokens: usize, tokenizer: Tokenizer) -> Result<Self, LinearizeError> {
        if max_tokens == 0 {
            return Err(LinearizeError::ZeroBudget);
        }
        Ok(TokenBudget { max_tokens, tokenizer })
    }

    pub fn count(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }

    pub fn fits(&self, text: &str) -> bool {
        self.count(text) <= self.max_tokens
    }
}

/// Keeps the header plus the longest prefix of body rows whose markdown
/// rendering fits the budget.
pub fn truncate_rows(table: &UnifiedTable, budget: &TokenBudget) -> Result<UnifiedTable, LinearizeError> {
    if table.n_cols() == 0 {
        return Ok(table.clone());
    }
    // Rows are newline-separated, so the markdown count is additive per line.
    let mut used = budget.count(&markdown_header(table));
    if used > budget.max_tokens {
        return Err(LinearizeError::BudgetTooSmall { needed: used, budget: budget.max_tokens });
    }
    let mut keep = 0;
    for i in 0..table.body().len() {
        let cost = budget.count(&markdown_row(table, i));
        if used + cost > budget.max_tokens {
            break;
        }
        used += cost;
        keep += 1;
    }
    Ok(keep_body_prefix(table, keep))
}

/// Like [`truncate_rows`] for either format. Flattened rows have no header
/// line, so any budget admits the empty prefix.
pub fn truncate_to_budget(
    table: &UnifiedTable,
    format: TableFormat,
    budget: &TokenBudget,
) -> Result<UnifiedTable, LinearizeError> {
    match format {
        TableFormat::Markdown => truncate_rows(table, budget),
        TableFormat::Flatten => {
            let mut used = 0;
            let mut keep = 0;
            for i in 0..table.body().len() {
                let cost = budget.count(&flatten_row(table, i));
                if used + cost > budget.max_tokens {
                    break;
                }
                used += cost;
                keep += 1;
            }
            Ok(keep_body_prefix(table, keep))
        }
    }
}

/// Copy of the table with only the first `keep` body rows; merged regions are
/// clipped to the remaining rows.
pub fn keep_body_prefix(table: &UnifiedTable, keep: usize) -> UnifiedTable {
    let end = (table.header_rows + keep).min(table.n_rows());
    if end == table.n_rows() {
        return table.clone();
    }
    let merged_regions = table
        .merged_regions
        .iter()
        .filter(|m| m.r0 < end)
        .map(|m| MergedRegion { r1: m.r1.min(end - 1), ..*m })
        .collect();
    UnifiedTable {
        id: table.id.clone(),
        header_rows: table.header_rows,
        caption: table.caption.clone(),
        cells: table.cells[..end].to_vec(),
        merged_regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[&str]], header_rows: usize) -> UnifiedTable {
        let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        UnifiedTable::from_text("t", &rows, header_rows)
    }

    #[test]
    fn markdown_basic() {
        let table = t(&[&["h1", "h2"], &["a", "b"]], 1);
        assert_eq!(to_markdown(&table), "| h1 | h2 |\n| --- | --- |\n| a | b |");
    }

    #[test]
    fn markdown_two_level_header() {
        let table = t(&[&["", "Q1"], &["Item", "2019"], &["Rev", "10"]], 2);
        assert!(to_markdown(&table).starts_with("| Item | Q1 / 2019 |\n"));
    }

    #[test]
    fn markdown_escapes_pipes() {
        let table = t(&[&["h"], &["a|b"]], 1);
        assert!(to_markdown(&table).ends_with("| a\\|b |"));
    }

    #[test]
    fn flatten_basic() {
        let table = t(&[&["Name", "Age"], &["Ada", "36"]], 1);
        assert_eq!(to_flatten(&table), "row 1: Name is Ada ; Age is 36");
    }

    #[test]
    fn flatten_empty_cell_placeholder() {
        let table = t(&[&["Name", "Age"], &["Ada", ""], &["Bob", "7"]], 1);
        assert_eq!(to_flatten(&table), "row 1: Name is Ada ; Age is -\nrow 2: Name is Bob ; Age is 7");
    }

    #[test]
    fn flatten_no_body() {
        let table = t(&[&["Name", "Age"]], 1);
        assert_eq!(to_flatten(&table), "");
    }

    #[test]
    fn default_tokenizer_rule() {
        assert_eq!(count_tokens("Hello, world", &Tokenizer::Default), 3);
        assert_eq!(count_tokens("", &Tokenizer::Default), 0);
        assert_eq!(count_tokens("| a | --- |", &Tokenizer::Default), 7);
        assert_eq!(count_tokens("année 2019!!", &Tokenizer::Default), 4);
    }

    #[test]
    fn plugged_tokenizer_longest_match() {
        let vocab = Vocabulary::from_tokens(PathBuf::from("mem"), ["hel", "hello", "wor", "ld"]);
        let tok = Tokenizer::Plugged(Arc::new(vocab));
        // hello | , | wor | ld
        assert_eq!(tok.count("hello, world"), 4);
        // unknown chars cost one each
        assert_eq!(tok.count("xyz"), 3);
    }

    #[test]
    fn plugged_tokenizer_missing_file() {
        assert!(matches!(Tokenizer::plugged("/nonexistent/vocab.txt"), Err(LinearizeError::Vocabulary { .. })));
    }

    #[test]
    fn truncate_within_budget_is_identity() {
        let table = t(&[&["h1", "h2"], &["a", "b"], &["c", "d"]], 1);
        let budget = TokenBudget::new(1000, Tokenizer::Default).unwrap();
        assert_eq!(truncate_rows(&table, &budget).unwrap(), table);
    }

    #[test]
    fn truncate_keeps_longest_fitting_prefix() {
        let table = t(&[&["h1", "h2"], &["a", "b"], &["c", "d"], &["e", "f"], &["g", "h"]], 1);
        // header 5 + separator 9 = 14 tokens, each body row 5 tokens
        let budget = TokenBudget::new(24, Tokenizer::Default).unwrap();
        let cut = truncate_rows(&table, &budget).unwrap();
        assert_eq!(cut.body().len(), 2);
        assert!(budget.count(&to_markdown(&cut)) <= 24);
        let one_more = keep_body_prefix(&table, 3);
        assert!(budget.count(&to_markdown(&one_more)) > 24);
    }

    #[test]
    fn truncate_budget_below_header() {
        let table = t(&[&["h1", "h2"], &["a", "b"]], 1);
        let budget = TokenBudget::new(5, Tokenizer::Default).unwrap();
        assert!(matches!(truncate_rows(&table, &budget), Err(LinearizeError::BudgetTooSmall { .. })));
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(matches!(TokenBudget::new(0, Tokenizer::Default), Err(LinearizeError::ZeroBudget)));
    }
}
