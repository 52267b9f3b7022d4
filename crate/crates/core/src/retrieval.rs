//! Row, column and cell retrieval over a QA example's table, with a
//! pluggable scorer (BM25 by default) and recall@k.

use crate::linearize::flatten_row;
use crate::table::QAExample;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("nothing to index")]
    NothingToIndex,
    #[error("no gold units")]
    NoGold,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid retriever config: {0}")]
    Config(String),
    #[error("score file line {line}: {message}")]
    ScoreFile { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Row,
    Column,
    Cell,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "row" => Ok(Granularity::Row),
            "column" | "col" => Ok(Granularity::Column),
            "cell" => Ok(Granularity::Cell),
            other => Err(format!("unknown granularity {other:?}; expected row, column or cell")),
        }
    }
}

/// Where a unit came from. Row and cell indices are absolute grid rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locator {
    Row(usize),
    Column(usize),
    Cell(usize, usize),
    Passage(String),
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::Row(r) => write!(f, "row:{r}"),
            Locator::Column(c) => write!(f, "col:{c}"),
            Locator::Cell(r, c) => write!(f, "cell:{r}:{c}"),
            Locator::Passage(id) => write!(f, "passage:{id}"),
        }
    }
}

impl FromStr for Locator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid locator {s:?}");
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        match kind {
            "row" => Ok(Locator::Row(num(rest)?)),
            "col" => Ok(Locator::Column(num(rest)?)),
            "cell" => {
                let (r, c) = rest.split_once(':').ok_or_else(bad)?;
                Ok(Locator::Cell(num(r)?, num(c)?))
            }
            "passage" => Ok(Locator::Passage(rest.to_string())),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Locator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Locator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalUnit {
    pub locator: Locator,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverConfig {
    pub granularity: Granularity,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub include_passages: bool,
}

fn default_k1() -> f64 {
    1.2
}

fn default_b() -> f64 {
    0.75
}

fn default_top_k() -> usize {
    5
}

impl RetrieverConfig {
    pub fn new(granularity: Granularity, top_k: usize) -> Self {
        RetrieverConfig { granularity, k1: default_k1(), b: default_b(), top_k, include_passages: false }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k1.is_nan() || self.k1 <= 0.0 {
            return Err(RetrievalError::Config(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::Config(format!("b must be in [0, 1], got {}", self.b)));
        }
        if self.top_k == 0 {
            return Err(RetrievalError::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Splits the example into retrieval units, in locator order. Empty cells are
/// skipped at cell granularity.
pub fn extract_units(ex: &QAExample, granularity: Granularity, include_passages: bool) -> Vec<RetrievalUnit> {
    let table = &ex.table;
    let first_body = table.header_rows.min(table.n_rows());
    let mut units = Vec::new();
    match granularity {
        Granularity::Row => {
            for i in 0..table.body().len() {
                units.push(RetrievalUnit { locator: Locator::Row(first_body + i), text: flatten_row(table, i) });
            }
        }
        Granularity::Column => {
            for c in 0..table.n_cols() {
                let values: Vec<&str> = table.body().iter().map(|r| r[c].text.trim()).collect();
                units.push(RetrievalUnit {
                    locator: Locator::Column(c),
                    text: format!("{}: {}", table.header_path(c), values.join("; ")),
                });
            }
        }
        Granularity::Cell => {
            for (i, row) in table.body().iter().enumerate() {
                for (c, cell) in row.iter().enumerate() {
                    if cell.is_empty() {
                        continue;
                    }
                    units.push(RetrievalUnit {
                        locator: Locator::Cell(first_body + i, c),
                        text: format!("{}: {}", table.header_path(c), cell.text.trim()),
                    });
                }
            }
        }
    }
    if include_passages {
        for p in &ex.passages {
            units.push(RetrievalUnit {
                locator: Locator::Passage(p.id.clone()),
                text: format!("{}: {}", p.title, p.text),
            });
        }
    }
    units
}

/// Lowercased alphanumeric runs; no stemming.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Scores every unit of one example for a query.
pub trait Scorer: Send + Sync {
    fn score(&self, example_id: &str, query: &str, units: &[RetrievalUnit]) -> Vec<f64>;
}

/// Okapi BM25 with a non-negative idf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Bm25 { k1: 1.2, b: 0.75 }
    }
}

impl Bm25 {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, positive for every df.
    pub fn idf(df: usize, total: usize) -> f64 {
        let (n, df) = (total as f64, df as f64);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

impl Scorer for Bm25 {
    fn score(&self, _example_id: &str, query: &str, units: &[RetrievalUnit]) -> Vec<f64> {
        let docs: Vec<HashMap<String, usize>> = units
            .iter()
            .map(|u| {
                let mut tf = HashMap::new();
                for t in terms(&u.text) {
                    *tf.entry(t).or_insert(0) += 1;
                }
                tf
            })
            .collect();
        let lengths: Vec<f64> = docs.iter().map(|d| d.values().sum::<usize>() as f64).collect();
        let avg_len = (lengths.iter().sum::<f64>() / lengths.len().max(1) as f64).max(f64::MIN_POSITIVE);

        let query_terms: Vec<String> = {
            let mut seen = HashSet::new();
            terms(query).into_iter().filter(|t| seen.insert(t.clone())).collect()
        };
        let idf: Vec<f64> = query_terms
            .iter()
            .map(|t| Bm25::idf(docs.iter().filter(|d| d.contains_key(t)).count(), docs.len()))
            .collect();

        docs.iter()
            .zip(&lengths)
            .map(|(doc, len)| {
                query_terms
                    .iter()
                    .zip(&idf)
                    .filter_map(|(t, w)| doc.get(t).map(|tf| (*tf as f64, w)))
                    .map(|(tf, w)| w * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * len / avg_len)))
                    .sum()
            })
            .collect()
    }
}

/// Gives every unit the same score.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantScorer;

impl Scorer for ConstantScorer {
    fn score(&self, _: &str, _: &str, units: &[RetrievalUnit]) -> Vec<f64> {
        vec![0.0; units.len()]
    }
}

/// Scores loaded from a JSONL file of `{"id": ..., "scores": {locator: score}}`.
/// Units without a score get 0.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    scores: HashMap<String, HashMap<Locator, f64>>,
}

#[derive(Deserialize)]
struct ScoreLine {
    id: String,
    scores: HashMap<String, f64>,
}

impl ExternalScores {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let file = std::fs::File::open(path)?;
        let mut scores = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| RetrievalError::ScoreFile { line: i + 1, message };
            let parsed: ScoreLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let by_locator = parsed
                .scores
                .into_iter()
                .map(|(k, v)| Ok((k.parse::<Locator>().map_err(err)?, v)))
                .collect::<Result<HashMap<_, _>, RetrievalError>>()?;
            scores.insert(parsed.id, by_locator);
        }
        Ok(ExternalScores { scores })
    }
}

impl Scorer for ExternalScores {
    fn score(&self, example_id: &str, _: &str, units: &[RetrievalUnit]) -> Vec<f64> {
        let table = self.scores.get(example_id);
        units.iter().map(|u| table.and_then(|t| t.get(&u.locator)).copied().unwrap_or(0.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub unit: RetrievalUnit,
    pub score: f64,
}

/// Ranks units by descending score; ties keep locator order. Returns
/// `min(top_k, units)` results.
pub fn rank(
    scorer: &dyn Scorer,
    example_id: &str,
    query: &str,
    units: Vec<RetrievalUnit>,
    top_k: usize,
) -> Result<Vec<Ranked>, RetrievalError> {
    if units.is_empty() {
        return Err(RetrievalError::NothingToIndex);
    }
    let scores = scorer.score(example_id, query, &units);
    let mut ranked: Vec<Ranked> = units.into_iter().zip(scores).map(|(unit, score)| Ranked { unit, score }).collect();
    // stable sort keeps extraction (locator) order among equal scores
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(top_k);
    Ok(ranked)
}

/// BM25 retrieval over the example's units.
pub fn retrieve(ex: &QAExample, cfg: &RetrieverConfig, question: &str) -> Result<Vec<Ranked>, RetrievalError> {
    cfg.validate()?;
    let units = extract_units(ex, cfg.granularity, cfg.include_passages);
    rank(&Bm25 { k1: cfg.k1, b: cfg.b }, &ex.id, question, units, cfg.top_k)
}

/// Fraction of gold locators found in the first `k` results.
pub fn recall_at_k(ranked: &[Locator], gold: &HashSet<Locator>, k: usize) -> Result<f64, RetrievalError> {
    if gold.is_empty() {
        return Err(RetrievalError::NoGold);
    }
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let hits = ranked.iter().take(k).collect::<HashSet<_>>().into_iter().filter(|l| gold.contains(l)).count();
    Ok(hits as f64 / gold.len() as f64)
}
