//! Answer EM, token F1, execution accuracy and program accuracy.

use crate::ingest::{load_unified, IngestError};
use crate::numeric::{format_number, parse_numeric, parse_numeric_stripped};
use crate::programs::{expr_to_program, Derivation};
use crate::table::{AnswerFormat, QAExample, UnifiedTable};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

/// Relative tolerance for numeric answer comparison.
pub const EXEC_TOLERANCE: f64 = 1e-4;
/// Tolerance for numeric arguments when comparing programs.
pub const PROGRAM_ARG_TOLERANCE: f64 = 1e-9;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, strips punctuation and articles, collapses whitespace.
/// Numeric tokens are canonicalized (`$`, `,`, `%` dropped; `1200.0` -> `1200`).
pub fn normalize_answer(s: &str) -> String {
    if let Some(v) = parse_numeric_stripped(s) {
        return format_number(v);
    }
    let mut out: Vec<String> = Vec::new();
    for token in s.split_whitespace() {
        let bare = token.trim_end_matches(['.', ',', ';', ':', '!', '?']);
        if let Some(v) = parse_numeric_stripped(bare).filter(|_| !bare.is_empty()) {
            out.push(format_number(v));
            continue;
        }
        let cleaned: String = token
            .chars()
            .filter(|c| !(c.is_ascii_punctuation() || is_unicode_punct(*c)))
            .flat_map(char::to_lowercase)
            .collect();
        if let Some(v) = parse_numeric_stripped(&cleaned).filter(|_| !cleaned.is_empty()) {
            out.push(format_number(v));
        } else if !cleaned.is_empty() && !ARTICLES.contains(&cleaned.as_str()) {
            out.push(cleaned);
        }
    }
    out.join(" ")
}

fn is_unicode_punct(c: char) -> bool {
    matches!(c, '‘' | '’' | '“' | '”' | '–' | '—' | '…' | '«' | '»')
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

/// Harmonic mean of multiset token precision and recall.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let p_tokens: Vec<&str> = p.split_whitespace().collect();
    let g_tokens: Vec<&str> = g.split_whitespace().collect();
    match (p_tokens.is_empty(), g_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g_tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in &p_tokens {
        if let Some(n) = counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p_tokens.len() as f64;
    let recall = common as f64 / g_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Why a derivation-based metric scored 0 without a real comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFlag {
    Unparseable,
    ExecutionError,
    MissingPrediction,
    MissingDerivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scored {
    pub score: u8,
    pub flag: Option<ScoreFlag>,
}

impl Scored {
    fn hit(ok: bool) -> Self {
        Scored { score: u8::from(ok), flag: None }
    }

    fn flagged(flag: ScoreFlag) -> Self {
        Scored { score: 0, flag: Some(flag) }
    }
}

/// Compares an executed value with the gold answer: numerically within
/// `1e-4 * max(1, |gold|)` when both are numbers, else by normalized text.
pub fn answers_agree(predicted: &str, gold: &str) -> bool {
    match (parse_numeric(predicted), parse_numeric(gold)) {
        (Some(p), Some(g)) => (p - g).abs() <= EXEC_TOLERANCE * g.abs().max(1.0),
        _ => normalize_answer(predicted) == normalize_answer(gold),
    }
}

/// Executes the predicted derivation and compares with the gold value.
pub fn exec_acc(pred_derivation: &str, gold_value: &str, table: &UnifiedTable) -> Scored {
    let Ok(derivation) = Derivation::parse(pred_derivation) else {
        return Scored::flagged(ScoreFlag::Unparseable);
    };
    match derivation.execute(table) {
        Ok(value) => Scored::hit(answers_agree(&value, gold_value)),
        Err(_) => Scored::flagged(ScoreFlag::ExecutionError),
    }
}

/// Strict structural equality of two derivations after canonicalization.
/// Math expressions are compared as their converted programs.
pub fn program_acc(pred: &str, gold: &str) -> Scored {
    let (Ok(p), Ok(g)) = (Derivation::parse(pred), Derivation::parse(gold)) else {
        return Scored::flagged(ScoreFlag::Unparseable);
    };
    let as_program = |d: &Derivation| match d {
        Derivation::Program(p) => Some(p.clone()),
        Derivation::MathExpr(e) => Some(expr_to_program(e)),
        Derivation::Sql(_) => None,
    };
    let equal = match (&p, &g) {
        (Derivation::Sql(a), Derivation::Sql(b)) => a.to_string().to_lowercase() == b.to_string().to_lowercase(),
        _ => match (as_program(&p), as_program(&g)) {
            (Some(a), Some(b)) => a.same_structure(&b, PROGRAM_ARG_TOLERANCE),
            _ => false,
        },
    };
    Scored::hit(equal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Em,
    F1,
    Exe,
    Prog,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Em, Metric::F1, Metric::Exe, Metric::Prog];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Em => "em",
            Metric::F1 => "f1",
            Metric::Exe => "exe",
            Metric::Prog => "prog",
        }
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| EvalError::UnknownMetric(s.to_string()))
    }
}

/// Parses a comma-separated metric list such as `em,f1`.
pub fn parse_metrics(list: &str) -> Result<Vec<Metric>, EvalError> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Metric = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown metric {0:?}; valid metrics: em, f1, exe, prog")]
    UnknownMetric(String),
    #[error("duplicate prediction id {0:?}")]
    DuplicatePrediction(String),
    #[error("predictions line {line}: {message}")]
    BadPrediction { line: usize, message: String },
    #[error("gold: {0}")]
    Gold(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub em: u8,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exe_acc: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prog_acc: Option<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<ScoreFlag>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exe_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prog_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub predicted: usize,
    pub missing: usize,
    pub unparseable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    pub per_example: Vec<ExampleScore>,
    pub aggregate: Aggregate,
    pub counts: Counts,
}

fn mean<I: Iterator<Item = f64>>(values: I) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    /// Means of the requested metrics over the rows where each is defined.
    pub fn aggregate_of(metrics: &[Metric], rows: &[ExampleScore]) -> Aggregate {
        let want = |m: Metric| metrics.contains(&m);
        Aggregate {
            em: want(Metric::Em).then(|| mean(rows.iter().map(|r| f64::from(r.em)))).flatten(),
            f1: want(Metric::F1).then(|| mean(rows.iter().map(|r| r.f1))).flatten(),
            exe_acc: want(Metric::Exe).then(|| mean(rows.iter().filter_map(|r| r.exe_acc.map(f64::from)))).flatten(),
            prog_acc: want(Metric::Prog).then(|| mean(rows.iter().filter_map(|r| r.prog_acc.map(f64::from)))).flatten(),
        }
    }

    /// Aligned plain-text summary.
    pub fn to_text_table(&self) -> String {
        let mut rows: Vec<(&str, String)> = Vec::new();
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.4}", x));
        for m in &self.metrics {
            let (label, value) = match m {
                Metric::Em => ("EM", self.aggregate.em),
                Metric::F1 => ("F1", self.aggregate.f1),
                Metric::Exe => ("Exe Acc", self.aggregate.exe_acc),
                Metric::Prog => ("Program Acc", self.aggregate.prog_acc),
            };
            rows.push((label, fmt(value)));
        }
        rows.push(("examples", self.counts.total.to_string()));
        rows.push(("missing", self.counts.missing.to_string()));
        rows.push(("unparseable", self.counts.unparseable.to_string()));
        let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (label, value) in rows {
            let _ = writeln!(out, "{label:<width$}  {value:>8}");
        }
        out
    }
}

/// Scores one example against an optional prediction.
pub fn score_example(gold: &QAExample, pred: Option<&Prediction>, metrics: &[Metric]) -> ExampleScore {
    let derivation_metric = gold.answer.format != AnswerFormat::Direct;
    let mut flags = Vec::new();
    let Some(pred) = pred else {
        flags.push(ScoreFlag::MissingPrediction);
        return ExampleScore {
            id: gold.id.clone(),
            em: 0,
            f1: 0.0,
            exe_acc: (metrics.contains(&Metric::Exe) && derivation_metric).then_some(0),
            prog_acc: (metrics.contains(&Metric::Prog) && derivation_metric).then_some(0),
            flags,
        };
    };
    let mut note = |s: Scored| {
        if let Some(f) = s.flag {
            if !flags.contains(&f) {
                flags.push(f);
            }
        }
        s.score
    };
    let pred_derivation = pred.derivation.as_deref().filter(|d| !d.trim().is_empty());
    let exe_acc = (metrics.contains(&Metric::Exe) && derivation_metric).then(|| match pred_derivation {
        Some(d) => note(exec_acc(d, &gold.answer.value, &gold.table)),
        None => note(Scored::flagged(ScoreFlag::MissingDerivation)),
    });
    let prog_acc = (metrics.contains(&Metric::Prog) && derivation_metric).then(|| {
        match (pred_derivation, gold.answer.derivation.as_deref()) {
            (Some(p), Some(g)) => note(program_acc(p, g)),
            _ => note(Scored::flagged(ScoreFlag::MissingDerivation)),
        }
    });
    ExampleScore {
        id: gold.id.clone(),
        em: exact_match(&pred.answer, &gold.answer.value),
        f1: token_f1(&pred.answer, &gold.answer.value),
        exe_acc,
        prog_acc,
        flags,
    }
}

/// Scores predictions keyed by id against gold examples. Missing predictions
/// score 0 on every requested metric.
pub fn evaluate(gold: &[QAExample], preds: &[Prediction], metrics: &[Metric]) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    for p in preds {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.id.clone()));
        }
    }
    let per_example: Vec<ExampleScore> =
        gold.iter().map(|g| score_example(g, by_id.get(g.id.as_str()).copied(), metrics)).collect();
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let counts = Counts {
        total: gold.len(),
        predicted: by_id.keys().filter(|id| gold_ids.contains(*id)).count(),
        missing: per_example.iter().filter(|e| e.flags.contains(&ScoreFlag::MissingPrediction)).count(),
        unparseable: per_example.iter().filter(|e| e.flags.contains(&ScoreFlag::Unparseable)).count(),
    };
    Ok(EvalReport {
        metrics: metrics.to_vec(),
        aggregate: EvalReport::aggregate_of(metrics, &per_example),
        per_example,
        counts,
    })
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, EvalError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::BadPrediction { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Loads both files and evaluates.
pub fn evaluate_dataset(
    preds_path: impl AsRef<Path>,
    gold_path: impl AsRef<Path>,
    metrics: &[Metric],
) -> Result<EvalReport, EvalError> {
    let preds = load_predictions(preds_path)?;
    let gold = load_unified(gold_path)?.collect::<Result<Vec<_>, _>>()?;
    evaluate(&gold, &preds, metrics)
}
