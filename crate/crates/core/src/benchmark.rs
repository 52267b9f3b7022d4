//! Long-context benchmark assembly: per-category length filters, seeded
//! quota sampling and a token statistics report.

use crate::ingest::{load_unified, IngestError};
use crate::linearize::{count_tokens, to_markdown, LinearizeError, Tokenizer};
use crate::table::{Category, QAExample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("need {need}, have {have}")]
    Shortfall { need: usize, have: usize },
    #[error("{category}: need {need}, have {have}")]
    CategoryShortfall { category: Category, need: usize, have: usize },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("example {id} has category {found}, expected {expected}")]
    WrongCategory { id: String, found: Category, expected: Category },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Tokenizer(#[from] LinearizeError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Token-count bounds on a category's tables; both ends are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LengthBounds {
    /// Keep tables with more than this many tokens.
    pub min: Option<usize>,
    /// Keep tables with fewer than this many tokens.
    pub max: Option<usize>,
}

impl LengthBounds {
    pub fn admits(&self, tokens: usize) -> bool {
        self.min.is_none_or(|m| tokens > m) && self.max.is_none_or(|m| tokens < m)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub quotas: BTreeMap<Category, usize>,
    pub bounds: BTreeMap<Category, LengthBounds>,
    pub seed: u64,
    pub tokenizer: Tokenizer,
    /// Files whose examples are split by their own category.
    pub inputs: Vec<PathBuf>,
    /// Files feeding one category only.
    pub category_inputs: BTreeMap<Category, Vec<PathBuf>>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let quotas =
            BTreeMap::from([(Category::SpreadSheet, 300), (Category::Encyclopedia, 300), (Category::Structured, 400)]);
        let bounds = BTreeMap::from([
            (Category::SpreadSheet, LengthBounds::default()),
            (Category::Encyclopedia, LengthBounds { min: None, max: Some(6000) }),
            (Category::Structured, LengthBounds { min: Some(2000), max: None }),
        ]);
        BenchConfig {
            quotas,
            bounds,
            seed: 0,
            tokenizer: Tokenizer::Default,
            inputs: Vec::new(),
            category_inputs: BTreeMap::new(),
            output: None,
            report: None,
        }
    }
}

impl BenchConfig {
    pub fn total(&self) -> usize {
        self.quotas.values().sum()
    }

    pub fn bounds(&self, category: Category) -> LengthBounds {
        self.bounds.get(&category).copied().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        for (category, b) in &self.bounds {
            if let (Some(lo), Some(hi)) = (b.min, b.max) {
                if lo >= hi {
                    return Err(BenchError::Invalid(format!(
                        "{category}: min_table_tokens {lo} must be below max_table_tokens {hi}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines with optional `[Category]` sections.
    /// Paths are resolved against `base_dir`. Unset keys keep defaults.
    ///
    /// Top level: `seed`, `tokenizer` (`default` or a vocabulary path),
    /// `input` (comma-separated), `output`, `report`. Per section: `quota`,
    /// `min_table_tokens`, `max_table_tokens` (`none` clears), `input`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, BenchError> {
        let mut cfg = BenchConfig::default();
        let mut section: Option<Category> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| BenchError::Config { line: line_no, message };
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().parse().map_err(err)?);
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = |v: &str| {
                v.parse::<usize>().map_err(|_| err(format!("{key}: expected a non-negative integer, got {v:?}")))
            };
            let optional = |v: &str| if v.eq_ignore_ascii_case("none") { Ok(None) } else { number(v).map(Some) };
            let paths = |v: &str| -> Vec<PathBuf> {
                v.split(',').map(str::trim).filter(|p| !p.is_empty()).map(|p| base_dir.join(p)).collect()
            };
            match (section, key) {
                (None, "seed") => {
                    cfg.seed = value.parse().map_err(|_| err(format!("seed: expected an integer, got {value:?}")))?
                }
                (None, "tokenizer") => {
                    cfg.tokenizer =
                        if value == "default" { Tokenizer::Default } else { Tokenizer::plugged(base_dir.join(value))? }
                }
                (None, "input") => cfg.inputs.extend(paths(value)),
                (None, "output") => cfg.output = Some(base_dir.join(value)),
                (None, "report") => cfg.report = Some(base_dir.join(value)),
                (Some(c), "quota") => {
                    cfg.quotas.insert(c, number(value)?);
                }
                (Some(c), "min_table_tokens") => cfg.bounds.entry(c).or_default().min = optional(value)?,
                (Some(c), "max_table_tokens") => cfg.bounds.entry(c).or_default().max = optional(value)?,
                (Some(c), "input") => cfg.category_inputs.entry(c).or_default().extend(paths(value)),
                (_, other) => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
        BenchConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Reads the configured input files into per-category pools.
    pub fn load_pools(&self) -> Result<BTreeMap<Category, Vec<QAExample>>, BenchError> {
        let mut pools: BTreeMap<Category, Vec<QAExample>> = BTreeMap::new();
        for path in &self.inputs {
            for ex in load_unified(path)? {
                let ex = ex?;
                pools.entry(ex.category).or_default().push(ex);
            }
        }
        for (&category, paths) in &self.category_inputs {
            for path in paths {
                for ex in load_unified(path)? {
                    let ex = ex?;
                    if ex.category != category {
                        return Err(BenchError::WrongCategory { id: ex.id, found: ex.category, expected: category });
                    }
                    pools.entry(category).or_default().push(ex);
                }
            }
        }
        Ok(pools)
    }
}

/// Token count of the table's markdown rendering.
pub fn table_tokens(ex: &QAExample, tokenizer: &Tokenizer) -> usize {
    count_tokens(&to_markdown(&ex.table), tokenizer)
}

pub fn filter_by_length<'a>(
    examples: impl IntoIterator<Item = QAExample> + 'a,
    bounds: LengthBounds,
    tokenizer: &'a Tokenizer,
) -> impl Iterator<Item = QAExample> + 'a {
    examples
        .into_iter()
        .filter(move |ex| bounds == LengthBounds::default() || bounds.admits(table_tokens(ex, tokenizer)))
}

/// Uniform sample without replacement, in original order.
pub fn sample_quota<T>(candidates: Vec<T>, quota: usize, seed: u64) -> Result<Vec<T>, BenchError> {
    sample_with(candidates, quota, ChaCha8Rng::seed_from_u64(seed))
}

fn sample_with<T>(candidates: Vec<T>, quota: usize, mut rng: ChaCha8Rng) -> Result<Vec<T>, BenchError> {
    if candidates.len() < quota {
        return Err(BenchError::Shortfall { need: quota, have: candidates.len() });
    }
    let mut chosen = rand::seq::index::sample(&mut rng, candidates.len(), quota).into_vec();
    chosen.sort_unstable();
    let mut keep = vec![false; candidates.len()];
    for i in chosen {
        keep[i] = true;
    }
    Ok(candidates.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStats {
    pub category: Category,
    pub questions: usize,
    pub mean_table_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    /// Tokenizer the counts were produced with.
    pub tokenizer: String,
    pub seed: u64,
    pub categories: Vec<CategoryStats>,
    pub total_questions: usize,
    pub mean_table_tokens: f64,
}

impl StatsReport {
    pub fn compute(examples: &[QAExample], tokenizer: &Tokenizer, seed: u64) -> Self {
        let mut categories = Vec::new();
        let mut all = 0usize;
        for category in Category::ALL {
            let counts: Vec<usize> =
                examples.iter().filter(|e| e.category == category).map(|e| table_tokens(e, tokenizer)).collect();
            if counts.is_empty() {
                continue;
            }
            all += counts.iter().sum::<usize>();
            categories.push(CategoryStats {
                category,
                questions: counts.len(),
                mean_table_tokens: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            });
        }
        let mean = if examples.is_empty() { 0.0 } else { all as f64 / examples.len() as f64 };
        StatsReport {
            tokenizer: tokenizer.to_string(),
            seed,
            categories,
            total_questions: examples.len(),
            mean_table_tokens: mean,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    /// Ordered SpreadSheet, Encyclopedia, Structured.
    pub examples: Vec<QAExample>,
    pub report: StatsReport,
}

/// Filters and samples each category's pool concurrently, then concatenates
/// in category order. Each category draws from its own RNG stream.
pub fn assemble(cfg: &BenchConfig, mut pools: BTreeMap<Category, Vec<QAExample>>) -> Result<Benchmark, BenchError> {
    cfg.validate()?;
    let jobs: Vec<(Category, usize, Vec<QAExample>)> = Category::ALL
        .into_iter()
        .filter_map(|c| cfg.quotas.get(&c).map(|&q| (c, q, pools.remove(&c).unwrap_or_default())))
        .collect();
    let results: Vec<Result<Vec<QAExample>, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(category, quota, pool)| {
                s.spawn(move || {
                    let kept: Vec<QAExample> = filter_by_length(pool, cfg.bounds(category), &cfg.tokenizer).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(category as u64);
                    sample_with(kept, quota, rng).map_err(|e| match e {
                        BenchError::Shortfall { need, have } => BenchError::CategoryShortfall { category, need, have },
                        other => other,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling thread panicked")).collect()
    });
    let mut examples = Vec::with_capacity(cfg.total());
    for r in results {
        examples.extend(r?);
    }
    let report = StatsReport::compute(&examples, &cfg.tokenizer, cfg.seed);
    Ok(Benchmark { examples, report })
}
