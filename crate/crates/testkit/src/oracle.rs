//! Reference implementations written directly from the behavioural
//! definitions, for comparison against the library.

use regex::Regex;
use std::sync::LazyLock;
use tqk_core::programs::{Aggregate, CmpOp, SqlQuery};

/// Outcome of the column-header finder pseudocode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderTrace {
    /// The returned `n` (1-based).
    pub n: usize,
    /// Every flag was TRUE when the loop exited.
    pub found_full_row: bool,
}

impl HeaderTrace {
    /// Header row count with the single-row fallback when no row was full.
    pub fn header_rows(&self) -> usize {
        if self.found_full_row {
            self.n - 1
        } else {
            1
        }
    }
}

/// Line-by-line transcription of the column-header finder with 1-based
/// indices. A cell is empty when its text is blank.
#[allow(clippy::needless_range_loop, clippy::needless_bool_assign)]
pub fn header_finder(table: &[Vec<String>]) -> HeaderTrace {
    let big_n = table.len();
    let k = table[0].len();
    let is_empty = |row: usize, col: usize| table[row - 1].get(col - 1).is_none_or(|s| s.trim().is_empty());
    let mut non_empty_cells = vec![false; k + 1];
    for i in 1..=k {
        if !is_empty(1, i) {
            non_empty_cells[i] = true;
        } else {
            non_empty_cells[i] = false;
        }
    }
    let mut n = 2;
    while n <= big_n && non_empty_cells[1..].contains(&false) {
        for i in 1..=k {
            if !is_empty(n, i) {
                non_empty_cells[i] = true;
            } else {
                non_empty_cells[i] = false;
            }
        }
        n += 1;
    }
    HeaderTrace { n, found_full_row: !non_empty_cells[1..].contains(&false) }
}

/// Numbers as produced by the generators: optional minus, digits, optional
/// fraction. Anything else is text.
fn number(s: &str) -> Option<f64> {
    let s = s.trim();
    let digits = s.strip_prefix('-').unwrap_or(s);
    let ok = !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        && digits.chars().filter(|&c| c == '.').count() <= 1
        && digits.chars().any(|c| c.is_ascii_digit());
    if ok {
        s.parse().ok()
    } else {
        None
    }
}

fn show(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Brute-force SQL: keep the rows satisfying every condition, then fold the
/// selected column. `None` when the query must fail.
pub fn brute_sql(body: &[Vec<String>], q: &SqlQuery) -> Option<String> {
    let mut kept: Vec<String> = Vec::new();
    for row in body {
        let mut all = true;
        for c in &q.conditions {
            let cell = row[c.col].trim();
            let holds = match (number(cell), number(&c.value)) {
                (Some(a), Some(b)) => match c.op {
                    CmpOp::Eq => a == b,
                    CmpOp::Gt => a > b,
                    CmpOp::Lt => a < b,
                },
                _ => c.op == CmpOp::Eq && cell == c.value,
            };
            if !holds {
                all = false;
                break;
            }
        }
        if all {
            kept.push(row[q.select_col].trim().to_string());
        }
    }
    let Some(agg) = q.agg else {
        return Some(kept.join(", "));
    };
    if agg == Aggregate::Count {
        return Some(kept.len().to_string());
    }
    if kept.is_empty() {
        return None;
    }
    let mut values = Vec::new();
    for v in &kept {
        values.push(number(v)?);
    }
    let mut acc = values[0];
    for &v in &values[1..] {
        acc = match agg {
            Aggregate::Max => {
                if v > acc {
                    v
                } else {
                    acc
                }
            }
            Aggregate::Min => {
                if v < acc {
                    v
                } else {
                    acc
                }
            }
            _ => acc + v,
        };
    }
    if agg == Aggregate::Avg {
        acc /= values.len() as f64;
    }
    Some(show(acc))
}

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{Alphabetic}\p{N}]+|\S").expect("valid regex"));

/// Default token count: alphanumeric runs, plus every other visible character.
pub fn regex_tokens(text: &str) -> usize {
    TOKEN.find_iter(text).count()
}
