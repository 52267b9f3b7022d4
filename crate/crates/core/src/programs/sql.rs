//! Single-table SQL in the WikiSQL shape: one selected column, an optional
//! aggregate and conjunctive `=`, `>`, `<` conditions.

use super::ParseError;
use crate::numeric::{format_number, parse_numeric};
use crate::table::UnifiedTable;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Max,
    Min,
    Count,
    Sum,
    Avg,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [Aggregate::Max, Aggregate::Min, Aggregate::Count, Aggregate::Sum, Aggregate::Avg];

    pub fn keyword(&self) -> &'static str {
        match self {
            Aggregate::Max => "MAX",
            Aggregate::Min => "MIN",
            Aggregate::Count => "COUNT",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
        }
    }

    fn from_keyword(word: &str) -> Option<Aggregate> {
        Aggregate::ALL.into_iter().find(|a| a.keyword().eq_ignore_ascii_case(word))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Gt,
    Lt,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
        }
    }
}

/// A parsed query whose columns are still names.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlStatement {
    pub select: String,
    pub agg: Option<Aggregate>,
    pub table: Option<String>,
    pub conditions: Vec<(String, CmpOp, String)>,
}

/// A query resolved against a table's columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlQuery {
    pub select_col: usize,
    pub agg: Option<Aggregate>,
    pub conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub col: usize,
    pub op: CmpOp,
    pub value: String,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SqlError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column index {0} out of range")]
    ColumnOutOfRange(usize),
    #[error("table has no header row")]
    NoHeader,
    #[error("non-numeric value {value:?} in column {column:?} under {agg}")]
    NonNumeric { agg: &'static str, column: String, value: String },
    #[error("{0} over zero rows")]
    EmptyAggregate(&'static str),
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn is_plain_number(text: &str) -> bool {
    !text.is_empty()
        && text.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+'))
        && parse_numeric(text).is_some()
}

fn quote_literal(text: &str) -> String {
    if is_plain_number(text) {
        text.to_string()
    } else {
        format!("'{}'", text.replace('\'', "''"))
    }
}

impl fmt::Display for SqlStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match self.agg {
            Some(agg) => write!(f, "{}({})", agg.keyword(), quote_ident(&self.select))?,
            None => f.write_str(&quote_ident(&self.select))?,
        }
        if let Some(table) = &self.table {
            if !table.is_empty() && table.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                write!(f, " FROM {table}")?;
            } else {
                write!(f, " FROM {}", quote_ident(table))?;
            }
        }
        for (i, (col, op, value)) in self.conditions.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write!(f, "{} {} {}", quote_ident(col), op.symbol(), quote_literal(value))?;
        }
        Ok(())
    }
}

/// Parses `SELECT [AGG(]col[)] [FROM t] [WHERE col op literal (AND ...)*]`.
///
/// Column names may be bare (multi-word allowed), double-quoted, backquoted
/// or bracketed. Literals may be single- or double-quoted, or bare text up
/// to the next `AND`.
pub fn parse_sql(text: &str) -> Result<SqlStatement, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if !p.keyword("SELECT") {
        return Err(ParseError::new(p.pos, "expected SELECT"));
    }
    p.skip_ws();
    let agg_start = p.pos;
    let mut agg = None;
    let word = p.peek_word().to_string();
    if let Some(a) = Aggregate::from_keyword(&word) {
        p.pos += word.len();
        p.skip_ws();
        if p.eat('(') {
            agg = Some(a);
        } else {
            p.pos = agg_start;
        }
    }
    p.skip_ws();
    let select = p.column(agg.is_some())?;
    if agg.is_some() {
        p.skip_ws();
        if !p.eat(')') {
            return Err(ParseError::new(p.pos, "expected ')'"));
        }
    }
    p.skip_ws();
    let mut table = None;
    if p.keyword("FROM") {
        p.skip_ws();
        table = Some(p.table_name()?);
        p.skip_ws();
    }
    let mut conditions = Vec::new();
    if p.keyword("WHERE") {
        loop {
            p.skip_ws();
            let col = p.column(false)?;
            p.skip_ws();
            let op = match p.peek() {
                Some('=') => CmpOp::Eq,
                Some('>') => CmpOp::Gt,
                Some('<') => CmpOp::Lt,
                _ => return Err(ParseError::new(p.pos, "expected comparison operator")),
            };
            p.pos += 1;
            p.skip_ws();
            let value = p.literal()?;
            conditions.push((col, op, value));
            p.skip_ws();
            if !p.keyword("AND") {
                break;
            }
        }
    }
    p.skip_ws();
    p.eat(';');
    p.skip_ws();
    if p.pos != text.len() {
        return Err(ParseError::new(p.pos, "unexpected trailing input"));
    }
    Ok(SqlStatement { select, agg, table, conditions })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn peek_word(&self) -> &str {
        let rest = self.rest();
        let len = rest.find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(rest.len());
        &rest[..len]
    }

    /// True if a keyword starts at `at` on word boundaries.
    fn keyword_at(&self, at: usize, kw: &str) -> bool {
        let rest = &self.src[at..];
        let prev_ok = self.src[..at].chars().next_back().is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
        prev_ok
            && rest.len() >= kw.len()
            && rest.is_char_boundary(kw.len())
            && rest[..kw.len()].eq_ignore_ascii_case(kw)
            && rest[kw.len()..].chars().next().is_none_or(|c| !(c.is_alphanumeric() || c == '_'))
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.keyword_at(self.pos, kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn quoted(&mut self, open: char, close: char) -> Result<String, ParseError> {
        let start = self.pos;
        self.pos += open.len_utf8();
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(ParseError::new(start, "unterminated quote"));
            };
            self.pos += c.len_utf8();
            if c == close {
                // doubled closing quote is an escaped quote
                if close != ']' && self.peek() == Some(close) {
                    self.pos += c.len_utf8();
                    out.push(c);
                    continue;
                }
                return Ok(out);
            }
            out.push(c);
        }
    }

    /// Bare text up to the first stop character or keyword, whitespace collapsed.
    fn bare(&mut self, stop_chars: &[char], stop_keywords: &[&str]) -> String {
        let start = self.pos;
        let mut end = start;
        for (i, c) in self.src[start..].char_indices() {
            let at = start + i;
            if stop_chars.contains(&c) || stop_keywords.iter().any(|kw| self.keyword_at(at, kw)) {
                break;
            }
            end = at + c.len_utf8();
        }
        self.pos = end;
        self.src[start..end].split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn column(&mut self, in_agg: bool) -> Result<String, ParseError> {
        let start = self.pos;
        let name = match self.peek() {
            Some('"') => self.quoted('"', '"')?,
            Some('`') => self.quoted('`', '`')?,
            Some('[') => self.quoted('[', ']')?,
            _ => {
                let stops: &[char] = if in_agg { &[')', '=', '<', '>', ';'] } else { &['=', '<', '>', ';'] };
                self.bare(stops, &["FROM", "WHERE", "AND"])
            }
        };
        if name.is_empty() {
            return Err(ParseError::new(start, "expected column name"));
        }
        Ok(name)
    }

    fn table_name(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        let name = match self.peek() {
            Some('"') => self.quoted('"', '"')?,
            Some('`') => self.quoted('`', '`')?,
            Some('[') => self.quoted('[', ']')?,
            _ => {
                let word = self.peek_word().to_string();
                self.pos += word.len();
                word
            }
        };
        if name.is_empty() {
            return Err(ParseError::new(start, "expected table name"));
        }
        Ok(name)
    }

    fn literal(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        let value = match self.peek() {
            Some('\'') => return self.quoted('\'', '\''),
            Some('"') => return self.quoted('"', '"'),
            _ => self.bare(&[';'], &["AND"]),
        };
        if value.is_empty() {
            return Err(ParseError::new(start, "expected literal"));
        }
        Ok(value)
    }
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SqlStatement {
    /// Resolves column names against the table's joined header paths,
    /// case-insensitively. The first matching column wins.
    pub fn resolve(&self, table: &UnifiedTable) -> Result<SqlQuery, SqlError> {
        if table.header_rows == 0 {
            return Err(SqlError::NoHeader);
        }
        let headers: Vec<String> = table.header_paths().iter().map(|h| normalize_name(h)).collect();
        let lookup = |name: &str| {
            let wanted = normalize_name(name);
            headers.iter().position(|h| *h == wanted).ok_or_else(|| SqlError::UnknownColumn(name.to_string()))
        };
        let conditions = self
            .conditions
            .iter()
            .map(|(col, op, value)| Ok(Condition { col: lookup(col)?, op: *op, value: value.clone() }))
            .collect::<Result<_, SqlError>>()?;
        Ok(SqlQuery { select_col: lookup(&self.select)?, agg: self.agg, conditions })
    }
}

impl SqlQuery {
    /// Prints the query with the table's header paths as column names.
    pub fn to_statement(&self, table: &UnifiedTable) -> SqlStatement {
        SqlStatement {
            select: table.header_path(self.select_col),
            agg: self.agg,
            table: Some("t".to_string()),
            conditions: self.conditions.iter().map(|c| (table.header_path(c.col), c.op, c.value.clone())).collect(),
        }
    }
}

fn row_matches(cell: &str, op: CmpOp, literal: &str) -> bool {
    match (parse_numeric(cell), parse_numeric(literal)) {
        (Some(a), Some(b)) => match op {
            CmpOp::Eq => a == b,
            CmpOp::Gt => a > b,
            CmpOp::Lt => a < b,
        },
        _ => op == CmpOp::Eq && cell.trim() == literal,
    }
}

/// Filters body rows by every condition, then projects or aggregates.
pub fn exec_sql(query: &SqlQuery, table: &UnifiedTable) -> Result<String, SqlError> {
    if table.header_rows == 0 {
        return Err(SqlError::NoHeader);
    }
    let width = table.n_cols();
    for col in std::iter::once(query.select_col).chain(query.conditions.iter().map(|c| c.col)) {
        if col >= width {
            return Err(SqlError::ColumnOutOfRange(col));
        }
    }
    let selected: Vec<&str> = table
        .body()
        .iter()
        .filter(|row| query.conditions.iter().all(|c| row_matches(&row[c.col].text, c.op, &c.value)))
        .map(|row| row[query.select_col].text.trim())
        .collect();

    let Some(agg) = query.agg else {
        return Ok(selected.join(", "));
    };
    if agg == Aggregate::Count {
        return Ok(selected.len().to_string());
    }
    if selected.is_empty() {
        return Err(SqlError::EmptyAggregate(agg.keyword()));
    }
    let numbers = selected
        .iter()
        .map(|v| {
            parse_numeric(v).ok_or_else(|| SqlError::NonNumeric {
                agg: agg.keyword(),
                column: table.header_path(query.select_col),
                value: v.to_string(),
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let result = match agg {
        Aggregate::Max => numbers.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregate::Min => numbers.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregate::Sum => numbers.iter().sum(),
        Aggregate::Avg => numbers.iter().sum::<f64>() / numbers.len() as f64,
        Aggregate::Count => unreachable!(),
    };
    Ok(format_number(result))
}

/// Parses, resolves and executes in one call.
pub fn run_sql(text: &str, table: &UnifiedTable) -> Result<String, SqlError> {
    let statement = parse_sql(text)?;
    exec_sql(&statement.resolve(table)?, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn people() -> UnifiedTable {
        UnifiedTable::from_text(
            "people",
            &[
                vec!["Name", "Age", "City"],
                vec!["Ada", "36", "London"],
                vec!["Bob", "12", "Paris"],
                vec!["Cy", "41", "New York"],
            ],
            1,
        )
    }

    #[test]
    fn count_with_condition() {
        assert_eq!(run_sql("SELECT COUNT(Name) WHERE Age > 30", &people()).unwrap(), "2");
    }

    #[test]
    fn no_matching_rows() {
        assert_eq!(run_sql("SELECT Name WHERE Age = 99", &people()).unwrap(), "");
        assert_eq!(run_sql("SELECT COUNT(Name) WHERE Age = 99", &people()).unwrap(), "0");
        assert_eq!(run_sql("SELECT SUM(Age) WHERE Age = 99", &people()), Err(SqlError::EmptyAggregate("SUM")));
    }

    #[test]
    fn max_aggregate() {
        assert_eq!(run_sql("SELECT MAX(Age) FROM people", &people()).unwrap(), "41");
        assert_eq!(run_sql("select avg(age) from t", &people()).unwrap(), "29.666666666666668");
    }

    #[test]
    fn multi_row_projection_joins() {
        assert_eq!(run_sql("SELECT Name WHERE Age < 40", &people()).unwrap(), "Ada, Bob");
    }

    #[test]
    fn string_equality_and_bare_literal() {
        assert_eq!(run_sql("SELECT Age WHERE City = New York", &people()).unwrap(), "41");
        assert_eq!(run_sql("SELECT Age WHERE City = 'Paris' AND Name = Bob", &people()).unwrap(), "12");
        assert_eq!(run_sql("SELECT Age WHERE City = 'paris'", &people()).unwrap(), "");
    }

    #[test]
    fn unknown_column_and_non_numeric() {
        assert_eq!(run_sql("SELECT Height", &people()), Err(SqlError::UnknownColumn("Height".into())));
        assert!(matches!(run_sql("SELECT SUM(City)", &people()), Err(SqlError::NonNumeric { .. })));
    }

    #[test]
    fn multi_word_and_hierarchical_columns() {
        let t = UnifiedTable::from_text(
            "fin",
            &[vec!["", "Q1"], vec!["Item", "2019"], vec!["Rev", "10"], vec!["Cost", "4"]],
            2,
        );
        assert_eq!(run_sql("SELECT \"Q1 / 2019\" WHERE Item = Cost", &t).unwrap(), "4");
        assert_eq!(run_sql("SELECT SUM(q1 / 2019)", &t).unwrap(), "14");
    }

    #[test]
    fn canonical_round_trip() {
        let stmt = parse_sql("select count( Name ) from people where Age > 30 and City = 'New York'").unwrap();
        let printed = stmt.to_string();
        assert_eq!(printed, "SELECT COUNT(\"Name\") FROM people WHERE \"Age\" > 30 AND \"City\" = 'New York'");
        assert_eq!(parse_sql(&printed).unwrap(), stmt);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_sql("DELETE FROM t").unwrap_err().offset, 0);
        assert!(parse_sql("SELECT").is_err());
        assert!(parse_sql("SELECT a WHERE b").is_err());
        assert!(parse_sql("SELECT MAX(a").is_err());
        assert!(parse_sql("SELECT a WHERE b = 'x").is_err());
    }

    #[test]
    fn aggregate_word_as_column() {
        let t = UnifiedTable::from_text("t", &[vec!["count", "x"], vec!["3", "a"]], 1);
        assert_eq!(run_sql("SELECT count WHERE x = a", &t).unwrap(), "3");
    }
}
