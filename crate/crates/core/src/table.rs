//! Canonical table and QA example model, plus column-header detection for
//! hierarchical tables.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Separator between the levels of a multi-row column header.
pub const HEADER_JOIN: &str = " / ";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TableError {
    #[error("empty table")]
    Empty,
    #[error("invalid merged region {0}: {1}")]
    InvalidRegion(MergedRegion, String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    #[serde(default)]
    pub links: Vec<String>,
    #[serde(default)]
    pub images: Vec<String>,
}

impl Cell {
    pub fn new(text: impl Into<String>) -> Self {
        Cell { text: text.into(), links: Vec::new(), images: Vec::new() }
    }

    pub fn with_links(text: impl Into<String>, links: Vec<String>) -> Self {
        Cell { text: text.into(), links, images: Vec::new() }
    }

    /// Whitespace-only text counts as empty.
    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

impl From<&str> for Cell {
    fn from(text: &str) -> Self {
        Cell::new(text)
    }
}

impl From<String> for Cell {
    fn from(text: String) -> Self {
        Cell::new(text)
    }
}

/// Inclusive rectangle `(r0, c0, r1, c1)`; serialized as a 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct MergedRegion {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl MergedRegion {
    pub fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        MergedRegion { r0, c0, r1, c1 }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.r0..=self.r1).contains(&row) && (self.c0..=self.c1).contains(&col)
    }

    fn overlaps(&self, other: &MergedRegion) -> bool {
        self.r0 <= other.r1 && other.r0 <= self.r1 && self.c0 <= other.c1 && other.c0 <= self.c1
    }

    fn problem(&self, rows: usize, cols: usize) -> Option<String> {
        if self.r0 > self.r1 || self.c0 > self.c1 {
            Some("corners out of order".to_string())
        } else if self.r1 >= rows || self.c1 >= cols {
            Some(format!("outside {rows}x{cols} grid"))
        } else {
            None
        }
    }
}

impl From<[usize; 4]> for MergedRegion {
    fn from(a: [usize; 4]) -> Self {
        MergedRegion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<MergedRegion> for [usize; 4] {
    fn from(m: MergedRegion) -> Self {
        [m.r0, m.c0, m.r1, m.c1]
    }
}

impl fmt::Display for MergedRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.r0, self.c0, self.r1, self.c1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedTable {
    pub id: String,
    pub header_rows: usize,
    pub caption: Option<String>,
    pub cells: Vec<Vec<Cell>>,
    pub merged_regions: Vec<MergedRegion>,
}

impl UnifiedTable {
    /// Builds a rectangular table, padding short rows with empty cells.
    pub fn new(id: impl Into<String>, rows: Vec<Vec<Cell>>, header_rows: usize) -> Self {
        let mut cells = rows;
        pad_rows(&mut cells);
        let header_rows = header_rows.min(cells.len());
        UnifiedTable { id: id.into(), header_rows, caption: None, cells, merged_regions: Vec::new() }
    }

    /// Convenience constructor from plain strings.
    pub fn from_text<S: AsRef<str>>(id: impl Into<String>, rows: &[Vec<S>], header_rows: usize) -> Self {
        let rows = rows.iter().map(|r| r.iter().map(|s| Cell::new(s.as_ref())).collect()).collect();
        UnifiedTable::new(id, rows, header_rows)
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn header(&self) -> &[Vec<Cell>] {
        &self.cells[..self.header_rows.min(self.cells.len())]
    }

    pub fn body(&self) -> &[Vec<Cell>] {
        &self.cells[self.header_rows.min(self.cells.len())..]
    }

    pub fn text(&self, row: usize, col: usize) -> &str {
        self.cells.get(row).and_then(|r| r.get(col)).map_or("", |c| c.text.as_str())
    }

    /// The column's header levels joined top to bottom; empty levels and
    /// consecutive repeats (from merged cells) are dropped.
    pub fn header_path(&self, col: usize) -> String {
        let mut parts: Vec<&str> = Vec::new();
        for row in self.header() {
            let text = row.get(col).map_or("", |c| c.text.trim());
            if !text.is_empty() && parts.last() != Some(&text) {
                parts.push(text);
            }
        }
        parts.join(HEADER_JOIN)
    }

    pub fn header_paths(&self) -> Vec<String> {
        (0..self.n_cols()).map(|c| self.header_path(c)).collect()
    }

    pub fn is_rectangular(&self) -> bool {
        let width = self.n_cols();
        self.cells.iter().all(|r| r.len() == width)
    }
}

fn pad_rows(rows: &mut [Vec<Cell>]) {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    for row in rows.iter_mut() {
        row.resize_with(width, Cell::default);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub uri: String,
    pub caption: String,
}

/// The three table families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    SpreadSheet,
    Encyclopedia,
    Structured,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::SpreadSheet, Category::Encyclopedia, Category::Structured];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::SpreadSheet => "SpreadSheet",
            Category::Encyclopedia => "Encyclopedia",
            Category::Structured => "Structured",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?}; expected SpreadSheet, Encyclopedia or Structured"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerFormat {
    Direct,
    Program,
    MathExpr,
    Sql,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub format: AnswerFormat,
    pub value: String,
    pub derivation: Option<String>,
}

impl Answer {
    pub fn direct(value: impl Into<String>) -> Self {
        Answer { format: AnswerFormat::Direct, value: value.into(), derivation: None }
    }

    pub fn derived(format: AnswerFormat, value: impl Into<String>, derivation: impl Into<String>) -> Self {
        Answer { format, value: value.into(), derivation: Some(derivation.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub dataset: String,
    pub category: Category,
    pub question: String,
    pub table: UnifiedTable,
    pub passages: Vec<Passage>,
    pub images: Vec<ImageRef>,
    pub answer: Answer,
}

/// Outcome of the column-header scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderScan {
    /// 1-based index one past the last row examined.
    pub index: usize,
    /// No fully populated row was found.
    pub degenerate: bool,
}

impl HeaderScan {
    /// Number of leading header rows, falling back to 1 when degenerate.
    pub fn header_rows(&self) -> usize {
        if self.degenerate {
            1
        } else {
            self.index - 1
        }
    }
}

/// Scans rows top-down until one has every column populated.
///
/// The per-column flags are overwritten with each examined row's emptiness
/// pattern, so the scan stops at the first fully non-empty row and reports
/// the row after it (1-based). Rows above that stopping row form the header.
pub fn find_header_rows(table: &UnifiedTable) -> Result<HeaderScan, TableError> {
    scan_header(&table.cells)
}

fn scan_header(cells: &[Vec<Cell>]) -> Result<HeaderScan, TableError> {
    let first = cells.first().ok_or(TableError::Empty)?;
    if first.is_empty() {
        return Err(TableError::Empty);
    }
    let mut populated: Vec<bool> = first.iter().map(|c| !c.is_empty()).collect();
    let mut next = 1;
    while next < cells.len() && populated.contains(&false) {
        for (col, flag) in populated.iter_mut().enumerate() {
            *flag = cells[next].get(col).is_some_and(|c| !c.is_empty());
        }
        next += 1;
    }
    Ok(HeaderScan { index: next + 1, degenerate: populated.contains(&false) })
}

/// Pads a ragged grid, copies each merged region's anchor text into the
/// cells it covers, and detects the header rows.
pub fn normalize_table(
    id: impl Into<String>,
    raw: Vec<Vec<Cell>>,
    merged: Vec<MergedRegion>,
) -> Result<UnifiedTable, TableError> {
    let mut cells = raw;
    pad_rows(&mut cells);
    let rows = cells.len();
    let cols = cells.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(TableError::Empty);
    }
    for (i, region) in merged.iter().enumerate() {
        if let Some(problem) = region.problem(rows, cols) {
            return Err(TableError::InvalidRegion(*region, problem));
        }
        if let Some(other) = merged[..i].iter().find(|o| o.overlaps(region)) {
            return Err(TableError::InvalidRegion(*region, format!("overlaps {other}")));
        }
    }
    for region in &merged {
        let anchor = cells[region.r0][region.c0].text.clone();
        for row in &mut cells[region.r0..=region.r1] {
            for cell in &mut row[region.c0..=region.c1] {
                cell.text.clone_from(&anchor);
            }
        }
    }
    let header_rows = scan_header(&cells)?.header_rows();
    Ok(UnifiedTable { id: id.into(), header_rows, caption: None, cells, merged_regions: merged })
}

/// Lists every invariant the example breaks; an empty list means valid.
pub fn validate_example(ex: &QAExample) -> Vec<String> {
    let mut out = Vec::new();
    if ex.question.trim().is_empty() {
        out.push("empty question".to_string());
    }
    let table = &ex.table;
    if table.n_rows() == 0 || table.n_cols() == 0 {
        out.push("empty table".to_string());
    }
    if !table.is_rectangular() {
        out.push("non-rectangular grid".to_string());
    }
    if table.header_rows > table.n_rows() {
        out.push(format!("header_rows {} exceeds row count {}", table.header_rows, table.n_rows()));
    }
    for (i, region) in table.merged_regions.iter().enumerate() {
        if let Some(problem) = region.problem(table.n_rows(), table.n_cols()) {
            out.push(format!("merged region {region} {problem}"));
        } else if let Some(other) = table.merged_regions[..i].iter().find(|o| o.overlaps(region)) {
            out.push(format!("merged region {region} overlaps {other}"));
        }
    }

    let passage_ids: HashSet<&str> = ex.passages.iter().map(|p| p.id.as_str()).collect();
    let image_ids: HashSet<&str> = ex.images.iter().map(|i| i.id.as_str()).collect();
    let mut reported: HashSet<String> = HashSet::new();
    for cell in table.cells.iter().flatten() {
        for link in &cell.links {
            if !passage_ids.contains(link.as_str()) {
                let msg = format!("dangling passage id {link}");
                if reported.insert(msg.clone()) {
                    out.push(msg);
                }
            }
        }
        for image in &cell.images {
            if !image_ids.contains(image.as_str()) {
                let msg = format!("dangling image id {image}");
                if reported.insert(msg.clone()) {
                    out.push(msg);
                }
            }
        }
    }

    let has_derivation = ex.answer.derivation.as_deref().is_some_and(|d| !d.trim().is_empty());
    match (ex.answer.format, has_derivation) {
        (AnswerFormat::Direct, true) => out.push("unexpected derivation for Direct answer".to_string()),
        (AnswerFormat::Direct, false) | (_, true) => {}
        (_, false) => out.push("missing derivation".to_string()),
    }
    out
}
