//! Unified JSONL I/O, delimited-text import and dataset adapters.

use crate::linearize::to_markdown;
use crate::numeric::format_number;
use crate::programs::{expr_to_program, parse_math_expr, parse_program, parse_sql, Aggregate, CmpOp, SqlStatement};
use crate::table::{
    find_header_rows, normalize_table, validate_example, Answer, AnswerFormat, Category, Cell, ImageRef, MergedRegion,
    Passage, QAExample, TableError, UnifiedTable,
};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Names accepted by [`convert`].
pub const ADAPTERS: [&str; 10] =
    ["wikisql", "wtq", "sqa", "finqa", "tatqa", "hitab", "multihiertt", "hybridqa", "multimodalqa", "delimited"];

const REQUIRED_FIELDS: [&str; 8] = ["id", "dataset", "category", "question", "table", "passages", "images", "answer"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unknown adapter {name:?}; registered adapters: {}", ADAPTERS.join(", "))]
    UnknownAdapter { name: String },
    #[error("record {record}: {message}")]
    Source { record: usize, message: String },
    #[error("row {row}: {message}")]
    Delimited { row: usize, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("example {id}: {}", problems.join("; "))]
    Invalid { id: String, problems: Vec<String> },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

/// Parses one unified JSONL line and validates it.
pub fn parse_unified_line(text: &str) -> Result<QAExample, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    if let Some(missing) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(format!("missing field {missing}"));
    }
    let ex: QAExample = serde_json::from_value(value).map_err(|e| format!("schema violation: {e}"))?;
    let problems = validate_example(&ex);
    if !problems.is_empty() {
        return Err(format!("invalid example: {}", problems.join("; ")));
    }
    Ok(ex)
}

/// Streams validated examples from a unified JSONL file. Blank lines are
/// skipped; errors carry 1-based line numbers.
pub fn load_unified(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<QAExample, IngestError>>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let path = path.to_path_buf();
    Ok(BufReader::new(file).lines().enumerate().filter_map(move |(i, line)| {
        let line_no = i + 1;
        let text = match line {
            Ok(text) => text,
            Err(source) => return Some(Err(IngestError::Io { path: path.clone(), source })),
        };
        if text.trim().is_empty() {
            return None;
        }
        Some(parse_unified_line(&text).map_err(|message| IngestError::Line { line: line_no, message }))
    }))
}

/// Serializes one example as a single JSON line (no trailing newline).
pub fn to_unified_line(ex: &QAExample) -> String {
    serde_json::to_string(ex).expect("QAExample serializes")
}

pub fn write_unified<'a, W: Write>(
    out: &mut W,
    examples: impl IntoIterator<Item = &'a QAExample>,
) -> io::Result<usize> {
    let mut count = 0;
    for ex in examples {
        out.write_all(to_unified_line(ex).as_bytes())?;
        out.write_all(b"\n")?;
        count += 1;
    }
    Ok(count)
}

pub fn save_unified<'a>(
    examples: impl IntoIterator<Item = &'a QAExample>,
    path: impl AsRef<Path>,
) -> Result<usize, IngestError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let count = write_unified(&mut out, examples).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))?;
    Ok(count)
}

/// Strict RFC 4180-style parsing: quotes only open a field, `""` escapes a
/// quote inside one, and a closing quote must be followed by a delimiter or
/// line end. Blank lines are skipped. Rows are numbered from 1.
pub fn parse_delimited(text: &str, delimiter: char) -> Result<Vec<Vec<String>>, IngestError> {
    let mut rows = Vec::new();
    let mut row: Vec<String> = Vec::new();
    let mut field = String::new();
    let mut row_no = 1;
    let mut quoted = false;
    let mut chars = text.chars().peekable();
    let err = |row: usize, message: &str| IngestError::Delimited { row, message: message.to_string() };

    loop {
        // start of a field
        if chars.peek() == Some(&'"') {
            chars.next();
            quoted = true;
            let start_row = row_no;
            loop {
                match chars.next() {
                    None => return Err(err(start_row, "unterminated quoted field")),
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                        field.push('"');
                    }
                    Some('"') => break,
                    Some(c) => {
                        if c == '\n' {
                            row_no += 1;
                        }
                        field.push(c);
                    }
                }
            }
            match chars.peek() {
                None | Some('\n') | Some('\r') => {}
                Some(&c) if c == delimiter => {}
                Some(_) => return Err(err(row_no, "unexpected character after closing quote")),
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == delimiter || c == '\n' || c == '\r' {
                    break;
                }
                if c == '"' {
                    return Err(err(row_no, "quote inside unquoted field"));
                }
                field.push(c);
                chars.next();
            }
        }
        row.push(std::mem::take(&mut field));
        match chars.next() {
            Some(c) if c == delimiter => continue,
            Some('\r') => {
                if chars.next_if_eq(&'\n').is_none() {
                    return Err(err(row_no, "bare carriage return"));
                }
            }
            Some(_) | None => {}
        }
        let blank = row.len() == 1 && row[0].is_empty() && !quoted;
        if !blank {
            rows.push(std::mem::take(&mut row));
        }
        row.clear();
        quoted = false;
        row_no += 1;
        if chars.peek().is_none() {
            break;
        }
    }
    Ok(rows)
}

/// Builds a table from delimited text. Without a header flag the header
/// rows are detected from the grid.
pub fn table_from_delimited(
    id: impl Into<String>,
    text: &str,
    delimiter: char,
    has_header: bool,
) -> Result<UnifiedTable, IngestError> {
    let rows = parse_delimited(text, delimiter)?;
    let cells: Vec<Vec<Cell>> = rows.into_iter().map(|r| r.into_iter().map(Cell::from).collect()).collect();
    let mut table = normalize_table(id, cells, Vec::new())?;
    if has_header {
        table.header_rows = 1;
    }
    Ok(table)
}

pub fn import_delimited(
    path: impl AsRef<Path>,
    delimiter: char,
    has_header: bool,
) -> Result<UnifiedTable, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let id = path.file_stem().map_or_else(|| "table".to_string(), |s| s.to_string_lossy().into_owned());
    table_from_delimited(id, &text, delimiter, has_header)
}

/// Renders the grid as delimited text, quoting fields only when needed.
pub fn to_delimited(table: &UnifiedTable, delimiter: char) -> String {
    let mut out = String::new();
    for row in &table.cells {
        let fields: Vec<String> = row
            .iter()
            .map(|cell| {
                let t = &cell.text;
                if t.contains(delimiter) || t.contains(['"', '\n', '\r']) {
                    format!("\"{}\"", t.replace('"', "\"\""))
                } else {
                    t.clone()
                }
            })
            .collect();
        if fields.len() == 1 && fields[0].is_empty() {
            out.push_str("\"\"\n");
            continue;
        }
        out.push_str(&fields.join(&delimiter.to_string()));
        out.push('\n');
    }
    out
}

/// Picks `,` or `\t` from a file name, defaulting to comma.
pub fn delimiter_for(name: &str) -> char {
    if name.to_ascii_lowercase().ends_with(".tsv") {
        '\t'
    } else {
        ','
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdapterSpec {
    pub name: String,
    pub options: BTreeMap<String, String>,
}

impl AdapterSpec {
    pub fn new(name: impl Into<String>) -> Result<Self, IngestError> {
        let name = name.into();
        if !ADAPTERS.contains(&name.as_str()) {
            return Err(IngestError::UnknownAdapter { name });
        }
        Ok(AdapterSpec { name, options: BTreeMap::new() })
    }

    pub fn with_option(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.options.insert(key.into(), value.into());
        self
    }

    fn option(&self, key: &str) -> Option<&str> {
        self.options.get(key).map(String::as_str)
    }
}

/// Converts a raw dataset file and writes unified JSONL.
pub fn convert(adapter: &AdapterSpec, input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<usize, IngestError> {
    let input = input.as_ref();
    let text = std::fs::read_to_string(input).map_err(io_err(input))?;
    let examples = if adapter.name == "delimited" {
        let delim = adapter
            .option("delimiter")
            .and_then(|d| if d == "\\t" || d == "tab" { Some('\t') } else { d.chars().next() })
            .unwrap_or_else(|| delimiter_for(&input.to_string_lossy()));
        let stem = input.file_stem().map_or_else(|| "table".to_string(), |s| s.to_string_lossy().into_owned());
        vec![convert_delimited(adapter, &stem, &text, delim)?]
    } else {
        convert_text(adapter, &text)?
    };
    save_unified(&examples, output)
}

/// Converts raw records given as a JSON array or as JSON lines.
pub fn convert_text(adapter: &AdapterSpec, text: &str) -> Result<Vec<QAExample>, IngestError> {
    let records = read_records(text)?;
    convert_records(adapter, &records)
}

fn read_records(text: &str) -> Result<Vec<Value>, IngestError> {
    if text.trim_start().starts_with('[') {
        let value: Value =
            serde_json::from_str(text).map_err(|e| IngestError::Line { line: e.line(), message: e.to_string() })?;
        return Ok(value.as_array().cloned().unwrap_or_default());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| IngestError::Line { line: i + 1, message: format!("malformed JSON: {e}") })
        })
        .collect()
}

pub fn convert_records(adapter: &AdapterSpec, records: &[Value]) -> Result<Vec<QAExample>, IngestError> {
    let convert_one: fn(&Value, usize) -> Result<Vec<QAExample>, String> = match adapter.name.as_str() {
        "wikisql" => wikisql,
        "wtq" => |r, i| grid_direct(r, i, "wtq"),
        "sqa" => |r, i| grid_direct(r, i, "sqa"),
        "finqa" => finqa,
        "tatqa" => tatqa,
        "hitab" => hitab,
        "multihiertt" => multihiertt,
        "hybridqa" => hybridqa,
        "multimodalqa" => multimodalqa,
        "delimited" => {
            return Err(IngestError::Source { record: 1, message: "delimited input is not JSON records".into() })
        }
        other => return Err(IngestError::UnknownAdapter { name: other.to_string() }),
    };
    let mut out = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let record_no = i + 1;
        let examples = convert_one(record, i).map_err(|message| IngestError::Source { record: record_no, message })?;
        for ex in examples {
            let problems = validate_example(&ex);
            if !problems.is_empty() {
                return Err(IngestError::Invalid { id: ex.id, problems });
            }
            out.push(ex);
        }
    }
    Ok(out)
}

fn convert_delimited(adapter: &AdapterSpec, stem: &str, text: &str, delim: char) -> Result<QAExample, IngestError> {
    let has_header = adapter.option("has_header").is_none_or(|v| v != "false");
    let table = table_from_delimited(stem, text, delim, has_header)?;
    let question = adapter.option("question").unwrap_or_default();
    let ex = QAExample {
        id: adapter.option("id").unwrap_or(stem).to_string(),
        dataset: adapter.option("dataset").unwrap_or("custom").to_string(),
        category: match adapter.option("category") {
            Some(c) => c.parse().map_err(|message| IngestError::Source { record: 1, message })?,
            None => Category::Structured,
        },
        question: question.to_string(),
        table,
        passages: Vec::new(),
        images: Vec::new(),
        answer: Answer::direct(adapter.option("answer").unwrap_or_default()),
    };
    let problems = validate_example(&ex);
    if !problems.is_empty() {
        return Err(IngestError::Invalid { id: ex.id, problems });
    }
    Ok(ex)
}

// ---- record helpers ----

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value, String> {
    v.get(name).filter(|f| !f.is_null()).ok_or_else(|| format!("missing field {name}"))
}

fn text_of(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.as_f64().map(format_number).unwrap_or_else(|| n.to_string()),
        Value::Null => String::new(),
        Value::Bool(b) => if *b { "yes" } else { "no" }.to_string(),
        other => other.to_string(),
    }
}

fn str_field(v: &Value, name: &str) -> Result<String, String> {
    let f = field(v, name)?;
    match f {
        Value::String(_) | Value::Number(_) => Ok(text_of(f)),
        _ => Err(format!("field {name} must be a string")),
    }
}

fn id_field(v: &Value, names: &[&str], dataset: &str, index: usize) -> String {
    names
        .iter()
        .find_map(|n| v.get(*n).filter(|f| !f.is_null()).map(text_of))
        .unwrap_or_else(|| format!("{dataset}-{index}"))
}

fn array<'a>(v: &'a Value, name: &str) -> Result<&'a Vec<Value>, String> {
    field(v, name)?.as_array().ok_or_else(|| format!("field {name} must be an array"))
}

fn text_row(v: &Value, what: &str) -> Result<Vec<Cell>, String> {
    let items = v.as_array().ok_or_else(|| format!("{what} must be an array"))?;
    Ok(items.iter().map(|c| Cell::new(text_of(c))).collect())
}

fn text_grid(v: &Value, what: &str) -> Result<Vec<Vec<Cell>>, String> {
    let rows = v.as_array().ok_or_else(|| format!("{what} must be an array of rows"))?;
    rows.iter().map(|r| text_row(r, what)).collect()
}

/// Answer text from a string, number, or list of either (joined by ", ").
fn answer_text(v: &Value) -> String {
    match v {
        Value::Array(items) => items.iter().map(answer_text).collect::<Vec<_>>().join(", "),
        Value::Object(map) => map.get("answer").map(answer_text).unwrap_or_default(),
        other => text_of(other),
    }
}

fn header_body_table(id: String, v: &Value) -> Result<UnifiedTable, String> {
    let header = text_row(field(v, "header")?, "header")?;
    let mut rows = vec![header];
    rows.extend(text_grid(field(v, "rows")?, "rows")?);
    let mut table = UnifiedTable::new(id, rows, 1);
    table.caption = v.get("caption").or_else(|| v.get("title")).and_then(Value::as_str).map(str::to_string);
    Ok(table)
}

fn detected_table(id: String, cells: Vec<Vec<Cell>>, merged: Vec<MergedRegion>) -> Result<UnifiedTable, String> {
    normalize_table(id, cells, merged).map_err(|e| e.to_string())
}

fn example(
    id: String,
    dataset: &str,
    category: Category,
    question: String,
    table: UnifiedTable,
    answer: Answer,
) -> QAExample {
    QAExample {
        id,
        dataset: dataset.to_string(),
        category,
        question,
        table,
        passages: Vec::new(),
        images: Vec::new(),
        answer,
    }
}

/// A program answer when the text parses in the program grammar, otherwise
/// a plain answer.
fn program_answer(program: Option<&str>, value: String) -> Answer {
    match program.map(parse_program) {
        Some(Ok(p)) => Answer::derived(AnswerFormat::Program, value, p.to_string()),
        _ => Answer::direct(value),
    }
}

fn text_passages(prefix: &str, items: &[Value]) -> Vec<Passage> {
    items
        .iter()
        .map(|p| match p {
            Value::Object(_) => text_of(p.get("text").unwrap_or(&Value::Null)),
            other => text_of(other),
        })
        .enumerate()
        .filter(|(_, text)| !text.trim().is_empty())
        .map(|(i, text)| Passage { id: format!("{prefix}{i}"), title: String::new(), text })
        .collect()
}

// ---- adapters ----

const WIKISQL_AGGS: [Option<Aggregate>; 6] = [
    None,
    Some(Aggregate::Max),
    Some(Aggregate::Min),
    Some(Aggregate::Count),
    Some(Aggregate::Sum),
    Some(Aggregate::Avg),
];
const WIKISQL_OPS: [CmpOp; 3] = [CmpOp::Eq, CmpOp::Gt, CmpOp::Lt];

fn index_of(v: &Value, what: &str) -> Result<usize, String> {
    v.as_u64().map(|i| i as usize).ok_or_else(|| format!("{what} must be a non-negative integer"))
}

fn wikisql_statement(sql: &Value, table: &UnifiedTable) -> Result<SqlStatement, String> {
    if let Some(text) = sql.as_str() {
        return parse_sql(text).map_err(|e| format!("sql: {e}"));
    }
    let headers = table.header_paths();
    let column = |i: usize| headers.get(i).cloned().ok_or_else(|| format!("sql column {i} out of range"));
    let agg_index = index_of(field(sql, "agg")?, "sql.agg")?;
    let agg = *WIKISQL_AGGS.get(agg_index).ok_or_else(|| format!("sql.agg {agg_index} out of range"))?;
    let mut conditions = Vec::new();
    for cond in array(sql, "conds")? {
        let parts = cond.as_array().filter(|p| p.len() == 3).ok_or("sql.conds entries must be [col, op, value]")?;
        let op_index = index_of(&parts[1], "condition operator")?;
        let op = *WIKISQL_OPS.get(op_index).ok_or_else(|| format!("condition operator {op_index} out of range"))?;
        conditions.push((column(index_of(&parts[0], "condition column")?)?, op, text_of(&parts[2])));
    }
    Ok(SqlStatement { select: column(index_of(field(sql, "sel")?, "sql.sel")?)?, agg, table: None, conditions })
}

fn wikisql(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["id", "question_id"], "wikisql", index);
    let table_v = field(r, "table")?;
    let table = header_body_table(id_field(table_v, &["id"], "wikisql-table", index), table_v)?;
    let statement = wikisql_statement(field(r, "sql")?, &table)?;
    let query = statement.resolve(&table).map_err(|e| format!("sql: {e}"))?;
    let value = match r.get("answer").filter(|a| !a.is_null()) {
        Some(a) => answer_text(a),
        None => crate::programs::exec_sql(&query, &table).map_err(|e| format!("sql: {e}"))?,
    };
    let answer = Answer::derived(AnswerFormat::Sql, value, statement.to_string());
    Ok(vec![example(id, "wikisql", Category::Structured, str_field(r, "question")?, table, answer)])
}

fn grid_direct(r: &Value, index: usize, dataset: &str) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["id", "question_id"], dataset, index);
    let table_v = field(r, "table")?;
    let table = header_body_table(id_field(table_v, &["id"], &format!("{dataset}-table"), index), table_v)?;
    let answer = Answer::direct(answer_text(field(r, "answer")?));
    Ok(vec![example(id, dataset, Category::Structured, str_field(r, "question")?, table, answer)])
}

fn finqa(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["id"], "finqa", index);
    let table = detected_table(format!("{id}-table"), text_grid(field(r, "table")?, "table")?, Vec::new())?;
    let qa = field(r, "qa")?;
    let value = answer_text(qa.get("exe_ans").or_else(|| qa.get("answer")).ok_or("missing field qa.exe_ans")?);
    let answer = program_answer(qa.get("program").and_then(Value::as_str), value);
    let mut ex = example(id, "finqa", Category::SpreadSheet, str_field(qa, "question")?, table, answer);
    let empty = Vec::new();
    ex.passages = text_passages("pre", r.get("pre_text").and_then(Value::as_array).unwrap_or(&empty));
    ex.passages.extend(text_passages("post", r.get("post_text").and_then(Value::as_array).unwrap_or(&empty)));
    Ok(vec![ex])
}

fn tatqa(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let table_v = field(r, "table")?;
    let table_id = id_field(table_v, &["uid"], "tatqa-table", index);
    let table = detected_table(table_id, text_grid(field(table_v, "table")?, "table.table")?, Vec::new())?;
    let empty = Vec::new();
    let paragraphs = r.get("paragraphs").and_then(Value::as_array).unwrap_or(&empty);
    let passages: Vec<Passage> = paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| Passage {
            id: p.get("uid").map(text_of).unwrap_or_else(|| format!("p{i}")),
            title: String::new(),
            text: p.get("text").map(text_of).unwrap_or_default(),
        })
        .collect();
    let mut out = Vec::new();
    for (qi, q) in array(r, "questions")?.iter().enumerate() {
        let id = id_field(q, &["uid"], &format!("tatqa-{index}"), qi);
        let value = answer_text(field(q, "answer")?);
        let expr = q
            .get("derivation")
            .and_then(Value::as_str)
            .filter(|d| !d.trim().is_empty())
            .and_then(|d| parse_math_expr(d).ok());
        // math expressions are unified into programs
        let answer = match expr {
            Some(e) => Answer::derived(AnswerFormat::Program, value, expr_to_program(&e).to_string()),
            None => Answer::direct(value),
        };
        let mut ex = example(id, "tatqa", Category::SpreadSheet, str_field(q, "question")?, table.clone(), answer);
        ex.passages = passages.clone();
        out.push(ex);
    }
    Ok(out)
}

fn hitab(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["id"], "hitab", index);
    let table_v = field(r, "table")?;
    let cells = text_grid(field(table_v, "texts")?, "table.texts")?;
    let mut merged = Vec::new();
    if let Some(regions) = table_v.get("merged_regions").and_then(Value::as_array) {
        for region in regions {
            let get = |k: &str| {
                region.get(k).ok_or_else(|| format!("merged region missing {k}")).and_then(|v| index_of(v, k))
            };
            merged.push(MergedRegion::new(
                get("first_row")?,
                get("first_column")?,
                get("last_row")?,
                get("last_column")?,
            ));
        }
    }
    let mut table = detected_table(id_field(table_v, &["id"], "hitab-table", index), cells, merged)?;
    table.caption = table_v.get("title").and_then(Value::as_str).map(str::to_string);
    let answer = Answer::direct(answer_text(field(r, "answer")?));
    Ok(vec![example(id, "hitab", Category::SpreadSheet, str_field(r, "question")?, table, answer)])
}

fn multihiertt(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["uid", "id"], "multihiertt", index);
    let tables = array(r, "tables")?;
    let first = tables.first().ok_or("tables is empty")?;
    let table = detected_table(format!("{id}-t0"), text_grid(first, "tables[0]")?, Vec::new())?;
    let qa = field(r, "qa")?;
    let answer = program_answer(qa.get("program").and_then(Value::as_str), answer_text(field(qa, "answer")?));
    let mut ex = example(id.clone(), "multihiertt", Category::SpreadSheet, str_field(qa, "question")?, table, answer);
    let empty = Vec::new();
    ex.passages = text_passages("p", r.get("paragraphs").and_then(Value::as_array).unwrap_or(&empty));
    // tables beyond the first become markdown passages
    for (i, extra) in tables.iter().enumerate().skip(1) {
        let t = detected_table(format!("{id}-t{i}"), text_grid(extra, "tables")?, Vec::new())?;
        ex.passages.push(Passage { id: format!("t{i}"), title: format!("table {i}"), text: to_markdown(&t) });
    }
    Ok(vec![ex])
}

fn link_title(url: &str) -> String {
    url.rsplit('/').next().unwrap_or(url).replace('_', " ")
}

fn linked_cell(v: &Value) -> Result<Cell, String> {
    match v {
        Value::Array(parts) if !parts.is_empty() => {
            let links = match parts.get(1) {
                Some(Value::Array(ls)) => ls.iter().map(text_of).collect(),
                Some(Value::String(l)) => vec![l.clone()],
                _ => Vec::new(),
            };
            Ok(Cell::with_links(text_of(&parts[0]), links))
        }
        Value::Object(map) => {
            let list = |k: &str| -> Vec<String> {
                map.get(k).and_then(Value::as_array).map(|a| a.iter().map(text_of).collect()).unwrap_or_default()
            };
            Ok(Cell {
                text: map.get("text").map(text_of).unwrap_or_default(),
                links: list("links"),
                images: list("images"),
            })
        }
        other => Ok(Cell::new(text_of(other))),
    }
}

fn linked_row(v: &Value, what: &str) -> Result<Vec<Cell>, String> {
    v.as_array().ok_or_else(|| format!("{what} must be an array"))?.iter().map(linked_cell).collect()
}

/// Drops links whose targets are absent so every kept link resolves.
fn resolve_links(cells: &mut [Vec<Cell>], passages: &HashSet<String>, images: &HashSet<String>) {
    for cell in cells.iter_mut().flatten() {
        cell.links.retain(|l| passages.contains(l));
        cell.images.retain(|i| images.contains(i));
    }
}

fn hybridqa(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["question_id", "id"], "hybridqa", index);
    let table_v = field(r, "table")?;
    let mut rows = vec![linked_row(field(table_v, "header")?, "table.header")?];
    for row in field(table_v, "data")?.as_array().ok_or("table.data must be an array")? {
        rows.push(linked_row(row, "table.data row")?);
    }
    let texts: &Map<String, Value> = match r.get("passages") {
        Some(Value::Object(m)) => m,
        None | Some(Value::Null) => &Map::new(),
        Some(_) => return Err("passages must be an object of url to text".into()),
    };
    // passages in order of first link appearance, then the rest
    let mut order: Vec<String> = Vec::new();
    for link in rows.iter().flatten().flat_map(|c| &c.links) {
        if texts.contains_key(link) && !order.contains(link) {
            order.push(link.clone());
        }
    }
    for key in texts.keys() {
        if !order.contains(key) {
            order.push(key.clone());
        }
    }
    let passages: Vec<Passage> = order
        .iter()
        .map(|url| Passage { id: url.clone(), title: link_title(url), text: text_of(&texts[url]) })
        .collect();
    let passage_ids: HashSet<String> = order.into_iter().collect();
    resolve_links(&mut rows, &passage_ids, &HashSet::new());
    let mut table = UnifiedTable::new(id_field(table_v, &["uid", "id"], "hybridqa-table", index), rows, 1);
    table.caption = table_v.get("title").and_then(Value::as_str).map(str::to_string);
    let answer = Answer::direct(answer_text(
        r.get("answer-text").or_else(|| r.get("answer")).ok_or("missing field answer-text")?,
    ));
    let mut ex = example(id, "hybridqa", Category::Encyclopedia, str_field(r, "question")?, table, answer);
    ex.passages = passages;
    Ok(vec![ex])
}

fn multimodalqa(r: &Value, index: usize) -> Result<Vec<QAExample>, String> {
    let id = id_field(r, &["qid", "id"], "multimodalqa", index);
    let table_v = field(r, "table")?;
    let mut rows = vec![linked_row(field(table_v, "header")?, "table.header")?];
    for row in array(table_v, "rows")? {
        rows.push(linked_row(row, "table row")?);
    }
    let empty = Vec::new();
    let passages: Vec<Passage> = r
        .get("texts")
        .and_then(Value::as_array)
        .unwrap_or(&empty)
        .iter()
        .map(|t| {
            Ok(Passage {
                id: str_field(t, "id")?,
                title: t.get("title").map(text_of).unwrap_or_default(),
                text: str_field(t, "text")?,
            })
        })
        .collect::<Result<_, String>>()?;
    let images: Vec<ImageRef> = r
        .get("images")
        .and_then(Value::as_array)
        .unwrap_or(&empty)
        .iter()
        .map(|i| {
            Ok(ImageRef {
                id: str_field(i, "id")?,
                uri: i.get("uri").or_else(|| i.get("path")).map(text_of).unwrap_or_default(),
                caption: i.get("caption").or_else(|| i.get("title")).map(text_of).unwrap_or_default(),
            })
        })
        .collect::<Result<_, String>>()?;
    let passage_ids = passages.iter().map(|p| p.id.clone()).collect();
    let image_ids = images.iter().map(|i| i.id.clone()).collect();
    resolve_links(&mut rows, &passage_ids, &image_ids);
    let mut table = UnifiedTable::new(id_field(table_v, &["id"], "multimodalqa-table", index), rows, 1);
    table.caption = table_v.get("title").and_then(Value::as_str).map(str::to_string);
    let answer =
        Answer::direct(answer_text(r.get("answers").or_else(|| r.get("answer")).ok_or("missing field answers")?));
    let mut ex = example(id, "multimodalqa", Category::Encyclopedia, str_field(r, "question")?, table, answer);
    ex.passages = passages;
    ex.images = images;
    Ok(vec![ex])
}

/// Header rows for a table parsed without header information.
pub fn detect_header_rows(table: &UnifiedTable) -> Result<usize, IngestError> {
    Ok(find_header_rows(table)?.header_rows())
}
