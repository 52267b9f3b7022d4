//! Seeded random inputs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use tqk_core::programs::{Aggregate, BinOp, CmpOp, Condition, MathExpr, SqlQuery};
use tqk_core::retrieval::Locator;
use tqk_core::{Answer, AnswerFormat, Category, Cell, ImageRef, MergedRegion, Passage, QAExample, UnifiedTable};

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "river", "stone", "north", "south", "Paris", "Lyon", "total", "net", "café",
    "東京", "x1", "Q3",
];

fn word<R: Rng>(rng: &mut R) -> String {
    WORDS.choose(rng).expect("non-empty").to_string()
}

/// Rows 1 to 8, columns 1 to 6, each cell empty with probability 0.3.
/// Empty cells are sometimes whitespace.
pub fn header_grid<R: Rng>(rng: &mut R) -> Vec<Vec<String>> {
    let rows = rng.random_range(1..=8);
    let cols = rng.random_range(1..=6);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        if rng.random_bool(0.2) {
                            " ".to_string()
                        } else {
                            String::new()
                        }
                    } else {
                        word(rng)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn table_of(id: &str, grid: &[Vec<String>], header_rows: usize) -> UnifiedTable {
    UnifiedTable::new(id, grid.iter().map(|r| r.iter().map(|s| Cell::new(s.as_str())).collect()).collect(), header_rows)
}

#[derive(Clone, Copy)]
enum ColumnKind {
    Numeric,
    Text,
    Mixed,
}

fn sql_value<R: Rng>(rng: &mut R, kind: ColumnKind) -> String {
    let numeric = match kind {
        ColumnKind::Numeric => true,
        ColumnKind::Text => false,
        ColumnKind::Mixed => rng.random_bool(0.5),
    };
    if !numeric {
        return ["red", "green", "blue", "amber", "x"].choose(rng).expect("non-empty").to_string();
    }
    let v: i32 = rng.random_range(-20..60);
    if rng.random_bool(0.25) {
        format!("{v}.{}", rng.random_range(1..10))
    } else {
        v.to_string()
    }
}

/// A table of at most 20 rows (one header) by 6 columns, with a random query
/// whose columns are in range. Returns the table, its body as strings, and
/// the query.
pub fn sql_case<R: Rng>(rng: &mut R) -> (UnifiedTable, Vec<Vec<String>>, SqlQuery) {
    let cols = rng.random_range(1..=6);
    let body_rows = rng.random_range(0..=19);
    let kinds: Vec<ColumnKind> = (0..cols)
        .map(|_| *[ColumnKind::Numeric, ColumnKind::Text, ColumnKind::Mixed].choose(rng).expect("non-empty"))
        .collect();
    let header: Vec<String> = (0..cols).map(|c| format!("col{c}")).collect();
    let body: Vec<Vec<String>> = (0..body_rows).map(|_| kinds.iter().map(|&k| sql_value(rng, k)).collect()).collect();
    let mut grid = vec![header];
    grid.extend(body.iter().cloned());
    let table = table_of("sql", &grid, 1);

    let agg = if rng.random_bool(0.4) { None } else { Some(*Aggregate::ALL.choose(rng).expect("non-empty")) };
    let n_conds = rng.random_range(0..=3);
    let conditions = (0..n_conds)
        .map(|_| {
            let col = rng.random_range(0..cols);
            let op = *[CmpOp::Eq, CmpOp::Gt, CmpOp::Lt].choose(rng).expect("non-empty");
            let value = match body.choose(rng) {
                Some(row) if rng.random_bool(0.6) => row[col].clone(),
                _ => sql_value(rng, kinds[col]),
            };
            Condition { col, op, value }
        })
        .collect();
    let query = SqlQuery { select_col: rng.random_range(0..cols), agg, conditions };
    (table, body, query)
}

/// Random arithmetic expression of depth at most `max_depth`.
pub fn math_expr<R: Rng>(rng: &mut R, max_depth: usize) -> MathExpr {
    if max_depth == 0 || rng.random_bool(0.25) {
        let whole: i32 = rng.random_range(-99..100);
        return if rng.random_bool(0.3) {
            MathExpr::Num(f64::from(whole) + f64::from(rng.random_range(1..100)) / 100.0)
        } else {
            MathExpr::Num(f64::from(whole))
        };
    }
    if rng.random_bool(0.1) {
        return MathExpr::Neg(Box::new(math_expr(rng, max_depth - 1)));
    }
    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div].choose(rng).expect("non-empty");
    MathExpr::bin(op, math_expr(rng, max_depth - 1), math_expr(rng, max_depth - 1))
}

const ANSWER_WORDS: &[&str] = &[
    "the", "a", "an", "cat", "sat", "down", "Paris", "paris", "1,200", "1200", "$3", "3", "50%", "2019", "net",
    "income", "x", "yes", "no", ".", ",", "!", "3.50", "Income",
];

fn phrase<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(0..=6);
    (0..n).map(|_| *ANSWER_WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

/// Prediction and gold strings that often overlap.
pub fn answer_pair<R: Rng>(rng: &mut R) -> (String, String) {
    let gold = phrase(rng);
    let pred = match rng.random_range(0..4) {
        0 => gold.clone(),
        1 => gold.to_uppercase(),
        2 => {
            let mut words: Vec<&str> = gold.split_whitespace().collect();
            words.shuffle(rng);
            words.truncate(rng.random_range(0..=words.len()));
            format!("{} {}", words.join(" "), phrase(rng))
        }
        _ => phrase(rng),
    };
    (pred, gold)
}

const TRICKY: &[&str] = &["", " ", "a|b", "line\nbreak", "quote\"d", "tab\there", "ünï", "\\", "{\"j\":1}", "  pad  "];

fn cell_text<R: Rng>(rng: &mut R) -> String {
    if rng.random_bool(0.2) {
        TRICKY.choose(rng).expect("non-empty").to_string()
    } else {
        word(rng)
    }
}

/// A random example that passes validation: linked passages and images
/// exist, merged regions are in range and disjoint, and the derivation
/// matches the format.
pub fn example<R: Rng>(rng: &mut R, index: usize) -> QAExample {
    let rows = rng.random_range(1..=6);
    let cols = rng.random_range(1..=5);
    let passages: Vec<Passage> = (0..rng.random_range(0..=3))
        .map(|i| Passage { id: format!("p{i}"), title: word(rng), text: cell_text(rng) })
        .collect();
    let images: Vec<ImageRef> = (0..rng.random_range(0..=2))
        .map(|i| ImageRef { id: format!("img{i}"), uri: format!("images/{i}.png"), caption: cell_text(rng) })
        .collect();
    let cells: Vec<Vec<Cell>> = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let mut cell = Cell::new(cell_text(rng));
                    if !passages.is_empty() && rng.random_bool(0.2) {
                        cell.links.push(passages.choose(rng).expect("non-empty").id.clone());
                    }
                    if !images.is_empty() && rng.random_bool(0.1) {
                        cell.images.push(images.choose(rng).expect("non-empty").id.clone());
                    }
                    cell
                })
                .collect()
        })
        .collect();
    let mut table = UnifiedTable::new(format!("t{index}"), cells, rng.random_range(0..=rows.min(2)));
    if rng.random_bool(0.3) {
        table.caption = Some(cell_text(rng));
    }
    if cols > 1 && rng.random_bool(0.3) {
        table.merged_regions.push(MergedRegion::new(0, 0, 0, 1));
    }
    let answer = match rng.random_range(0..4) {
        0 => Answer::direct(cell_text(rng)),
        1 => Answer::derived(AnswerFormat::Program, "2", "subtract(5, 3)"),
        2 => Answer::derived(AnswerFormat::MathExpr, "8", "(3 + 5) * 1"),
        _ => Answer::derived(AnswerFormat::Sql, "1", "SELECT COUNT(\"a\") FROM t"),
    };
    let mut question = cell_text(rng);
    if question.trim().is_empty() {
        question = "what is shown?".into();
    }
    QAExample {
        id: format!("ex-{index}"),
        dataset: ["wtq", "finqa", "hybridqa"].choose(rng).expect("non-empty").to_string(),
        category: *Category::ALL.choose(rng).expect("non-empty"),
        question,
        table,
        passages,
        images,
        answer,
    }
}

/// Table whose rows hold distinct single-word values, one row of which is
/// the only one containing a marker word. The question is that row's cell
/// values joined by spaces. Returns the example and the gold row locator.
pub fn gold_row_case<R: Rng>(rng: &mut R, index: usize) -> (QAExample, Locator) {
    let cols = rng.random_range(2..=6);
    let body = rng.random_range(3..=20);
    let pool: Vec<String> = (0..(body * cols / 2).max(cols + 1)).map(|i| format!("v{i}w")).collect();
    let header: Vec<String> = (0..cols).map(|c| format!("h{c}")).collect();
    let mut grid = vec![header];
    for _ in 0..body {
        grid.push(pool.choose_multiple(rng, cols).cloned().collect());
    }
    let gold = rng.random_range(1..=body);
    let marker = rng.random_range(0..cols);
    grid[gold][marker] = format!("marker{index}z");
    let question = grid[gold].join(" ");
    let ex = QAExample {
        id: format!("gold-{index}"),
        dataset: "synthetic".into(),
        category: Category::Structured,
        question,
        table: table_of(&format!("g{index}"), &grid, 1),
        passages: Vec::new(),
        images: Vec::new(),
        answer: Answer::direct(grid[gold][0].clone()),
    };
    (ex, Locator::Row(gold))
}

/// Example whose markdown table holds roughly `words` tokens.
pub fn sized_example(id: String, category: Category, words: usize) -> QAExample {
    let per_row = 40;
    let mut grid = vec![vec!["name".to_string(), "text".to_string()]];
    let mut left = words;
    let mut r = 0;
    while left > 0 {
        let n = left.min(per_row);
        grid.push(vec![format!("r{r}"), vec!["w"; n].join(" ")]);
        left -= n;
        r += 1;
    }
    QAExample {
        id: id.clone(),
        dataset: "synthetic".into(),
        category,
        question: format!("What does {id} say?"),
        table: table_of(&id, &grid, 1),
        passages: Vec::new(),
        images: Vec::new(),
        answer: Answer::direct("w"),
    }
}

/// Example with up to 40 body rows and optional passages, for prompt sweeps.
pub fn prompt_example<R: Rng>(rng: &mut R, index: usize) -> QAExample {
    let cols = rng.random_range(1..=5);
    let body = rng.random_range(0..=40);
    let mut grid = vec![(0..cols).map(|c| format!("Col {c}")).collect::<Vec<_>>()];
    for _ in 0..body {
        grid.push((0..cols).map(|_| cell_text(rng)).collect());
    }
    let passages = (0..rng.random_range(0..=2))
        .map(|i| Passage {
            id: format!("p{i}"),
            title: word(rng),
            text: (0..rng.random_range(1..30)).map(|_| word(rng)).collect::<Vec<_>>().join(" "),
        })
        .collect();
    let answer = if rng.random_bool(0.5) {
        Answer::derived(AnswerFormat::Program, "2", "subtract(5, 3)")
    } else {
        Answer::direct(word(rng))
    };
    QAExample {
        id: format!("pe-{index}"),
        dataset: "synthetic".into(),
        category: Category::SpreadSheet,
        question: format!("What is the {} of {}?", word(rng), word(rng)),
        table: table_of(&format!("pt{index}"), &grid, 1),
        passages,
        images: Vec::new(),
        answer,
    }
}
