//! Acceptance run: one PASS or FAIL line per criterion, non-zero exit if any
//! criterion fails.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::json;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};
use tqk_client::Client;
use tqk_core::api::{AskRequest, AskSource, PromptSettings};
use tqk_core::benchmark::{assemble, BenchConfig};
use tqk_core::evaluation::{evaluate, exact_match, token_f1, Metric, Prediction};
use tqk_core::ingest::{convert_records, load_unified, save_unified, AdapterSpec};
use tqk_core::linearize::{count_tokens, to_markdown, TableFormat, TokenBudget, Tokenizer};
use tqk_core::programs::{eval_math_expr, eval_program, exec_sql, expr_to_program, ProgramValue};
use tqk_core::reasoner::{
    answer_question, build_prompt, LanguageModel, PromptError, PromptSpec, Scheme, ScriptedModel,
};
use tqk_core::retrieval::{extract_units, recall_at_k, retrieve, Granularity, Locator, RetrieverConfig};
use tqk_core::table::{find_header_rows, normalize_table, validate_example};
use tqk_core::{Category, Cell, QAExample};
use tqk_service::{AppState, Datasets, TableStore};
use tqk_testkit::{gen, oracle, rng};

type Check = Result<String, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn header_finder_oracle() -> Check {
    let mut r = rng(1);
    for i in 0..1000 {
        let grid = gen::header_grid(&mut r);
        let trace = oracle::header_finder(&grid);
        let scan = find_header_rows(&gen::table_of("g", &grid, 1)).map_err(|e| format!("grid {i}: {e}"))?;
        ensure(scan.index == trace.n, || {
            format!("grid {i}: returned {} expected {} for {grid:?}", scan.index, trace.n)
        })?;
        ensure(scan.header_rows() == trace.header_rows(), || format!("grid {i}: header rows differ for {grid:?}"))?;
        let raw: Vec<Vec<Cell>> = grid.iter().map(|row| row.iter().map(|s| Cell::new(s.as_str())).collect()).collect();
        let normalized = normalize_table("g", raw, Vec::new()).map_err(|e| e.to_string())?;
        ensure(normalized.header_rows == trace.header_rows(), || format!("grid {i}: normalize_table disagrees"))?;
    }
    Ok("1000 grids".into())
}

fn sql_oracle() -> Check {
    let mut r = rng(2);
    let mut values = 0;
    for i in 0..1000 {
        let (table, body, query) = gen::sql_case(&mut r);
        let got = exec_sql(&query, &table).ok();
        let want = oracle::brute_sql(&body, &query);
        ensure(got == want, || format!("case {i}: got {got:?}, oracle {want:?} for {query:?} on {body:?}"))?;
        values += usize::from(want.is_some());
    }
    ensure(values > 500, || format!("only {values} of 1000 queries produced a value"))?;
    Ok(format!("1000 pairs, {values} with values"))
}

fn conversion_fidelity() -> Check {
    let mut r = rng(3);
    let mut compared = 0;
    for i in 0..500 {
        let expr = gen::math_expr(&mut r, 5);
        ensure(expr.depth() <= 5, || format!("expr {i} too deep"))?;
        let program = expr_to_program(&expr);
        match (eval_math_expr(&expr), eval_program(&program)) {
            (Ok(a), Ok(ProgramValue::Number(b))) => {
                ensure((a - b).abs() <= 1e-9, || format!("expr {i} `{expr}`: {a} vs {b} via `{program}`"))?;
                compared += 1;
            }
            (Err(_), Err(_)) => {}
            (a, b) => return Err(format!("expr {i} `{expr}`: {a:?} vs {b:?}")),
        }
    }
    Ok(format!("500 expressions, {compared} finite"))
}

fn metric_invariants() -> Check {
    ensure(exact_match("the cat sat", "cat sat down") == 0, || "fixture EM should be 0".into())?;
    let f = token_f1("the cat sat", "cat sat down");
    ensure((f - 0.8).abs() < 1e-12, || format!("fixture F1 {f}, expected 0.8"))?;

    let mut r = rng(4);
    let mut gold = Vec::new();
    let mut preds = Vec::new();
    for i in 0..1000 {
        let (p, g) = gen::answer_pair(&mut r);
        let f1 = token_f1(&p, &g);
        ensure(f1 == token_f1(&g, &p), || format!("pair {i}: F1 not symmetric for {p:?} / {g:?}"))?;
        ensure((0.0..=1.0).contains(&f1), || format!("pair {i}: F1 {f1} out of range"))?;
        if exact_match(&p, &g) == 1 {
            ensure(f1 == 1.0, || format!("pair {i}: EM without F1 = 1 for {p:?} / {g:?}"))?;
        }
        let mut ex = gen::sized_example(format!("m{i}"), Category::Structured, 1);
        ex.answer.value = g;
        preds.push(Prediction { id: ex.id.clone(), answer: p, derivation: None });
        gold.push(ex);
    }
    let report = evaluate(&gold, &preds, &[Metric::Em, Metric::F1]).map_err(|e| e.to_string())?;
    let n = report.per_example.len() as f64;
    let em = report.per_example.iter().map(|row| f64::from(row.em)).sum::<f64>() / n;
    let f1 = report.per_example.iter().map(|row| row.f1).sum::<f64>() / n;
    ensure(report.aggregate.em == Some(em), || format!("aggregate EM {:?} vs mean {em}", report.aggregate.em))?;
    ensure(report.aggregate.f1 == Some(f1), || format!("aggregate F1 {:?} vs mean {f1}", report.aggregate.f1))?;
    Ok(format!("1000 pairs, EM {em:.3}, F1 {f1:.3}"))
}

fn retrieval_soundness() -> Check {
    let mut r = rng(5);
    for i in 0..200 {
        let (ex, gold) = gen::gold_row_case(&mut r, i);
        let units = extract_units(&ex, Granularity::Row, false).len();
        let ranked = retrieve(&ex, &RetrieverConfig::new(Granularity::Row, units), &ex.question)
            .map_err(|e| format!("table {i}: {e}"))?;
        let locators: Vec<Locator> = ranked.iter().map(|x| x.unit.locator.clone()).collect();
        let at1 = recall_at_k(&locators, &HashSet::from([gold.clone()]), 1).map_err(|e| e.to_string())?;
        ensure(at1 == 1.0, || format!("table {i}: recall@1 = {at1}, ranking {locators:?}, gold {gold}"))?;

        let extra: Vec<Locator> = locators.choose_multiple(&mut r, 2).cloned().collect();
        for gold_set in [HashSet::from([gold.clone()]), extra.into_iter().collect()] {
            let mut prev = 0.0;
            for k in 1..=locators.len() {
                let at = recall_at_k(&locators, &gold_set, k).map_err(|e| e.to_string())?;
                ensure(at >= prev, || format!("table {i}: recall@{k} = {at} < {prev}"))?;
                prev = at;
            }
        }
    }
    Ok("200 tables".into())
}

fn budget_safety() -> Check {
    let mut r = rng(6);
    let pool: Vec<QAExample> = (0..100).map(|i| gen::prompt_example(&mut r, i)).collect();
    let mut emitted = 0;
    for (i, ex) in pool.iter().enumerate() {
        let max_tokens = r.random_range(60..1500);
        let format = *[TableFormat::Markdown, TableFormat::Flatten].choose(&mut r).expect("non-empty");
        let scheme = *[Scheme::Direct, Scheme::CoT, Scheme::PoT].choose(&mut r).expect("non-empty");
        let mut spec =
            PromptSpec::new(format, scheme, TokenBudget::new(max_tokens, Tokenizer::Default).expect("non-zero"));
        let shots = r.random_range(0..=3);
        spec.shots = pool.choose_multiple(&mut r, shots).cloned().collect();
        let units = if r.random_bool(0.3) && !ex.table.body().is_empty() {
            let cfg = RetrieverConfig::new(Granularity::Row, 3);
            Some(
                retrieve(ex, &cfg, &ex.question)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|x| x.unit)
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };
        match build_prompt(ex, &spec, units.as_deref()) {
            Ok(prompt) => {
                let counted = count_tokens(&prompt, &Tokenizer::Default);
                let recount = oracle::regex_tokens(&prompt);
                ensure(counted <= max_tokens && recount <= max_tokens, || {
                    format!("example {i}: prompt has {counted} tokens ({recount} by regex), budget {max_tokens}")
                })?;
                emitted += 1;
            }
            Err(PromptError::BudgetUnsatisfiable { .. }) => {}
        }
    }
    ensure(emitted >= 50, || format!("only {emitted} of 100 prompts fit"))?;
    Ok(format!("100 examples, {emitted} prompts emitted"))
}

fn synthetic_pools() -> BTreeMap<Category, Vec<QAExample>> {
    let mut r = rng(7);
    let mut pools = BTreeMap::new();
    let mut make = |category: Category, n: usize, words: std::ops::Range<usize>, tag: &str| -> Vec<QAExample> {
        (0..n).map(|i| gen::sized_example(format!("{tag}{i}"), category, r.random_range(words.clone()))).collect()
    };
    pools.insert(Category::SpreadSheet, make(Category::SpreadSheet, 400, 10..400, "s"));
    let mut enc = make(Category::Encyclopedia, 360, 50..1500, "e");
    enc.extend(make(Category::Encyclopedia, 40, 6100..6300, "E"));
    pools.insert(Category::Encyclopedia, enc);
    let mut st = make(Category::Structured, 440, 2010..2300, "t");
    st.extend(make(Category::Structured, 60, 20..500, "T"));
    pools.insert(Category::Structured, st);
    pools
}

fn benchmark_assembly() -> Check {
    let pools = synthetic_pools();
    let cfg = BenchConfig::default();
    let first = assemble(&cfg, pools.clone()).map_err(|e| e.to_string())?;
    let second = assemble(&cfg, pools).map_err(|e| e.to_string())?;
    let ids = |b: &tqk_core::benchmark::Benchmark| b.examples.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
    ensure(ids(&first) == ids(&second), || "same seed gave different samples".into())?;
    ensure(first.examples.len() == 1000, || format!("{} examples", first.examples.len()))?;
    let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
    let mut seen = HashSet::new();
    for ex in &first.examples {
        *counts.entry(ex.category).or_default() += 1;
        ensure(seen.insert(ex.id.clone()), || format!("{} sampled twice", ex.id))?;
        let tokens = oracle::regex_tokens(&to_markdown(&ex.table));
        let within = match ex.category {
            Category::SpreadSheet => true,
            Category::Encyclopedia => tokens < 6000,
            Category::Structured => tokens > 2000,
        };
        ensure(within, || format!("{} ({}) has {tokens} table tokens", ex.id, ex.category))?;
    }
    let expected =
        BTreeMap::from([(Category::SpreadSheet, 300), (Category::Encyclopedia, 300), (Category::Structured, 400)]);
    ensure(counts == expected, || format!("category counts {counts:?}"))?;
    Ok("300/300/400, deterministic, bounds hold".into())
}

fn wikisql_records(n: usize) -> Vec<serde_json::Value> {
    let mut r = rng(8);
    (0..n)
        .map(|i| {
            let rows: Vec<serde_json::Value> = (0..6)
                .map(|k| {
                    let region = if k % 2 == 0 { "north" } else { "south" };
                    json!([format!("city{i}x{k}"), r.random_range(1..500), region])
                })
                .collect();
            let target = r.random_range(0..6);
            json!({
                "id": format!("w{i}"),
                "question": format!("What is the population of city{i}x{target}?"),
                "table": {"header": ["City", "Population", "Region"], "rows": rows},
                "sql": {"sel": 1, "agg": 0, "conds": [[0, 0, format!("city{i}x{target}")]]}
            })
        })
        .collect()
}

async fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = TableStore::open(dir.path()).map_err(|e| e.to_string())?;
    let scripted: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["Ink"]));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    tokio::spawn(tqk_service::serve(listener, AppState::new(Datasets::new(), store, Some(scripted))));
    let client = Client::new(format!("http://{addr}"));
    let meta = client.upload_table("stock.csv", "Item,Qty\nPen,3\nInk,7\n", true).await.map_err(|e| e.to_string())?;
    let ask = |scheme| AskRequest {
        source: AskSource::Table { id: meta.id.clone() },
        question: Some("Which item has quantity 7?".into()),
        spec: PromptSettings { scheme, ..PromptSettings::default() },
        retrieve: None,
    };
    let res = client.ask(&ask(Scheme::Direct)).await.map_err(|e| e.to_string())?;
    ensure(res.answer == "Ink", || format!("direct answer {:?}", res.answer))?;

    let dir2 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pot: Arc<dyn LanguageModel> = Arc::new(ScriptedModel::new(["subtract(5,3)"]));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let store = TableStore::open(dir2.path()).map_err(|e| e.to_string())?;
    tokio::spawn(tqk_service::serve(listener, AppState::new(Datasets::new(), store, Some(pot))));
    let client = Client::new(format!("http://{addr}"));
    let meta = client.upload_table("stock.csv", "Item,Qty\nPen,5\nInk,3\n", true).await.map_err(|e| e.to_string())?;
    let req = AskRequest {
        source: AskSource::Table { id: meta.id },
        question: Some("How many more pens than ink?".into()),
        spec: PromptSettings { scheme: Scheme::PoT, ..PromptSettings::default() },
        retrieve: None,
    };
    let res = client.ask(&req).await.map_err(|e| e.to_string())?;
    ensure(res.answer == "2", || format!("PoT answer {:?}", res.answer))?;

    let gold = convert_records(&AdapterSpec::new("wikisql").map_err(|e| e.to_string())?, &wikisql_records(20))
        .map_err(|e| e.to_string())?;
    let model = ScriptedModel::new(gold.iter().map(|g| g.answer.value.clone()));
    let retriever = RetrieverConfig::new(Granularity::Row, 3);
    let spec = PromptSpec::new(
        TableFormat::Markdown,
        Scheme::Direct,
        TokenBudget::new(2048, Tokenizer::Default).expect("non-zero"),
    );
    let mut preds = Vec::new();
    for ex in &gold {
        let out = answer_question(ex, &spec, Some(&retriever), &model).await.map_err(|e| format!("{}: {e}", ex.id))?;
        preds.push(Prediction { id: ex.id.clone(), answer: out.answer.value, derivation: None });
    }
    let report = evaluate(&gold, &preds, &[Metric::Em]).map_err(|e| e.to_string())?;
    ensure(report.aggregate.em == Some(1.0), || format!("pipeline EM {:?}", report.aggregate.em))?;
    Ok("direct and PoT over HTTP, 20-example pipeline EM 1.0".into())
}

fn round_trip() -> Check {
    let mut r = rng(9);
    let examples: Vec<QAExample> = (0..1000).map(|i| gen::example(&mut r, i)).collect();
    for ex in &examples {
        let problems = validate_example(ex);
        ensure(problems.is_empty(), || format!("{} invalid: {problems:?}", ex.id))?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("examples.jsonl");
    save_unified(&examples, &path).map_err(|e| e.to_string())?;
    let back =
        load_unified(&path).map_err(|e| e.to_string())?.collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    ensure(back == examples, || "reloaded examples differ".into())?;
    Ok("1000 examples".into())
}

struct Outcome {
    name: &'static str,
    limit: Duration,
    elapsed: Duration,
    result: Check,
}

fn timed(name: &'static str, limit_ms: u64, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = f();
    Outcome { name, limit: Duration::from_millis(limit_ms), elapsed: start.elapsed(), result }
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    let outcomes = [
        timed("header finder matches pseudocode simulation", 1000, header_finder_oracle),
        timed("SQL execution matches brute-force interpreter", 5000, sql_oracle),
        timed("math expression to program conversion", 1000, conversion_fidelity),
        timed("metric invariants", 1000, metric_invariants),
        timed("retrieval soundness and recall monotonicity", 2000, retrieval_soundness),
        timed("prompt budget safety", 2000, budget_safety),
        timed("benchmark assembly", 2000, benchmark_assembly),
        timed("end to end with scripted model", 5000, || runtime.block_on(end_to_end())),
        timed("unified JSONL round trip", 2000, round_trip),
    ];
    let mut failed = 0;
    for o in &outcomes {
        let ms = o.elapsed.as_millis();
        match &o.result {
            Ok(_) if o.elapsed > o.limit => {
                failed += 1;
                println!("FAIL  {}: took {ms} ms, limit {} ms", o.name, o.limit.as_millis());
            }
            Ok(detail) => println!("PASS  {} ({detail}; {ms} ms)", o.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}: {why}", o.name);
            }
        }
    }
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
