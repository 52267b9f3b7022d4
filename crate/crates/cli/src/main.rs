//! `tqk`: command-line frontend. Results go to stdout as JSON or JSONL,
//! diagnostics to stderr. Exit status is 0 on success, 1 on usage errors and
//! 2 on runtime errors.

use clap::builder::PossibleValuesParser;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::error::Error;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use tqk_client::Client;
use tqk_core::api::{AskRequest, AskResponse, AskSource, PromptSettings, Timing};
use tqk_core::benchmark::{assemble, BenchConfig};
use tqk_core::evaluation::{evaluate_dataset, parse_metrics};
use tqk_core::ingest::{convert, delimiter_for, import_delimited, load_unified, write_unified, AdapterSpec, ADAPTERS};
use tqk_core::linearize::{render, truncate_to_budget, TableFormat, TokenBudget, Tokenizer};
use tqk_core::reasoner::{
    answer_question, LanguageModel, LlmEndpoint, OpenAiClient, PipelineError, PromptSpec, Scheme,
};
use tqk_core::retrieval::{retrieve, Granularity, Locator, RetrieverConfig};
use tqk_core::{Answer, Category, QAExample, UnifiedTable};
use tqk_service::{AppState, ServiceConfig, TableStore};

type Result<T, E = Box<dyn Error>> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "tqk", version, about = "Table question answering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a source dataset file to unified JSONL.
    Ingest(IngestArgs),
    /// Render tables as markdown or flattened text, optionally truncated to a token budget.
    Linearize(LinearizeArgs),
    /// Rank table fragments against each example's question with BM25.
    Retrieve(RetrieveArgs),
    /// Score predictions against gold answers.
    Eval(EvalArgs),
    /// Long-context benchmark assembly.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Answer a question about a CSV or TSV table with the configured LLM.
    Ask(AskArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_parser = PossibleValuesParser::new(ADAPTERS))]
    adapter: String,
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long = "out", value_name = "PATH")]
    output: PathBuf,
    /// Adapter option as key=value; repeatable.
    #[arg(long = "option", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    options: Vec<(String, String)>,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct TableSource {
    /// Unified JSONL file.
    #[arg(long = "in", value_name = "PATH", group = "source")]
    input: Option<PathBuf>,
    /// CSV or TSV file; the delimiter follows the extension.
    #[arg(long, value_name = "PATH", group = "source")]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LinearizeArgs {
    #[command(flatten)]
    source: TableSource,
    /// Treat the first CSV row as data and detect header rows instead.
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value = "markdown")]
    format: TableFormat,
    /// Keep the longest prefix of body rows that fits this many tokens.
    #[arg(long)]
    budget: Option<usize>,
    /// Vocabulary file for token counting (one token per line).
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, default_value = "row")]
    granularity: Granularity,
    #[arg(long, default_value_t = 5)]
    topk: usize,
    #[arg(long)]
    include_passages: bool,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
    #[arg(long, value_name = "PATH")]
    gold: PathBuf,
    #[arg(long, default_value = "em,f1")]
    metrics: String,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Filter and sample the configured pools into a benchmark file.
    Build {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Overrides the config's report path.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// TOML file registering datasets and the table store directory.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Table store directory; overrides the config.
    #[arg(long, value_name = "PATH")]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AskArgs {
    /// CSV or TSV file.
    #[arg(long, value_name = "PATH")]
    table: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, default_value = "direct")]
    scheme: Scheme,
    #[arg(long, default_value = "markdown")]
    format: TableFormat,
    #[arg(long, default_value_t = 4096)]
    budget: usize,
    /// Send the request to a running service instead of calling the LLM directly.
    #[arg(long, value_name = "URL")]
    server: Option<String>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Linearize(args) => linearize(args),
        Command::Retrieve(args) => retrieve_cmd(args),
        Command::Eval(args) => eval(args),
        Command::Bench { command: BenchCommand::Build { config, out, report } } => bench_build(&config, out, report),
        Command::Serve(args) => runtime()?.block_on(serve(args)),
        Command::Ask(args) => runtime()?.block_on(ask(args)),
    }
}

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let spec = args.options.into_iter().fold(AdapterSpec::new(&args.adapter)?, |s, (k, v)| s.with_option(k, v));
    let count = convert(&spec, &args.input, &args.output)?;
    eprintln!("wrote {count} examples to {}", args.output.display());
    print_json(&serde_json::json!({ "adapter": args.adapter, "examples": count, "out": args.output }))
}

fn load_examples(path: &Path) -> Result<Vec<QAExample>> {
    Ok(load_unified(path)?.collect::<Result<Vec<_>, _>>()?)
}

fn table_file_example(path: &Path, has_header: bool, question: &str) -> Result<QAExample> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let table = import_delimited(path, delimiter_for(&name), has_header)?;
    Ok(QAExample {
        id: name,
        dataset: "custom".into(),
        category: Category::Structured,
        question: question.to_string(),
        table,
        passages: Vec::new(),
        images: Vec::new(),
        answer: Answer::direct(""),
    })
}

#[derive(Serialize)]
struct Linearized<'a> {
    id: &'a str,
    format: TableFormat,
    tokens: usize,
    rows_kept: usize,
    rows_total: usize,
    text: String,
}

fn linearize(args: LinearizeArgs) -> Result<()> {
    let tokenizer = match &args.vocab {
        Some(path) => Tokenizer::plugged(path)?,
        None => Tokenizer::Default,
    };
    let budget = args.budget.map(|n| TokenBudget::new(n, tokenizer.clone())).transpose()?;
    let examples = match (&args.source.input, &args.source.table) {
        (Some(path), _) => load_examples(path)?,
        (None, Some(path)) => vec![table_file_example(path, !args.no_header, "")?],
        (None, None) => unreachable!("clap requires one source"),
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for ex in &examples {
        let table: UnifiedTable = match &budget {
            Some(b) => truncate_to_budget(&ex.table, args.format, b).map_err(|e| format!("{}: {e}", ex.id))?,
            None => ex.table.clone(),
        };
        let text = render(&table, args.format);
        let line = Linearized {
            id: &ex.id,
            format: args.format,
            tokens: tokenizer.count(&text),
            rows_kept: table.body().len(),
            rows_total: ex.table.body().len(),
            text,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RankedLine<'a> {
    id: &'a str,
    rank: usize,
    locator: &'a Locator,
    score: f64,
    text: &'a str,
}

fn retrieve_cmd(args: RetrieveArgs) -> Result<()> {
    let cfg = RetrieverConfig {
        granularity: args.granularity,
        k1: args.k1,
        b: args.b,
        top_k: args.topk,
        include_passages: args.include_passages,
    };
    cfg.validate()?;
    let mut out = BufWriter::new(io::stdout().lock());
    for ex in load_examples(&args.input)? {
        let ranked = retrieve(&ex, &cfg, &ex.question).map_err(|e| format!("{}: {e}", ex.id))?;
        for (i, r) in ranked.iter().enumerate() {
            let line =
                RankedLine { id: &ex.id, rank: i + 1, locator: &r.unit.locator, score: r.score, text: &r.unit.text };
            serde_json::to_writer(&mut out, &line)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let metrics = parse_metrics(&args.metrics)?;
    let report = evaluate_dataset(&args.pred, &args.gold, &metrics)?;
    eprint!("{}", report.to_text_table());
    print_json(&report)
}

fn bench_build(config: &Path, out: Option<PathBuf>, report: Option<PathBuf>) -> Result<()> {
    let mut cfg = BenchConfig::from_file(config)?;
    cfg.output = out.or(cfg.output);
    cfg.report = report.or(cfg.report);
    let pools = cfg.load_pools()?;
    let bench = assemble(&cfg, pools)?;
    match &cfg.output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_unified(&mut w, &bench.examples)?;
            w.flush()?;
            eprintln!("wrote {} examples to {}", bench.examples.len(), path.display());
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_unified(&mut w, &bench.examples)?;
            w.flush()?;
        }
    }
    if let Some(path) = &cfg.report {
        std::fs::write(path, serde_json::to_string_pretty(&bench.report)?)
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if cfg.output.is_some() {
        print_json(&bench.report)?;
    }
    Ok(())
}

async fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let cfg = match &args.config {
        Some(path) => ServiceConfig::from_file(path)?,
        None => ServiceConfig::default(),
    };
    let datasets = cfg.load_datasets()?;
    let store_dir = args.store.or(cfg.store_dir).unwrap_or_else(|| PathBuf::from("tables"));
    let store = TableStore::open(&store_dir)?;
    let model = AppState::model_from_env();
    if model.is_none() {
        eprintln!("warning: TQK_LLM_BASE_URL is not set; /ask will fail until an endpoint is configured");
    }
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    let addr = listener.local_addr()?;
    print_json(&serde_json::json!({ "listening": addr.to_string() }))?;
    tqk_service::serve(listener, AppState::new(datasets, store, model)).await?;
    Ok(())
}

async fn ask(args: AskArgs) -> Result<()> {
    let settings = PromptSettings { input_format: args.format, scheme: args.scheme, shots: 0, max_tokens: args.budget };
    if let Some(url) = &args.server {
        let client = Client::new(url.clone());
        let name = args.table.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let text = std::fs::read_to_string(&args.table).map_err(|e| format!("{}: {e}", args.table.display()))?;
        let meta = client.upload_table(&name, text, true).await?;
        let req = AskRequest {
            source: AskSource::Table { id: meta.id },
            question: Some(args.question),
            spec: settings,
            retrieve: None,
        };
        return print_json(&client.ask(&req).await?);
    }
    let ex = table_file_example(&args.table, true, &args.question)?;
    let endpoint = LlmEndpoint::from_env().map_err(PipelineError::from)?;
    let model: Arc<dyn LanguageModel> = Arc::new(OpenAiClient::new(endpoint)?);
    let spec = PromptSpec::new(
        settings.input_format,
        settings.scheme,
        TokenBudget::new(settings.max_tokens, Tokenizer::Default)?,
    );
    let outcome = answer_question(&ex, &spec, None, model.as_ref()).await?;
    print_json(&AskResponse {
        answer: outcome.answer.value,
        derivation: outcome.answer.derivation,
        format: outcome.answer.format,
        prompt_id: outcome.prompt_id,
        timing: Timing { total_ms: outcome.total_time.as_millis() as u64, llm_ms: outcome.llm_time.as_millis() as u64 },
    })
}
