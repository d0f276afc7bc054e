//! `xlr`: batch driver for the two-stage ranker.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer error.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use xlr_core::analysis::{read_stopwords, Analyzer, Segmenter, TokenMode, DEFAULT_MAX_SENTENCE_CHARS};
use xlr_core::corpus::{
    load_corpus, load_topics, read_qrels, read_run, write_corpus, write_qrels, write_run, write_run_to, write_topics,
    CorpusFormat, RunEntry, TopicField,
};
use xlr_core::experiment::{maybe_cached, run_experiment, ExperimentConfig, RunOptions};
use xlr_core::fusion::{FusionParams, Normalization};
use xlr_core::index::{Bm25Params, InvertedIndex};
use xlr_core::metrics::evaluate_run;
use xlr_core::pipeline::{
    bm25_run, candidates_from_run, gather_evidence, load_documents, rerank_fixed, tune_and_rerank, with_threads,
    EvidenceOptions, OnScorerError, DEFAULT_DEPTH,
};
use xlr_core::scorer::conformance::run_checks;
use xlr_core::scorer::protocol::{handle_http, serve_stdio};
use xlr_core::scorer::{ScorerSpec, SentenceScorer, DEFAULT_BATCH_SIZE};
use xlr_core::synthetic::{generate, SyntheticSpec, DEFAULT_SEED};
use xlr_core::tuning::{Grid, DEFAULT_FOLDS};
use xlr_core::{Error, ScorerError};

const CACHE_ENV: &str = "XLR_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "xlr", version, about = "BM25 retrieval with sentence-level reranking")]
struct Cli {
    /// Worker threads for per-topic work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index snapshot from a corpus.
    Index(IndexArgs),
    /// BM25 retrieval for a topic set.
    Search(SearchArgs),
    /// Rerank BM25 candidates with sentence evidence.
    Rerank(Box<RerankArgs>),
    /// Evaluate a run against qrels (AP, P@20, NDCG@20).
    Eval(EvalArgs),
    /// Run a full experiment described by a TOML config.
    Experiment(ExperimentArgs),
    /// Write the synthetic test collection.
    Synth(SynthArgs),
    /// Expose a scorer over the wire protocol (stdio or HTTP).
    Serve(ServeArgs),
    /// Run protocol conformance checks against a scorer.
    CheckScorer(CheckArgs),
}

#[derive(Args, Debug, Clone)]
struct AnalyzerArgs {
    /// Document language tag; picks the tokenizer defaults.
    #[arg(long)]
    lang: String,
    /// Keep case instead of lowercasing.
    #[arg(long)]
    keep_case: bool,
    /// Stopword file, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Tokenization: unicode-word or cjk-bigram.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TokenMode>,
}

impl AnalyzerArgs {
    fn build(&self) -> xlr_core::Result<Analyzer> {
        let mut a = Analyzer::for_lang(&self.lang).with_lowercase(!self.keep_case);
        if let Some(m) = self.mode {
            a = a.with_mode(m);
        }
        if let Some(p) = &self.stopwords {
            a = a.with_stopwords(read_stopwords(p)?);
        }
        Ok(a)
    }
}

fn parse_mode(s: &str) -> Result<TokenMode, String> {
    match s {
        "unicode-word" => Ok(TokenMode::UnicodeWord),
        "cjk-bigram" => Ok(TokenMode::CjkBigram),
        _ => Err("expected unicode-word or cjk-bigram".into()),
    }
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    match s {
        "none" => Ok(Normalization::None),
        "min-max" => Ok(Normalization::MinMax),
        _ => Err("expected none or min-max".into()),
    }
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// jsonl or trec-sgml.
    #[arg(long, default_value = "jsonl")]
    format: CorpusFormat,
    #[command(flatten)]
    analyzer: AnalyzerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct TopicArgs {
    #[arg(long)]
    topics: PathBuf,
    /// Which topic variant to use as the query.
    #[arg(long)]
    query_lang: String,
    /// title or description.
    #[arg(long, default_value = "title")]
    field: TopicField,
}

#[derive(Args, Debug, Clone)]
struct Bm25Args {
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    #[arg(long, default_value_t = 0.4)]
    b: f64,
    /// Candidates per topic.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    topics: TopicArgs,
    #[command(flatten)]
    bm25: Bm25Args,
    #[arg(long, default_value = "bm25")]
    tag: String,
    /// Output run file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RerankArgs {
    /// Candidates from an existing BM25 run...
    #[arg(long, conflicts_with = "index", required_unless_present = "index")]
    run: Option<PathBuf>,
    /// ...or retrieve them from an index snapshot.
    #[arg(long)]
    index: Option<PathBuf>,
    #[command(flatten)]
    bm25: Bm25Args,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: CorpusFormat,
    #[command(flatten)]
    analyzer: AnalyzerArgs,
    #[command(flatten)]
    topics: TopicArgs,
    /// Sentence scorer spec, e.g. builtin:lexical or http://host:port.
    #[arg(long)]
    scorer: String,
    /// Fixed parameters from a JSON file: {"alpha": .., "weights": [..], "k": ..}.
    #[arg(long, conflicts_with_all = ["alpha", "qrels"])]
    params: Option<PathBuf>,
    /// Fixed interpolation weight of the BM25 score.
    #[arg(long, requires = "weights", conflicts_with = "qrels")]
    alpha: Option<f64>,
    /// Fixed sentence weights, comma separated; the first must be 1.
    #[arg(long, value_delimiter = ',', requires = "alpha")]
    weights: Option<Vec<f64>>,
    /// Tune by cross-validation against these qrels.
    #[arg(long, required_unless_present_any = ["alpha", "params"])]
    qrels: Option<PathBuf>,
    /// Number of top sentences combined when tuning.
    #[arg(long, default_value_t = 1)]
    k_sentences: usize,
    #[arg(long, value_delimiter = ',')]
    alpha_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    weight_values: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tuning report (JSON), written when tuning.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "rerank")]
    tag: String,
    /// none or min-max scaling of BM25 scores.
    #[arg(long, default_value = "none", value_parser = parse_normalization)]
    normalize: Normalization,
    /// fail or zero.
    #[arg(long, default_value = "fail")]
    on_scorer_error: OnScorerError,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SENTENCE_CHARS)]
    max_sentence_chars: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// tsv or json.
    #[arg(long, default_value = "tsv", value_parser = ["tsv", "json"])]
    output: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    config: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    scorer: String,
    /// Listen for HTTP on this address instead of serving stdio.
    #[arg(long)]
    http: Option<String>,
    /// Model name reported by /health.
    #[arg(long)]
    model: Option<String>,
    /// Language of the lexical scorer's analyzer.
    #[arg(long, default_value = "en")]
    lang: String,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    scorer: String,
    #[arg(long, default_value = "en")]
    lang: String,
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_run(path: Option<&Path>, run: &[RunEntry]) -> anyhow::Result<()> {
    match path {
        Some(p) => write_run(p, run)?,
        None => {
            let mut out = output(None)?;
            write_run_to(&mut out, run)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn emit_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    let mut out = output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_index(args: &IndexArgs) -> anyhow::Result<()> {
    let analyzer = args.analyzer.build()?;
    let docs = load_corpus(&args.corpus, args.format)?.with_default_lang(&args.analyzer.lang);
    let index = InvertedIndex::build(docs, analyzer)?;
    index.save(&args.out)?;
    log::info!("indexed {} documents, {} terms", index.num_docs(), index.num_terms());
    Ok(())
}

fn search(index: &InvertedIndex, topics: &TopicArgs, bm25: &Bm25Args, tag: &str) -> anyhow::Result<Vec<RunEntry>> {
    if bm25.depth == 0 {
        return Err(Error::Config("--depth must be positive".into()).into());
    }
    let queries = load_topics(&topics.topics, &topics.query_lang, topics.field)?;
    let params = Bm25Params::new(bm25.k1, bm25.b)?;
    Ok(bm25_run(index, &params, &queries, bm25.depth, tag))
}

fn cmd_search(args: &SearchArgs) -> anyhow::Result<()> {
    let index = InvertedIndex::load(&args.index)?;
    let run = search(&index, &args.topics, &args.bm25, &args.tag)?;
    emit_run(args.out.as_deref(), &run)
}

fn cmd_rerank(args: &RerankArgs) -> anyhow::Result<()> {
    let spec: ScorerSpec = args.scorer.parse()?;
    let analyzer = args.analyzer.build()?;
    let run = match (&args.run, &args.index) {
        (Some(p), _) => read_run(p)?,
        (None, Some(p)) => search(&InvertedIndex::load(p)?, &args.topics, &args.bm25, "bm25")?,
        (None, None) => bail!(Error::Config("give --run or --index".into())),
    };
    let queries: HashMap<String, String> = load_topics(&args.topics.topics, &args.topics.query_lang, args.topics.field)?
        .into_iter()
        .collect();
    let wanted: HashSet<&str> = run.iter().map(|e| e.doc_id.as_str()).collect();
    let docs = load_documents(&args.corpus, args.format, &args.analyzer.lang, &wanted)?;
    let scorer = maybe_cached(spec.build(&analyzer, args.batch_size)?, cache_dir().as_deref())?;
    let options = EvidenceOptions {
        segmenter: Segmenter::new(args.max_sentence_chars),
        on_scorer_error: args.on_scorer_error,
        normalization: args.normalize,
    };
    let evidence = gather_evidence(scorer.as_ref(), &queries, &candidates_from_run(&run), &docs, &options)?;

    let reranked = match (args.alpha, &args.weights, &args.qrels) {
        _ if args.params.is_some() => {
            let path = args.params.as_deref().expect("checked");
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let params: FusionParams<f64> = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            rerank_fixed(&evidence, &params, &args.tag)
        }
        (Some(alpha), Some(weights), _) => {
            let params = FusionParams::new(alpha, weights.clone())?;
            rerank_fixed(&evidence, &params, &args.tag)
        }
        (_, _, Some(qrels_path)) => {
            let qrels = read_qrels(qrels_path)?;
            let std = Grid::<f64>::standard();
            let grid = Grid::new(
                args.alpha_values.clone().unwrap_or(std.alpha_values),
                args.weight_values.clone().unwrap_or(std.weight_values),
                vec![args.k_sentences],
            )?;
            let (reranked, report) = tune_and_rerank(&evidence, &qrels, &grid, args.folds, args.seed, &args.tag)?;
            if let Some(p) = &args.report {
                fs::write(p, report.to_json()).map_err(|e| Error::io(p, e))?;
            }
            for f in &report.folds {
                log::info!("fold {}: {} (train AP {:.4})", f.fold, f.params, f.train_mean_ap);
            }
            reranked
        }
        _ => bail!(Error::Config("give --params, --alpha/--weights or --qrels".into())),
    };
    emit_run(args.out.as_deref(), &reranked)
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let run = read_run(&args.run)?;
    let qrels = read_qrels(&args.qrels)?;
    let report = evaluate_run(&run, &qrels);
    for t in &report.skipped {
        log::warn!("topic {t} has no relevant documents; excluded from means");
    }
    let text = match args.output.as_str() {
        "json" => report.to_json(),
        _ => report.to_tsv(),
    };
    emit_text(args.out.as_deref(), &text)
}

fn cmd_experiment(args: &ExperimentArgs, threads: usize) -> anyhow::Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let summary = run_experiment(
        &config,
        &RunOptions {
            threads,
            cache_dir: cache_dir(),
        },
    )?;
    for row in &summary.rows {
        match &row.mean {
            Some(m) => println!(
                "{}\t{}\tAP={:.4}\tP@20={:.4}\tNDCG@20={:.4}\t({} topics)",
                summary.name, row.name, m.ap, m.p20, m.ndcg20, m.num_topics
            ),
            None => println!("{}\t{}\t{}", summary.name, row.name, row.run.display()),
        }
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let c = generate(&SyntheticSpec {
        seed: args.seed,
        ..SyntheticSpec::default()
    });
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_corpus(&args.out.join("corpus.en.jsonl"), &c.corpus_en)?;
    write_corpus(&args.out.join("corpus.zh.jsonl"), &c.corpus_zh)?;
    write_topics(&args.out.join("topics.jsonl"), &c.topics)?;
    write_qrels(&args.out.join("qrels.txt"), &c.qrels)?;
    Ok(())
}

fn build_scorer(spec: &str, lang: &str) -> anyhow::Result<Arc<dyn SentenceScorer>> {
    let spec: ScorerSpec = spec.parse()?;
    Ok(spec.build(&Analyzer::for_lang(lang), DEFAULT_BATCH_SIZE)?)
}

fn cmd_serve(args: &ServeArgs) -> anyhow::Result<()> {
    let scorer = build_scorer(&args.scorer, &args.lang)?;
    let model = args.model.clone().unwrap_or_else(|| scorer.fingerprint());
    let Some(addr) = &args.http else {
        serve_stdio(scorer.as_ref(), io::stdin().lock(), io::stdout().lock())?;
        return Ok(());
    };
    let server = tiny_http::Server::http(addr.as_str()).map_err(|e| anyhow::anyhow!("cannot listen on {addr}: {e}"))?;
    match server.server_addr().to_ip() {
        Some(a) => eprintln!("listening on http://{a}"),
        None => eprintln!("listening on {addr}"),
    }
    let content_type = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    for mut request in server.incoming_requests() {
        let mut body = String::new();
        let (status, reply) = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => handle_http(
                scorer.as_ref(),
                &model,
                request.method().as_str(),
                request.url(),
                &body,
            ),
            Err(e) => (400, serde_json::json!({ "error": e.to_string() }).to_string()),
        };
        let response = tiny_http::Response::from_string(reply)
            .with_status_code(status)
            .with_header(content_type.clone());
        if let Err(e) = request.respond(response) {
            log::warn!("failed to send response: {e}");
        }
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> anyhow::Result<()> {
    let scorer = build_scorer(&args.scorer, &args.lang)?;
    let outcomes = run_checks(scorer.as_ref());
    let mut failed = 0;
    for o in &outcomes {
        println!("{}\t{}\t{}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(Error::Scorer(ScorerError::Transport(format!("{failed} conformance check(s) failed"))).into());
    }
    Ok(())
}

/// The error chain on one line, skipping causes already spelled out by
/// the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// Maps an error to the documented exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                _ if e.is_scorer_error() => match e {
                    Error::Scorer(ScorerError::Spec { .. }) => 1,
                    _ => 3,
                },
                Error::Config(_) | Error::InvalidParams(_) => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<ScorerError>() {
            return if matches!(e, ScorerError::Spec { .. }) { 1 } else { 3 };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = cli.threads;
    match &cli.command {
        Command::Experiment(args) => cmd_experiment(args, threads),
        Command::Serve(args) => cmd_serve(args),
        command => with_threads(threads, || match command {
            Command::Index(args) => cmd_index(args),
            Command::Search(args) => cmd_search(args),
            Command::Rerank(args) => cmd_rerank(args),
            Command::Eval(args) => cmd_eval(args),
            Command::Synth(args) => cmd_synth(args),
            Command::CheckScorer(args) => cmd_check(args),
            Command::Experiment(_) | Command::Serve(_) => unreachable!(),
        })
        .context("starting worker pool")?,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
