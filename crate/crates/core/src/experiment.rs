//! Declarative experiment: one TOML file describes a full
//! index → search → score → (cross-validated) rerank → evaluate run.
//!
//! ```toml
//! name = "synthetic-en"
//! corpus = "../data/synthetic/corpus.en.jsonl"
//! doc_lang = "en"
//! topics = "../data/synthetic/topics.jsonl"
//! query_lang = "en"
//! qrels = "../data/synthetic/qrels.txt"
//! scorer = "builtin:lexical"
//! seed = 42
//! out_dir = "../out/synthetic-en"
//!
//! [grid]
//! k_values = [1, 2, 3]
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{read_stopwords, Analyzer, Segmenter, TokenMode, DEFAULT_MAX_SENTENCE_CHARS};
use crate::corpus::{load_corpus, read_qrels, read_topics, select_queries, write_run, CorpusFormat, Qrels, TopicField};
use crate::error::{Error, Result};
use crate::fusion::{FusionParams, Normalization};
use crate::index::{Bm25Params, InvertedIndex};
use crate::metrics::{evaluate_run, EvalReport, MeanMetrics};
use crate::pipeline::{
    bm25_run, candidates_from_run, gather_evidence, load_documents, rerank_fixed, tune_and_rerank, with_threads,
    EvidenceOptions, OnScorerError, DEFAULT_DEPTH,
};
use crate::scorer::{CachedScorer, ScorerSpec, SentenceScorer, DEFAULT_BATCH_SIZE};
use crate::tuning::{Grid, DEFAULT_FOLDS};

fn default_true() -> bool {
    true
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_sentence_chars() -> usize {
    DEFAULT_MAX_SENTENCE_CHARS
}

fn default_bm25_tag() -> String {
    "bm25".into()
}

fn default_rerank_tag() -> String {
    "rerank".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub lowercase: Option<bool>,
    pub stopwords: Option<PathBuf>,
    pub mode: Option<TokenMode>,
}

impl AnalyzerConfig {
    pub fn build(&self, lang: &str, base: &Path) -> Result<Analyzer> {
        let mut a = Analyzer::for_lang(lang);
        if let Some(l) = self.lowercase {
            a = a.with_lowercase(l);
        }
        if let Some(m) = self.mode {
            a = a.with_mode(m);
        }
        if let Some(p) = &self.stopwords {
            a = a.with_stopwords(read_stopwords(&base.join(p))?);
        }
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Config {
    fn default() -> Self {
        let p = Bm25Params::<f64>::default();
        Bm25Config { k1: p.k1, b: p.b }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub alpha_values: Option<Vec<f64>>,
    pub weight_values: Option<Vec<f64>>,
    pub k_values: Option<Vec<usize>>,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid<f64>> {
        let std = Grid::<f64>::standard();
        Grid::new(
            self.alpha_values.clone().unwrap_or(std.alpha_values),
            self.weight_values.clone().unwrap_or(std.weight_values),
            self.k_values.clone().unwrap_or(std.k_values),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub corpus: PathBuf,
    #[serde(default = "default_corpus_format")]
    pub corpus_format: CorpusFormat,
    pub doc_lang: String,
    pub topics: PathBuf,
    /// Which topic variant forms the query; differs from `doc_lang` in
    /// cross-lingual runs that consume a translated variant.
    pub query_lang: String,
    #[serde(default)]
    pub topic_field: TopicField,
    pub qrels: Option<PathBuf>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub analyzer: AnalyzerConfig,
    #[serde(default)]
    pub bm25: Bm25Config,
    /// Set to false for a BM25-only experiment.
    #[serde(default = "default_true")]
    pub rerank: bool,
    pub scorer: Option<String>,
    #[serde(default)]
    pub on_scorer_error: OnScorerError,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_sentence_chars")]
    pub max_sentence_chars: usize,
    #[serde(default)]
    pub normalization: Normalization,
    /// Fixed fusion parameters; when absent the grid is cross-validated.
    pub params: Option<FusionParams<f64>>,
    pub grid: Option<GridConfig>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bm25_tag")]
    pub bm25_tag: String,
    #[serde(default = "default_rerank_tag")]
    pub rerank_tag: String,
    pub out_dir: PathBuf,
}

fn default_corpus_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Ok(Self::from_toml(&text)?.resolved(base))
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.topics);
        fix(&mut self.out_dir);
        if let Some(q) = self.qrels.as_mut() {
            fix(q);
        }
        if let Some(s) = self.analyzer.stopwords.as_mut() {
            fix(s);
        }
        if let Some(spec) = self.scorer.as_ref() {
            if let Ok(parsed) = spec.parse::<ScorerSpec>() {
                self.scorer = Some(parsed.resolve_paths(base).to_string());
            }
        }
        self
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be positive".into()));
        }
        if self.rerank && self.scorer.is_none() {
            return Err(Error::Config("rerank = true needs a scorer".into()));
        }
        if self.rerank && self.params.is_none() && self.qrels.is_none() {
            return Err(Error::Config("cross-validated reranking needs qrels".into()));
        }
        if self.params.is_some() && self.grid.is_some() {
            return Err(Error::Config("give either params or grid, not both".into()));
        }
        if self.batch_size == 0 || self.max_sentence_chars == 0 {
            return Err(Error::Config("batch_size and max_sentence_chars must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub run: PathBuf,
    pub mean: Option<MeanMetrics<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub seed: u64,
    pub query_lang: String,
    pub doc_lang: String,
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Options that are not part of the experiment's identity.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads (0 = all cores).
    pub threads: usize,
    /// Persistent sentence-score cache directory.
    pub cache_dir: Option<PathBuf>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_eval(out_dir: &Path, stem: &str, report: &EvalReport<f64>) -> Result<()> {
    write_text(&out_dir.join(format!("{stem}.eval.tsv")), &report.to_tsv())?;
    write_text(&out_dir.join(format!("{stem}.eval.json")), &report.to_json())
}

/// Wraps a scorer with the persistent cache when a directory is given.
pub fn maybe_cached(scorer: std::sync::Arc<dyn SentenceScorer>, cache_dir: Option<&Path>) -> Result<Box<dyn SentenceScorer>> {
    Ok(match cache_dir {
        Some(dir) => Box::new(CachedScorer::persistent(scorer, dir)?),
        None => Box::new(scorer),
    })
}

/// Runs the whole protocol and writes runs, evaluations and tuning reports
/// into `out_dir`:
///
/// * `bm25.run` (+ `.eval.tsv`/`.eval.json` with qrels)
/// * fixed params: `rerank.run`
/// * cross-validation: `rerank-{k}s.run` and `tuning-{k}s.json` per k
/// * `summary.json`
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentSummary> {
    config.validate()?;
    with_threads(options.threads, || run_inner(config, options))?
}

fn run_inner(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentSummary> {
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let base = Path::new(".");
    let analyzer = config.analyzer.build(&config.doc_lang, base)?;
    let docs = load_corpus(&config.corpus, config.corpus_format)?.with_default_lang(&config.doc_lang);
    let index = InvertedIndex::build(docs, analyzer)?;
    log::info!("{}: indexed {} documents, {} terms", config.name, index.num_docs(), index.num_terms());

    let topics = read_topics(&config.topics)?;
    let queries = select_queries(&topics, &config.query_lang, config.topic_field)?;
    let bm25 = Bm25Params::new(config.bm25.k1, config.bm25.b)?;
    let run = bm25_run(&index, &bm25, &queries, config.depth, &config.bm25_tag);
    let bm25_path = config.out_dir.join("bm25.run");
    write_run(&bm25_path, &run)?;

    let qrels: Option<Qrels> = config.qrels.as_deref().map(read_qrels).transpose()?;
    let mut rows = Vec::new();
    let mean = match &qrels {
        Some(q) => {
            let report = evaluate_run(&run, q);
            write_eval(&config.out_dir, "bm25", &report)?;
            Some(report.mean)
        }
        None => None,
    };
    rows.push(SummaryRow {
        name: "BM25".into(),
        run: bm25_path,
        mean,
    });

    if config.rerank {
        let spec: ScorerSpec = config.scorer.as_deref().unwrap_or_default().parse()?;
        let scorer = maybe_cached(spec.build(index.analyzer(), config.batch_size)?, options.cache_dir.as_deref())?;
        drop(index);
        let candidates = candidates_from_run(&run);
        let wanted: HashSet<&str> = run.iter().map(|e| e.doc_id.as_str()).collect();
        let docs = load_documents(&config.corpus, config.corpus_format, &config.doc_lang, &wanted)?;
        let query_map: HashMap<String, String> = queries.iter().cloned().collect();
        let evidence_options = EvidenceOptions {
            segmenter: Segmenter::new(config.max_sentence_chars),
            on_scorer_error: config.on_scorer_error,
            normalization: config.normalization,
        };
        let evidence = gather_evidence(scorer.as_ref(), &query_map, &candidates, &docs, &evidence_options)?;

        if let Some(params) = &config.params {
            let reranked = rerank_fixed(&evidence, params, &config.rerank_tag);
            let path = config.out_dir.join("rerank.run");
            write_run(&path, &reranked)?;
            let mean = match &qrels {
                Some(q) => {
                    let report = evaluate_run(&reranked, q);
                    write_eval(&config.out_dir, "rerank", &report)?;
                    Some(report.mean)
                }
                None => None,
            };
            rows.push(SummaryRow {
                name: format!("{}S", params.k()),
                run: path,
                mean,
            });
        } else {
            let qrels = qrels.as_ref().expect("validated");
            let grid = config
                .grid
                .as_ref()
                .map(GridConfig::build)
                .transpose()?
                .unwrap_or_else(Grid::standard);
            for &k in &grid.k_values {
                let stem = format!("rerank-{k}s");
                let (reranked, report) = tune_and_rerank(
                    &evidence,
                    qrels,
                    &grid.with_k(k)?,
                    config.folds,
                    config.seed,
                    &config.rerank_tag,
                )?;
                let path = config.out_dir.join(format!("{stem}.run"));
                write_run(&path, &reranked)?;
                write_eval(&config.out_dir, &stem, &report.held_out)?;
                write_text(&config.out_dir.join(format!("tuning-{k}s.json")), &report.to_json())?;
                rows.push(SummaryRow {
                    name: format!("{k}S"),
                    run: path,
                    mean: Some(report.held_out.mean.clone()),
                });
            }
        }
    }

    let summary = ExperimentSummary {
        name: config.name.clone(),
        seed: config.seed,
        query_lang: config.query_lang.clone(),
        doc_lang: config.doc_lang.clone(),
        rows,
    };
    write_text(
        &config.out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}
