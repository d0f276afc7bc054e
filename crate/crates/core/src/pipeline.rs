//! Glue between the stages: BM25 candidate runs, sentence scoring of the
//! candidates, fusion with fixed or cross-validated parameters.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Segmenter, Sentence};
use crate::corpus::{group_run, load_corpus, CorpusFormat, Document, Qrels, RunEntry};
use crate::error::{Error, Result};
use crate::fusion::{FusionParams, Normalization, TopicEvidence};
use crate::index::{to_run, Bm25Params, InvertedIndex, ScoredDoc};
use crate::metrics::{average_precision, evaluate_run, EvalReport};
use crate::scorer::{score_batch, ScoreContext, SentenceScorer};
use crate::tuning::{assign_folds, cross_validate, CvPipeline, FoldAssignment, Grid, TopicScores};

pub const DEFAULT_DEPTH: usize = 1000;

/// BM25 retrieval for every query, in query order. Topics are searched in
/// parallel; output order does not depend on the thread count.
pub fn bm25_run(
    index: &InvertedIndex,
    params: &Bm25Params<f64>,
    queries: &[(String, String)],
    depth: usize,
    tag: &str,
) -> Vec<RunEntry> {
    queries
        .par_iter()
        .map(|(topic, query)| to_run(topic, &index.search(params, query, depth), tag))
        .collect::<Vec<_>>()
        .concat()
}

/// Per-topic candidate lists from a run, topics in first-appearance order.
pub fn candidates_from_run(run: &[RunEntry]) -> Vec<(String, Vec<ScoredDoc<f64>>)> {
    group_run(run)
        .into_iter()
        .map(|(topic, entries)| {
            let docs = entries.iter().map(|e| ScoredDoc::new(e.doc_id.as_str(), e.score)).collect();
            (topic, docs)
        })
        .collect()
}

/// Streams the corpus and keeps only the documents in `wanted`.
pub fn load_documents(
    path: &Path,
    format: CorpusFormat,
    default_lang: &str,
    wanted: &HashSet<&str>,
) -> Result<HashMap<String, Document>> {
    let mut docs = HashMap::with_capacity(wanted.len());
    for doc in load_corpus(path, format)?.with_default_lang(default_lang) {
        let doc = doc?;
        if wanted.contains(doc.doc_id.as_str()) {
            docs.insert(doc.doc_id.clone(), doc);
        }
    }
    Ok(docs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnScorerError {
    /// Abort the run.
    #[default]
    Fail,
    /// Log and score the affected topic's sentences as 0.
    Zero,
}

impl FromStr for OnScorerError {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fail" => Ok(OnScorerError::Fail),
            "zero" => Ok(OnScorerError::Zero),
            other => Err(Error::Config(format!("on-scorer-error must be fail or zero, got {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvidenceOptions {
    pub segmenter: Segmenter,
    pub on_scorer_error: OnScorerError,
    pub normalization: Normalization,
}

/// A topic ready for fusion.
#[derive(Clone, Debug)]
pub struct RerankTopic {
    pub topic_id: String,
    pub evidence: TopicEvidence<f64>,
}

/// Splits each candidate into sentences and scores them, one scorer call per
/// topic. Topics are processed in parallel; the result keeps candidate order.
pub fn gather_evidence(
    scorer: &dyn SentenceScorer,
    queries: &HashMap<String, String>,
    candidates: &[(String, Vec<ScoredDoc<f64>>)],
    docs: &HashMap<String, Document>,
    options: &EvidenceOptions,
) -> Result<Vec<RerankTopic>> {
    candidates
        .par_iter()
        .map(|(topic_id, cands)| {
            let query = queries.get(topic_id).ok_or_else(|| Error::MissingVariant {
                topic_id: topic_id.clone(),
                lang: "(selected)".into(),
            })?;
            let mut sentences: Vec<Sentence> = Vec::new();
            let mut spans = Vec::with_capacity(cands.len());
            for c in cands {
                let doc = docs
                    .get(&c.doc_id)
                    .ok_or_else(|| Error::UnknownDoc(c.doc_id.clone()))?;
                let before = sentences.len();
                sentences.extend(options.segmenter.split(&doc.doc_id, &doc.lang, &doc.contents));
                spans.push(before..sentences.len());
            }
            let ctx = ScoreContext::new(topic_id, query);
            let scores = match score_batch(scorer, &ctx, &sentences) {
                Ok(s) => s,
                Err(e) if options.on_scorer_error == OnScorerError::Zero => {
                    log::warn!("topic {topic_id}: {e}; scoring its sentences as 0");
                    vec![0.0; sentences.len()]
                }
                Err(e) => return Err(Error::Scorer(e)),
            };
            let per_doc: HashMap<String, Vec<f64>> = cands
                .iter()
                .zip(spans)
                .map(|(c, span)| (c.doc_id.clone(), scores[span].to_vec()))
                .collect();
            let evidence = TopicEvidence::new(topic_id, cands, &per_doc, options.normalization)?;
            Ok(RerankTopic {
                topic_id: topic_id.clone(),
                evidence,
            })
        })
        .collect()
}

/// Reranks every topic with one parameter setting.
pub fn rerank_fixed(topics: &[RerankTopic], params: &FusionParams<f64>, tag: &str) -> Vec<RunEntry> {
    topics
        .par_iter()
        .map(|t| t.evidence.rerank(params).to_run(&t.topic_id, tag))
        .collect::<Vec<_>>()
        .concat()
}

/// Cross-validation adapter: AP of each topic's fused ranking.
pub struct EvidencePipeline<'a> {
    pub topics: &'a [RerankTopic],
    pub qrels: &'a Qrels,
}

impl CvPipeline<f64> for EvidencePipeline<'_> {
    fn topic_ids(&self) -> Vec<String> {
        self.topics.iter().map(|t| t.topic_id.clone()).collect()
    }

    fn per_topic_ap(&self, params: &FusionParams<f64>) -> Result<TopicScores<f64>> {
        Ok(self
            .topics
            .iter()
            .filter_map(|t| {
                let ranking = t.evidence.ranking(params);
                average_precision(&ranking, self.qrels, &t.topic_id).map(|ap| (t.topic_id.clone(), ap))
            })
            .collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub params: FusionParams<f64>,
    pub grid_index: usize,
    pub train_mean_ap: f64,
    pub test_topics: Vec<String>,
}

/// Everything needed to audit a cross-validated rerank.
#[derive(Clone, Debug, Serialize)]
pub struct TuningReport {
    pub seed: u64,
    pub n_folds: usize,
    pub selection_metric: &'static str,
    pub grid: Grid<f64>,
    pub fold_of: std::collections::BTreeMap<String, usize>,
    pub folds: Vec<FoldReport>,
    pub held_out: EvalReport<f64>,
}

impl TuningReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs the cross-validation protocol and produces the held-out run, where
/// every topic is ranked with the parameters tuned on the other folds.
pub fn tune_and_rerank(
    topics: &[RerankTopic],
    qrels: &Qrels,
    grid: &Grid<f64>,
    n_folds: usize,
    seed: u64,
    tag: &str,
) -> Result<(Vec<RunEntry>, TuningReport)> {
    let ids: Vec<&str> = topics.iter().map(|t| t.topic_id.as_str()).collect();
    let assignment: FoldAssignment = assign_folds(&ids, n_folds, seed)?;
    let pipeline = EvidencePipeline { topics, qrels };
    let outcome = cross_validate(&assignment, grid, &pipeline)?;
    let run: Vec<RunEntry> = topics
        .iter()
        .map(|t| {
            let params = outcome
                .params_for(&t.topic_id)
                .expect("every topic is assigned to a fold");
            t.evidence.rerank(params).to_run(&t.topic_id, tag)
        })
        .collect::<Vec<_>>()
        .concat();
    let held_out = evaluate_run(&run, qrels);
    let report = TuningReport {
        seed,
        n_folds,
        selection_metric: "map",
        grid: grid.clone(),
        fold_of: assignment.fold_of.clone(),
        folds: outcome
            .folds
            .iter()
            .map(|f| FoldReport {
                fold: f.fold,
                params: f.choice.params.clone(),
                grid_index: f.choice.grid_index,
                train_mean_ap: f.choice.mean_ap,
                test_topics: f.test_topics.clone(),
            })
            .collect(),
        held_out,
    };
    Ok((run, report))
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
