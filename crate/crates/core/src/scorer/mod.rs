//! Sentence relevance scorers.
//!
//! Every scorer maps `(query, sentences)` to one probability-like score in
//! `[0, 1]` per sentence, order-aligned with the input. Built-in scorers are
//! deterministic and pure; remote scorers speak the JSON wire protocol in
//! [`protocol`] over HTTP or a child process's stdio.

mod builtin;
mod cache;
pub mod conformance;
pub mod protocol;
mod remote;
mod spec;

use serde::{Deserialize, Serialize};

pub use builtin::{ClairvoyantScorer, ConstantScorer, LexicalOverlapScorer};
pub use cache::CachedScorer;
pub use protocol::{ScoreRequest, ScoreResponse};
pub use remote::{HttpTransport, RemoteScorer, StdioChannel, StdioProcess, Transport, DEFAULT_BATCH_SIZE};
pub use spec::ScorerSpec;

use crate::analysis::Sentence;
use crate::error::ScorerError;

/// What a scorer knows about the query being scored. `topic_id` is only
/// consulted by oracle scorers; the wire protocol carries the query text.
#[derive(Clone, Copy, Debug)]
pub struct ScoreContext<'a> {
    pub topic_id: &'a str,
    pub query: &'a str,
}

impl<'a> ScoreContext<'a> {
    pub fn new(topic_id: &'a str, query: &'a str) -> Self {
        ScoreContext { topic_id, query }
    }
}

pub trait SentenceScorer: Send + Sync {
    /// Identifies the scorer and its configuration; cache entries are keyed by it.
    fn fingerprint(&self) -> String;

    /// One score per sentence, in input order. Use [`score_batch`] to get the
    /// alignment and range checks.
    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError>;

    /// Health probe for remote scorers: the served model's name.
    fn health(&self) -> Option<Result<String, ScorerError>> {
        None
    }
}

impl<T: SentenceScorer + ?Sized> SentenceScorer for std::sync::Arc<T> {
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        (**self).score(ctx, sentences)
    }

    fn health(&self) -> Option<Result<String, ScorerError>> {
        (**self).health()
    }
}

impl<T: SentenceScorer + ?Sized> SentenceScorer for Box<T> {
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        (**self).score(ctx, sentences)
    }

    fn health(&self) -> Option<Result<String, ScorerError>> {
        (**self).health()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub doc_id: String,
    pub sentence_index: usize,
    pub score: f64,
}

/// Checks a score vector against the gateway contract: one finite score in
/// `[0, 1]` per sentence. Violations are reported, never clamped.
pub fn check_scores(request_id: &str, expected: usize, scores: &[f64]) -> Result<(), ScorerError> {
    if scores.len() != expected {
        return Err(ScorerError::protocol(
            request_id,
            format!("expected {expected} scores, got {}", scores.len()),
        ));
    }
    if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
        return Err(ScorerError::protocol(request_id, format!("score {i} = {s} outside [0, 1]")));
    }
    Ok(())
}

/// Scores a batch and enforces alignment and range.
pub fn score_batch<S>(scorer: &S, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError>
where
    S: SentenceScorer + ?Sized,
{
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let scores = scorer.score(ctx, sentences)?;
    check_scores(&format!("{}/{}", ctx.topic_id, scorer.fingerprint()), sentences.len(), &scores)?;
    Ok(scores)
}

pub fn score_sentences<S>(
    scorer: &S,
    ctx: &ScoreContext<'_>,
    sentences: &[Sentence],
) -> Result<Vec<ScoredSentence>, ScorerError>
where
    S: SentenceScorer + ?Sized,
{
    let scores = score_batch(scorer, ctx, sentences)?;
    Ok(sentences
        .iter()
        .zip(scores)
        .map(|(s, score)| ScoredSentence {
            doc_id: s.doc_id.clone(),
            sentence_index: s.index,
            score,
        })
        .collect())
}

#[cfg(test)]
pub(crate) fn sentences(doc_id: &str, texts: &[&str]) -> Vec<Sentence> {
    texts
        .iter()
        .enumerate()
        .map(|(index, t)| Sentence {
            doc_id: doc_id.to_string(),
            index,
            text: t.to_string(),
        })
        .collect()
}
