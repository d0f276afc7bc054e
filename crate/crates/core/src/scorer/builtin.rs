use std::collections::HashSet;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{ScoreContext, SentenceScorer};
use crate::analysis::{hex16, Analyzer, Sentence};
use crate::corpus::Qrels;
use crate::error::ScorerError;

/// Returns the same score for every sentence.
#[derive(Clone, Debug)]
pub struct ConstantScorer {
    value: f64,
}

impl ConstantScorer {
    pub fn new(value: f64) -> Result<Self, ScorerError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScorerError::Spec {
                spec: format!("builtin:constant:{value}"),
                message: "constant must lie in [0, 1]".into(),
            });
        }
        Ok(ConstantScorer { value })
    }
}

impl SentenceScorer for ConstantScorer {
    fn fingerprint(&self) -> String {
        format!("builtin:constant:{}", self.value)
    }

    fn score(&self, _: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        Ok(vec![self.value; sentences.len()])
    }
}

/// Fraction of the query's unique terms that occur in the sentence.
#[derive(Clone, Debug)]
pub struct LexicalOverlapScorer {
    analyzer: Analyzer,
}

impl LexicalOverlapScorer {
    pub fn new(analyzer: Analyzer) -> Self {
        LexicalOverlapScorer { analyzer }
    }

    pub fn overlap(&self, query: &str, sentence: &str) -> f64 {
        let q: HashSet<String> = self.analyzer.tokenize(query).into_iter().collect();
        if q.is_empty() {
            return 0.0;
        }
        let s: HashSet<String> = self.analyzer.tokenize(sentence).into_iter().collect();
        q.intersection(&s).count() as f64 / q.len() as f64
    }
}

impl SentenceScorer for LexicalOverlapScorer {
    fn fingerprint(&self) -> String {
        format!("builtin:lexical:{}", self.analyzer.fingerprint())
    }

    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        let q: HashSet<String> = self.analyzer.tokenize(ctx.query).into_iter().collect();
        Ok(sentences
            .iter()
            .map(|s| {
                if q.is_empty() {
                    return 0.0;
                }
                let terms: HashSet<String> = self.analyzer.tokenize(&s.text).into_iter().collect();
                q.iter().filter(|t| terms.contains(*t)).count() as f64 / q.len() as f64
            })
            .collect())
    }
}

/// Oracle scorer: 1.0 for every sentence of a document judged relevant
/// (grade >= 1) for the topic, 0.0 otherwise.
#[derive(Clone, Debug)]
pub struct ClairvoyantScorer {
    qrels: Arc<Qrels>,
    digest: String,
}

impl ClairvoyantScorer {
    pub fn new(qrels: Arc<Qrels>) -> Self {
        let mut h = Sha256::new();
        for (t, d, g) in qrels.iter() {
            h.update(format!("{t}\t{d}\t{g}\n").as_bytes());
        }
        let digest = hex16(&h.finalize());
        ClairvoyantScorer { qrels, digest }
    }
}

impl SentenceScorer for ClairvoyantScorer {
    fn fingerprint(&self) -> String {
        format!("builtin:clairvoyant:{}", self.digest)
    }

    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        Ok(sentences
            .iter()
            .map(|s| if self.qrels.is_relevant(ctx.topic_id, &s.doc_id) { 1.0 } else { 0.0 })
            .collect())
    }
}
