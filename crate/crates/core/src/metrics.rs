//! AP, P@20 and NDCG@20 with trec_eval conventions: relevance is grade >= 1,
//! unjudged documents are non-relevant, AP runs over the full ranking, P@k
//! always divides by k, and topics without relevant documents are left out
//! of the means.

use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{group_run, Qrels, RunEntry};
use crate::num::{Real, Scalar};

pub const CUTOFF: usize = 20;

/// `None` when the topic has no relevant documents.
pub fn average_precision<S: Scalar, D: AsRef<str>>(ranking: &[D], qrels: &Qrels, topic_id: &str) -> Option<S> {
    let total = qrels.num_relevant(topic_id);
    if total == 0 {
        return None;
    }
    let mut hits = 0;
    let mut sum = S::zero();
    for (i, doc) in ranking.iter().enumerate() {
        if qrels.is_relevant(topic_id, doc.as_ref()) {
            hits += 1;
            sum += S::ratio(hits, i + 1);
        }
    }
    Some(sum / S::from_count(total))
}

pub fn precision_at<S: Scalar, D: AsRef<str>>(ranking: &[D], qrels: &Qrels, topic_id: &str, cutoff: usize) -> S {
    assert!(cutoff > 0, "cutoff must be positive");
    let hits = ranking
        .iter()
        .take(cutoff)
        .filter(|d| qrels.is_relevant(topic_id, d.as_ref()))
        .count();
    S::ratio(hits, cutoff)
}

fn gain<S: Real>(grade: u32) -> S {
    S::from_u32(grade).map_or(S::infinity(), |g| S::from_u32(2).unwrap().powf(g)) - S::one()
}

fn discount<S: Real>(rank: usize) -> S {
    S::from_count(rank + 1).log2()
}

/// Exponential gain `2^grade - 1`, discount `1 / log2(rank + 1)`. `None` when
/// the ideal DCG is zero.
pub fn ndcg_at<S: Real, D: AsRef<str>>(ranking: &[D], qrels: &Qrels, topic_id: &str, cutoff: usize) -> Option<S> {
    let mut ideal: Vec<u32> = qrels
        .topic(topic_id)
        .map(|j| j.values().copied().filter(|&g| g > 0).collect())
        .unwrap_or_default();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = ideal
        .iter()
        .take(cutoff)
        .enumerate()
        .fold(S::zero(), |acc, (i, &g)| acc + gain::<S>(g) / discount::<S>(i + 1));
    if idcg <= S::zero() {
        return None;
    }
    let dcg = ranking
        .iter()
        .take(cutoff)
        .enumerate()
        .fold(S::zero(), |acc, (i, d)| {
            acc + gain::<S>(qrels.grade(topic_id, d.as_ref())) / discount::<S>(i + 1)
        });
    Some(dcg / idcg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicMetrics<S> {
    pub topic_id: String,
    pub ap: S,
    pub p20: S,
    pub ndcg20: S,
}

/// Metrics for one ranking; `None` if the topic has nothing relevant.
pub fn evaluate_topic<S: Real, D: AsRef<str>>(topic_id: &str, ranking: &[D], qrels: &Qrels) -> Option<TopicMetrics<S>> {
    let ap = average_precision(ranking, qrels, topic_id)?;
    let ndcg20 = ndcg_at(ranking, qrels, topic_id, CUTOFF)?;
    Some(TopicMetrics {
        topic_id: topic_id.to_string(),
        ap,
        p20: precision_at(ranking, qrels, topic_id, CUTOFF),
        ndcg20,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanMetrics<S> {
    pub num_topics: usize,
    pub ap: S,
    pub p20: S,
    pub ndcg20: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport<S> {
    pub topics: Vec<TopicMetrics<S>>,
    pub mean: MeanMetrics<S>,
    /// Run topics left out: absent from the qrels or without relevant docs.
    pub skipped: Vec<String>,
}

pub fn mean_of<S: Real>(topics: &[TopicMetrics<S>]) -> MeanMetrics<S> {
    let n = topics.len();
    let avg = |f: fn(&TopicMetrics<S>) -> S| {
        if n == 0 {
            S::zero()
        } else {
            topics.iter().map(f).fold(S::zero(), |a, b| a + b) / S::from_count(n)
        }
    };
    MeanMetrics {
        num_topics: n,
        ap: avg(|t| t.ap),
        p20: avg(|t| t.p20),
        ndcg20: avg(|t| t.ndcg20),
    }
}

/// Evaluates every topic of a run; output sorted by topic_id.
pub fn evaluate_run(run: &[RunEntry], qrels: &Qrels) -> EvalReport<f64> {
    let mut topics = Vec::new();
    let mut skipped = Vec::new();
    for (topic_id, entries) in group_run(run) {
        if !qrels.contains_topic(&topic_id) {
            log::warn!("topic {topic_id} is not in the qrels; skipped");
            skipped.push(topic_id);
            continue;
        }
        let ranking: Vec<&str> = entries.iter().map(|e| e.doc_id.as_str()).collect();
        match evaluate_topic(&topic_id, &ranking, qrels) {
            Some(m) => topics.push(m),
            None => {
                log::info!("topic {topic_id} has no relevant documents; excluded from means");
                skipped.push(topic_id);
            }
        }
    }
    topics.sort_by(|a, b| a.topic_id.cmp(&b.topic_id));
    skipped.sort();
    let mean = mean_of(&topics);
    EvalReport { topics, mean, skipped }
}

impl EvalReport<f64> {
    /// trec_eval-style `metric<TAB>topic<TAB>value` lines, per topic then `all`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.topics {
            let _ = writeln!(out, "map\t{}\t{:.4}", t.topic_id, t.ap);
            let _ = writeln!(out, "P_20\t{}\t{:.4}", t.topic_id, t.p20);
            let _ = writeln!(out, "ndcg_cut_20\t{}\t{:.4}", t.topic_id, t.ndcg20);
        }
        let _ = writeln!(out, "num_q\tall\t{}", self.mean.num_topics);
        let _ = writeln!(out, "map\tall\t{:.4}", self.mean.ap);
        let _ = writeln!(out, "P_20\tall\t{:.4}", self.mean.p20);
        let _ = writeln!(out, "ndcg_cut_20\tall\t{:.4}", self.mean.ndcg20);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
