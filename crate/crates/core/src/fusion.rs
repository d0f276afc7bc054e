//! Document/sentence evidence fusion:
//!
//! ```text
//! s_doc = alpha · s_r + (1 − alpha) · Σ_{i=1..k} w_i · S_(i)
//! ```
//!
//! where `s_r` is the document's BM25 score and `S_(i)` its i-th highest
//! sentence score. Missing sentences contribute nothing.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::RunEntry;
use crate::error::{Error, Result};
use crate::index::{rank_order, ScoredDoc};
use crate::num::{cmp_scalar, Scalar};

/// Largest number of top sentences the fusion can combine.
pub const MAX_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams<S>", into = "RawParams<S>")]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct FusionParams<S> {
    alpha: S,
    weights: Vec<S>,
}

#[derive(Serialize, Deserialize)]
struct RawParams<S> {
    alpha: S,
    weights: Vec<S>,
    k: usize,
}

impl<S: Scalar> TryFrom<RawParams<S>> for FusionParams<S> {
    type Error = Error;

    fn try_from(raw: RawParams<S>) -> Result<Self> {
        if raw.weights.len() != raw.k {
            return Err(Error::InvalidParams(format!(
                "k = {} but {} weights given",
                raw.k,
                raw.weights.len()
            )));
        }
        FusionParams::new(raw.alpha, raw.weights)
    }
}

impl<S: Scalar> From<FusionParams<S>> for RawParams<S> {
    fn from(p: FusionParams<S>) -> Self {
        RawParams {
            k: p.weights.len(),
            alpha: p.alpha,
            weights: p.weights,
        }
    }
}

fn in_unit<S: Scalar>(x: S) -> bool {
    x >= S::zero() && x <= S::one()
}

impl<S: Scalar> FusionParams<S> {
    /// `weights` are `w_1..w_k`; `w_1` must be 1 and every weight in `[0, 1]`.
    pub fn new(alpha: S, weights: Vec<S>) -> Result<Self> {
        if !in_unit(alpha) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} outside [0, 1]")));
        }
        if weights.is_empty() || weights.len() > MAX_K {
            return Err(Error::InvalidParams(format!("k = {} outside 1..={MAX_K}", weights.len())));
        }
        if weights[0] != S::one() {
            return Err(Error::InvalidParams(format!("w_1 must be 1, got {}", weights[0])));
        }
        if let Some(w) = weights.iter().find(|w| !in_unit(**w)) {
            return Err(Error::InvalidParams(format!("weight {w} outside [0, 1]")));
        }
        Ok(FusionParams { alpha, weights })
    }

    /// BM25 only.
    pub fn bm25_only() -> Self {
        FusionParams {
            alpha: S::one(),
            weights: vec![S::one()],
        }
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Combines `s_r` with already-sorted (descending) top sentence scores.
    fn combine(&self, s_r: S, top: impl Iterator<Item = S>) -> S {
        let mut evidence = S::zero();
        for (w, s) in self.weights.iter().zip(top) {
            evidence += *w * s;
        }
        self.alpha * s_r + (S::one() - self.alpha) * evidence
    }
}

impl<S: Scalar> fmt::Display for FusionParams<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "alpha={} k={} w=[", self.alpha, self.k())?;
        for (i, w) in self.weights.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{w}")?;
        }
        f.write_str("]")
    }
}

/// Fused score of one document. `sentence_scores` may be in any order and
/// shorter than k.
pub fn fuse<S: Scalar>(params: &FusionParams<S>, s_r: S, sentence_scores: &[S]) -> S {
    let mut sorted = sentence_scores.to_vec();
    sorted.sort_by(|a, b| cmp_scalar(b, a));
    params.combine(s_r, sorted.into_iter())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedDoc<S> {
    pub doc_id: String,
    pub s_r: S,
    /// `(sentence_index, score)`, score descending, index ascending on ties.
    pub top_sentences: Vec<(usize, S)>,
    pub s_doc: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedList<S> {
    pub docs: Vec<FusedDoc<S>>,
}

impl<S: Scalar> RankedList<S> {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.doc_id.as_str())
    }

    pub fn to_run(&self, topic_id: &str, tag: &str) -> Vec<RunEntry> {
        self.docs
            .iter()
            .enumerate()
            .map(|(i, d)| RunEntry::new(topic_id, &d.doc_id, i + 1, d.s_doc.to_f64_lossy(), tag))
            .collect()
    }
}

/// How document scores are prepared before interpolation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Raw BM25 scores.
    #[default]
    None,
    /// Per-query min-max scaling of BM25 scores to `[0, 1]`.
    MinMax,
}

#[derive(Clone, Debug)]
struct DocEvidence<S> {
    doc_id: String,
    s_r: S,
    top: Vec<(usize, S)>,
}

/// Candidates of one topic with their sentence evidence, pre-sorted so that
/// many parameter settings can be ranked cheaply.
#[derive(Clone, Debug)]
pub struct TopicEvidence<S> {
    docs: Vec<DocEvidence<S>>,
}

impl<S: Scalar> TopicEvidence<S> {
    pub fn new(
        topic_id: &str,
        candidates: &[ScoredDoc<S>],
        sentence_scores: &HashMap<String, Vec<S>>,
        normalization: Normalization,
    ) -> Result<Self> {
        let (lo, hi) = candidates.iter().fold((None, None), |(lo, hi): (Option<S>, Option<S>), c| {
            (
                Some(lo.map_or(c.score, |l| if c.score < l { c.score } else { l })),
                Some(hi.map_or(c.score, |h| if c.score > h { c.score } else { h })),
            )
        });
        let mut docs = Vec::with_capacity(candidates.len());
        for c in candidates {
            let scores = sentence_scores.get(&c.doc_id).ok_or_else(|| Error::MissingSentenceScores {
                topic_id: topic_id.to_string(),
                doc_id: c.doc_id.clone(),
            })?;
            let mut top: Vec<(usize, S)> = scores.iter().copied().enumerate().collect();
            top.sort_by(|a, b| cmp_scalar(&b.1, &a.1).then(a.0.cmp(&b.0)));
            top.truncate(MAX_K);
            let s_r = match (normalization, lo, hi) {
                (Normalization::MinMax, Some(lo), Some(hi)) if hi > lo => (c.score - lo) / (hi - lo),
                (Normalization::MinMax, _, _) => S::zero(),
                (Normalization::None, _, _) => c.score,
            };
            docs.push(DocEvidence {
                doc_id: c.doc_id.clone(),
                s_r,
                top,
            });
        }
        Ok(TopicEvidence { docs })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Fused scores in candidate order.
    pub fn scores(&self, params: &FusionParams<S>) -> Vec<S> {
        self.docs
            .iter()
            .map(|d| params.combine(d.s_r, d.top.iter().map(|&(_, s)| s)))
            .collect()
    }

    /// Candidate doc_ids resorted by fused score (descending, doc_id ascending).
    pub fn ranking(&self, params: &FusionParams<S>) -> Vec<&str> {
        let scores = self.scores(params);
        let mut order: Vec<usize> = (0..self.docs.len()).collect();
        order.sort_by(|&a, &b| rank_order(&scores[a], &self.docs[a].doc_id, &scores[b], &self.docs[b].doc_id));
        order.into_iter().map(|i| self.docs[i].doc_id.as_str()).collect()
    }

    pub fn rerank(&self, params: &FusionParams<S>) -> RankedList<S> {
        let mut docs: Vec<FusedDoc<S>> = self
            .docs
            .iter()
            .map(|d| {
                let top: Vec<(usize, S)> = d.top.iter().take(params.k()).copied().collect();
                FusedDoc {
                    doc_id: d.doc_id.clone(),
                    s_r: d.s_r,
                    s_doc: params.combine(d.s_r, top.iter().map(|&(_, s)| s)),
                    top_sentences: top,
                }
            })
            .collect();
        docs.sort_by(|a, b| rank_order(&a.s_doc, &a.doc_id, &b.s_doc, &b.doc_id));
        RankedList { docs }
    }
}

/// Resorts the candidate set by fused score. Every candidate needs an entry
/// in `sentence_scores`; an empty list means "no sentences", a missing entry
/// is an error.
pub fn rerank<S: Scalar>(
    topic_id: &str,
    candidates: &[ScoredDoc<S>],
    sentence_scores: &HashMap<String, Vec<S>>,
    params: &FusionParams<S>,
) -> Result<RankedList<S>> {
    Ok(TopicEvidence::new(topic_id, candidates, sentence_scores, Normalization::None)?.rerank(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Exact;
    use proptest::prelude::*;

    fn p(alpha: f64, w: &[f64]) -> FusionParams<f64> {
        FusionParams::new(alpha, w.to_vec()).unwrap()
    }

    #[test]
    fn alpha_one_is_bm25() {
        assert_eq!(fuse(&p(1.0, &[1.0, 0.3]), 7.25, &[0.9, 0.1]), 7.25);
        assert_eq!(fuse(&p(1.0, &[1.0]), 3.0, &[]), 3.0);
    }

    #[test]
    fn alpha_zero_top_one() {
        assert_eq!(fuse(&p(0.0, &[1.0]), 12.0, &[0.7, 0.2]), 0.7);
        assert_eq!(fuse(&p(0.0, &[1.0]), 12.0, &[0.2, 0.7]), 0.7);
    }

    #[test]
    fn worked_example_exact() {
        let half = Exact::new(1, 2);
        let params = FusionParams::new(half, vec![Exact::from_integer(1), half]).unwrap();
        let scores = [Exact::new(8, 10), Exact::new(6, 10), Exact::new(1, 10)];
        assert_eq!(fuse(&params, Exact::from_integer(2), &scores), Exact::new(155, 100));
    }

    #[test]
    fn worked_example_f64() {
        let s = fuse(&p(0.5, &[1.0, 0.5]), 2.0, &[0.8, 0.6, 0.1]);
        assert_eq!(s, 1.55);
    }

    #[test]
    fn fewer_sentences_than_k() {
        assert_eq!(fuse(&p(0.0, &[1.0, 1.0, 1.0]), 0.0, &[0.5]), 0.5);
        assert_eq!(fuse(&p(0.5, &[1.0, 1.0, 1.0]), 4.0, &[]), 2.0);
    }

    #[test]
    fn params_validation() {
        assert!(FusionParams::new(1.5, vec![1.0]).is_err());
        assert!(FusionParams::new(0.5, vec![]).is_err());
        assert!(FusionParams::new(0.5, vec![1.0, 0.5, 0.5, 0.5]).is_err());
        assert!(FusionParams::new(0.5, vec![0.9]).is_err());
        assert!(FusionParams::new(0.5, vec![1.0, 1.2]).is_err());
        assert!(FusionParams::new(0.5, vec![1.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn params_json() {
        let params = p(0.3, &[1.0, 0.5]);
        let json = serde_json::to_string(&params).unwrap();
        assert_eq!(json, r#"{"alpha":0.3,"weights":[1.0,0.5],"k":2}"#);
        let back: FusionParams<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, params);
        assert!(serde_json::from_str::<FusionParams<f64>>(r#"{"alpha":0.3,"weights":[1.0],"k":2}"#).is_err());
        assert!(serde_json::from_str::<FusionParams<f64>>(r#"{"alpha":2,"weights":[1.0],"k":1}"#).is_err());
    }

    fn cands(list: &[(&str, f64)]) -> Vec<ScoredDoc<f64>> {
        list.iter().map(|(d, s)| ScoredDoc::new(*d, *s)).collect()
    }

    #[test]
    fn hand_computed_order() {
        let candidates = cands(&[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        let mut sent = HashMap::new();
        sent.insert("a".to_string(), vec![0.0, 0.1]);
        sent.insert("b".to_string(), vec![0.9]);
        sent.insert("c".to_string(), vec![1.0, 1.0]);
        // alpha 0.25: a = 0.75 + 0.075 = 0.825, b = 0.5 + 0.675 = 1.175, c = 0.25 + 0.75·1.5 = 1.375
        let out = rerank("t", &candidates, &sent, &p(0.25, &[1.0, 0.5])).unwrap();
        assert_eq!(out.doc_ids().collect::<Vec<_>>(), vec!["c", "b", "a"]);
        assert_eq!(out.docs[0].top_sentences, vec![(0, 1.0), (1, 1.0)]);
        let run = out.to_run("t", "x");
        assert_eq!(run[0].rank, 1);
        assert_eq!(run[2].doc_id, "a");
    }

    #[test]
    fn missing_candidate_is_error_but_empty_is_fine() {
        let candidates = cands(&[("a", 1.0), ("b", 0.5)]);
        let mut sent = HashMap::new();
        sent.insert("a".to_string(), vec![]);
        let err = rerank("t", &candidates, &sent, &p(0.5, &[1.0])).unwrap_err();
        assert!(matches!(err, Error::MissingSentenceScores { ref doc_id, .. } if doc_id == "b"));
        sent.insert("b".to_string(), vec![]);
        let out = rerank("t", &candidates, &sent, &p(0.5, &[1.0])).unwrap();
        assert_eq!(out.docs[1].s_doc, 0.25);
    }

    #[test]
    fn minmax_normalization() {
        let candidates = cands(&[("a", 10.0), ("b", 6.0), ("c", 2.0)]);
        let sent: HashMap<String, Vec<f64>> = ["a", "b", "c"].iter().map(|d| (d.to_string(), vec![])).collect();
        let ev = TopicEvidence::new("t", &candidates, &sent, Normalization::MinMax).unwrap();
        assert_eq!(ev.scores(&FusionParams::bm25_only()), vec![1.0, 0.5, 0.0]);
        let flat = cands(&[("a", 3.0), ("b", 3.0)]);
        let ev = TopicEvidence::new("t", &flat, &sent, Normalization::MinMax).unwrap();
        assert_eq!(ev.scores(&FusionParams::bm25_only()), vec![0.0, 0.0]);
    }

    fn arb_params() -> impl Strategy<Value = FusionParams<f64>> {
        (0u32..=10, proptest::collection::vec(0u32..=10, 0..MAX_K)).prop_map(|(a, ws)| {
            let mut weights = vec![1.0];
            weights.extend(ws.into_iter().map(|w| w as f64 / 10.0));
            FusionParams::new(a as f64 / 10.0, weights).unwrap()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(params in arb_params(), s_r in -5.0f64..50.0,
                                 scores in proptest::collection::vec(0.0f64..=1.0, 0..8), seed in any::<u64>()) {
            let mut shuffled = scores.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                shuffled.swap(i, (seed as usize ^ i.wrapping_mul(2654435761)) % (i + 1));
            }
            prop_assert_eq!(fuse(&params, s_r, &scores).to_bits(), fuse(&params, s_r, &shuffled).to_bits());
        }

        #[test]
        fn nondecreasing_in_each_weight(alpha in 0u32..=10, s_r in 0.0f64..20.0,
                                        scores in proptest::collection::vec(0.0f64..=1.0, 3..6),
                                        which in 1usize..3, lo in 0u32..=10, bump in 0u32..=10) {
            let hi = (lo + bump).min(10);
            let mk = |w: u32| {
                let mut ws = vec![1.0, 0.5, 0.5];
                ws[which] = w as f64 / 10.0;
                FusionParams::new(alpha as f64 / 10.0, ws).unwrap()
            };
            prop_assert!(fuse(&mk(hi), s_r, &scores) >= fuse(&mk(lo), s_r, &scores));
        }

        #[test]
        fn rerank_preserves_membership_and_alpha_one_order(
            docs in proptest::collection::btree_map("[a-f]{1,3}", (0u32..20, proptest::collection::vec(0.0f64..=1.0, 0..5)), 0..15),
            params in arb_params(),
        ) {
            let mut candidates: Vec<ScoredDoc<f64>> =
                docs.iter().map(|(d, (s, _))| ScoredDoc::new(d.as_str(), *s as f64 / 4.0)).collect();
            crate::index::sort_scored(&mut candidates);
            let sent: HashMap<String, Vec<f64>> = docs.iter().map(|(d, (_, v))| (d.clone(), v.clone())).collect();
            let out = rerank("t", &candidates, &sent, &params).unwrap();
            let mut got: Vec<&str> = out.doc_ids().collect();
            got.sort();
            let mut want: Vec<&str> = candidates.iter().map(|c| c.doc_id.as_str()).collect();
            want.sort();
            prop_assert_eq!(got, want);

            let bm25 = FusionParams::new(1.0, params.weights().to_vec()).unwrap();
            let same = rerank("t", &candidates, &sent, &bm25).unwrap();
            prop_assert_eq!(same.to_run("t", "x"), crate::index::to_run("t", &candidates, "x"));
        }
    }
}
