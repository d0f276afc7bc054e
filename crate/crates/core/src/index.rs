//! In-memory inverted index with BM25 retrieval.
//!
//! Scoring uses the Lucene form of BM25:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ unique(q)} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::corpus::{Document, RunEntry};
use crate::error::{Error, Result};
use crate::num::{cmp_scalar, Real, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<S> {
    pub k1: S,
    pub b: S,
}

impl<S: Real> Default for Bm25Params<S> {
    /// k1 = 0.9, b = 0.4.
    fn default() -> Self {
        Bm25Params {
            k1: S::ratio(9, 10),
            b: S::ratio(4, 10),
        }
    }
}

impl<S: Real> Bm25Params<S> {
    pub fn new(k1: S, b: S) -> Result<Self> {
        if !(k1 >= S::zero() && k1.is_finite()) || !(b >= S::zero() && b <= S::one()) {
            return Err(Error::InvalidParams(format!("BM25 needs k1 >= 0 and b in [0,1], got k1={k1} b={b}")));
        }
        Ok(Bm25Params { k1, b })
    }

    /// Saturated, length-normalized term-frequency component.
    pub fn tf_component(&self, tf: u32, doc_len: u32, avgdl: S) -> S {
        let tf = S::from_u32(tf).expect("tf fits");
        let dl = S::from_u32(doc_len).expect("doc length fits");
        let norm = if avgdl > S::zero() { dl / avgdl } else { S::zero() };
        tf * (self.k1 + S::one()) / (tf + self.k1 * (S::one() - self.b + self.b * norm))
    }
}

pub fn idf<S: Real>(num_docs: usize, df: usize) -> S {
    let half = S::ratio(1, 2);
    let n = S::from_count(num_docs);
    let df = S::from_count(df);
    (S::one() + (n - df + half) / (df + half)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredDoc<S> {
    pub doc_id: String,
    pub score: S,
}

impl<S: Scalar> ScoredDoc<S> {
    pub fn new(doc_id: impl Into<String>, score: S) -> Self {
        ScoredDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Score descending, then doc_id ascending.
pub fn rank_order<S: PartialOrd>(a_score: &S, a_id: &str, b_score: &S, b_id: &str) -> std::cmp::Ordering {
    cmp_scalar(b_score, a_score).then_with(|| a_id.cmp(b_id))
}

pub fn sort_scored<S: Scalar>(docs: &mut [ScoredDoc<S>]) {
    docs.sort_by(|a, b| rank_order(&a.score, &a.doc_id, &b.score, &b.doc_id));
}

/// Converts a ranked list into run entries with ranks 1..n.
pub fn to_run<S: Scalar>(topic_id: &str, docs: &[ScoredDoc<S>], tag: &str) -> Vec<RunEntry> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| RunEntry::new(topic_id, &d.doc_id, i + 1, d.score.to_f64_lossy(), tag))
        .collect()
}

#[derive(Clone, Debug)]
pub struct InvertedIndex {
    analyzer: Analyzer,
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    lookup: HashMap<String, u32>,
    total_length: u64,
}

const BUILD_CHUNK: usize = 4096;

impl InvertedIndex {
    pub fn empty(analyzer: Analyzer) -> Self {
        InvertedIndex {
            analyzer,
            postings: HashMap::new(),
            doc_ids: Vec::new(),
            doc_lengths: Vec::new(),
            lookup: HashMap::new(),
            total_length: 0,
        }
    }

    /// Indexes a document stream. Tokenization runs in parallel per chunk;
    /// documents are merged in stream order so internal ids match file order.
    pub fn build<I>(docs: I, analyzer: Analyzer) -> Result<Self>
    where
        I: IntoIterator<Item = Result<Document>>,
    {
        let mut index = InvertedIndex::empty(analyzer);
        let mut chunk = Vec::with_capacity(BUILD_CHUNK);
        for doc in docs {
            chunk.push(doc?);
            if chunk.len() == BUILD_CHUNK {
                index.add_chunk(&chunk)?;
                chunk.clear();
            }
        }
        index.add_chunk(&chunk)?;
        Ok(index)
    }

    fn add_chunk(&mut self, docs: &[Document]) -> Result<()> {
        let analyzer = &self.analyzer;
        let counted: Vec<(usize, Vec<(String, u32)>)> = docs
            .par_iter()
            .map(|d| term_counts(&analyzer.tokenize(&d.contents)))
            .collect();
        for (doc, (len, counts)) in docs.iter().zip(counted) {
            self.insert_counted(&doc.doc_id, len, counts)?;
        }
        Ok(())
    }

    pub fn add(&mut self, doc: &Document) -> Result<()> {
        let (len, counts) = term_counts(&self.analyzer.tokenize(&doc.contents));
        self.insert_counted(&doc.doc_id, len, counts)
    }

    fn insert_counted(&mut self, doc_id: &str, len: usize, counts: Vec<(String, u32)>) -> Result<()> {
        if doc_id.is_empty() {
            return Err(Error::InvalidParams("empty doc_id".into()));
        }
        if self.lookup.contains_key(doc_id) {
            return Err(Error::DuplicateDoc(doc_id.to_string()));
        }
        let internal = u32::try_from(self.doc_ids.len()).map_err(|_| Error::InvalidParams("too many documents".into()))?;
        let len = u32::try_from(len).map_err(|_| Error::InvalidParams(format!("document {doc_id} too long")))?;
        self.lookup.insert(doc_id.to_string(), internal);
        self.doc_ids.push(doc_id.to_string());
        self.doc_lengths.push(len);
        self.total_length += u64::from(len);
        for (term, tf) in counts {
            self.postings.entry(term).or_default().push(Posting { doc: internal, tf });
        }
        Ok(())
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn total_length(&self) -> u64 {
        self.total_length
    }

    pub fn avgdl<S: Real>(&self) -> S {
        if self.doc_ids.is_empty() {
            return S::zero();
        }
        S::from_u64(self.total_length).expect("length fits") / S::from_count(self.doc_ids.len())
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_id(&self, internal: u32) -> Option<&str> {
        self.doc_ids.get(internal as usize).map(String::as_str)
    }

    pub fn internal_id(&self, doc_id: &str) -> Option<u32> {
        self.lookup.get(doc_id).copied()
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.internal_id(doc_id).map(|i| self.doc_lengths[i as usize])
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_ids.iter().map(String::as_str)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    fn term_frequency(&self, term: &str, internal: u32) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&internal, |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    /// BM25 score of one document for pre-analyzed query terms. Repeated terms
    /// count once.
    pub fn bm25_score<S: Real>(&self, params: &Bm25Params<S>, query_terms: &[String], doc_id: &str) -> Result<S> {
        let internal = self
            .internal_id(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        let avgdl = self.avgdl::<S>();
        let dl = self.doc_lengths[internal as usize];
        let mut score = S::zero();
        for term in unique_terms(query_terms) {
            let df = self.doc_freq(term);
            if df == 0 {
                continue;
            }
            let tf = self.term_frequency(term, internal);
            if tf == 0 {
                continue;
            }
            score += idf::<S>(self.num_docs(), df) * params.tf_component(tf, dl, avgdl);
        }
        Ok(score)
    }

    /// Top-`k` documents sharing at least one term with the query, ranked by
    /// BM25 (score descending, doc_id ascending). Scores are bit-identical to
    /// [`InvertedIndex::bm25_score`].
    pub fn search_terms<S: Real>(&self, params: &Bm25Params<S>, query_terms: &[String], k: usize) -> Vec<ScoredDoc<S>> {
        if k == 0 || self.doc_ids.is_empty() {
            return Vec::new();
        }
        let avgdl = self.avgdl::<S>();
        let mut acc: HashMap<u32, S> = HashMap::new();
        for term in unique_terms(query_terms) {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let w = idf::<S>(self.num_docs(), list.len());
            for p in list {
                let contrib = w * params.tf_component(p.tf, self.doc_lengths[p.doc as usize], avgdl);
                *acc.entry(p.doc).or_insert_with(S::zero) += contrib;
            }
        }
        let mut hits: Vec<ScoredDoc<S>> = acc
            .into_iter()
            .map(|(doc, score)| ScoredDoc::new(self.doc_ids[doc as usize].as_str(), score))
            .collect();
        let order = |a: &ScoredDoc<S>, b: &ScoredDoc<S>| rank_order(&a.score, &a.doc_id, &b.score, &b.doc_id);
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        hits
    }

    /// Analyzes `query` with the index's analyzer and searches.
    pub fn search<S: Real>(&self, params: &Bm25Params<S>, query: &str, k: usize) -> Vec<ScoredDoc<S>> {
        let terms = self.analyzer.tokenize(query);
        self.search_terms(params, &terms, k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &self.to_snapshot()).map_err(|e| Error::Snapshot(e.to_string()))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
        Self::from_snapshot(snap)
    }

    fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            analyzer_fingerprint: self.analyzer.fingerprint(),
            analyzer: self.analyzer.clone(),
            num_docs: self.doc_ids.len(),
            total_length: self.total_length,
            docs: self
                .doc_ids
                .iter()
                .zip(&self.doc_lengths)
                .map(|(id, &len)| (id.clone(), len))
                .collect(),
            postings: self
                .postings
                .iter()
                .map(|(t, list)| (t.clone(), list.iter().map(|p| (p.doc, p.tf)).collect()))
                .collect(),
        }
    }

    fn from_snapshot(snap: Snapshot) -> Result<Self> {
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Snapshot(format!("unexpected format {:?}", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", snap.version)));
        }
        if snap.analyzer.fingerprint() != snap.analyzer_fingerprint {
            return Err(Error::Snapshot("analyzer fingerprint mismatch".into()));
        }
        if snap.docs.len() != snap.num_docs {
            return Err(Error::Snapshot("document count mismatch".into()));
        }
        let mut index = InvertedIndex::empty(snap.analyzer);
        for (id, len) in snap.docs {
            if index.lookup.insert(id.clone(), index.doc_ids.len() as u32).is_some() {
                return Err(Error::DuplicateDoc(id));
            }
            index.doc_ids.push(id);
            index.doc_lengths.push(len);
            index.total_length += u64::from(len);
        }
        if index.total_length != snap.total_length {
            return Err(Error::Snapshot("total length mismatch".into()));
        }
        let mut tf_total = 0u64;
        for (term, list) in snap.postings {
            let mut prev = None;
            let mut postings = Vec::with_capacity(list.len());
            for (doc, tf) in list {
                if doc as usize >= index.doc_ids.len() || tf == 0 || prev.is_some_and(|p| p >= doc) {
                    return Err(Error::Snapshot(format!("corrupt postings for term {term:?}")));
                }
                prev = Some(doc);
                tf_total += u64::from(tf);
                postings.push(Posting { doc, tf });
            }
            index.postings.insert(term, postings);
        }
        if tf_total != index.total_length {
            return Err(Error::Snapshot("postings do not add up to document lengths".into()));
        }
        Ok(index)
    }
}

const SNAPSHOT_FORMAT: &str = "xlr-index";
const SNAPSHOT_VERSION: u32 = 1;

/// On-disk JSON layout: header fields, then `docs` as `[id, length]` pairs in
/// internal-id order and `postings` as `term -> [[internal_id, tf], ...]`.
#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    analyzer_fingerprint: String,
    analyzer: Analyzer,
    num_docs: usize,
    total_length: u64,
    docs: Vec<(String, u32)>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

fn term_counts(tokens: &[String]) -> (usize, Vec<(String, u32)>) {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    (tokens.len(), counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect())
}

/// Unique terms in first-occurrence order.
fn unique_terms(terms: &[String]) -> impl Iterator<Item = &str> {
    let mut seen = HashSet::new();
    terms.iter().map(String::as_str).filter(move |t| seen.insert(*t))
}
