//! Brute-force oracles, random generators and fixtures shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlr_core::analysis::Analyzer;
use xlr_core::corpus::{read_qrels, read_topics, select_queries, Document, Qrels, RunEntry, TopicField};
use xlr_core::experiment::{run_experiment, ExperimentConfig, RunOptions};
use xlr_core::index::{Bm25Params, InvertedIndex};
use xlr_core::metrics::{average_precision, evaluate_run, ndcg_at, precision_at, CUTOFF};
use xlr_core::pipeline::{
    bm25_run, candidates_from_run, gather_evidence, load_documents, rerank_fixed, tune_and_rerank, EvidenceOptions,
    EvidencePipeline, RerankTopic,
};
use xlr_core::scorer::{ClairvoyantScorer, ConstantScorer, LexicalOverlapScorer, SentenceScorer};
use xlr_core::tuning::{assign_folds, cross_validate, grid_search, tie_break, CvPipeline, Grid};
use xlr_core::{fuse, FusionParams};

pub type Check = Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

pub fn repo_root() -> PathBuf {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    root.canonicalize().unwrap_or(root)
}

pub fn synthetic_dir() -> PathBuf {
    repo_root().join("data/synthetic")
}

// ---------------------------------------------------------------------------
// BM25

pub struct RandomCorpus {
    pub docs: Vec<Document>,
    pub vocab: Vec<String>,
}

pub fn random_corpus(rng: &mut ChaCha8Rng) -> RandomCorpus {
    let vocab_size = rng.gen_range(2..=50);
    let vocab: Vec<String> = (0..vocab_size).map(|i| format!("w{i}")).collect();
    let num_docs = rng.gen_range(1..=1000);
    let docs = (0..num_docs)
        .map(|d| {
            let len = rng.gen_range(0..=40);
            // Skewed draw so that some terms are common and others rare.
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    let r: f64 = rng.gen();
                    vocab[((r * r) * vocab_size as f64) as usize].as_str()
                })
                .collect();
            Document::new(format!("doc{d:05}"), words.join(" "), "en")
        })
        .collect();
    RandomCorpus { docs, vocab }
}

pub fn random_query(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    let n = rng.gen_range(1..=6);
    let mut terms: Vec<String> = (0..n).map(|_| vocab.choose(rng).unwrap().clone()).collect();
    if rng.gen_bool(0.2) {
        terms.push("unseen".into());
    }
    if rng.gen_bool(0.3) {
        // Repeated terms must not count twice.
        let t = terms[0].clone();
        terms.push(t);
    }
    terms.join(" ")
}

/// Token counts of a corpus, computed independently of the index.
pub struct BruteForce {
    ids: Vec<String>,
    counts: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    df: HashMap<String, usize>,
}

impl BruteForce {
    pub fn new(docs: &[Document], analyzer: &Analyzer) -> Self {
        let mut counts = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in docs {
            let toks = analyzer.tokenize(&d.contents);
            lengths.push(toks.len());
            let mut c: HashMap<String, usize> = HashMap::new();
            for t in toks {
                *c.entry(t).or_default() += 1;
            }
            for t in c.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            counts.push(c);
        }
        BruteForce {
            ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            counts,
            lengths,
            df,
        }
    }

    /// Textbook BM25 with the Lucene idf, every matching document scored.
    pub fn search(&self, analyzer: &Analyzer, query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
        let n = self.ids.len() as f64;
        let avgdl = self.lengths.iter().sum::<usize>() as f64 / n;
        let terms: BTreeSet<String> = analyzer.tokenize(query).into_iter().collect();
        let mut out = Vec::new();
        for i in 0..self.ids.len() {
            let dl = self.lengths[i] as f64;
            let mut score = 0.0;
            let mut matched = false;
            for t in &terms {
                let tf = self.counts[i].get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    continue;
                }
                matched = true;
                let df = self.df[t] as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            if matched {
                out.push((self.ids[i].clone(), score));
            }
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Compares `search(k = all)` with the oracle: same documents, scores
/// within `eps`, and an order that is descending up to `eps` with doc_id
/// ascending among exact ties.
pub fn compare_bm25(got: &[(String, f64)], want: &[(String, f64)], eps: f64) -> Result<(), String> {
    ensure(got.len() == want.len(), || format!("{} hits, oracle has {}", got.len(), want.len()))?;
    let oracle: HashMap<&str, f64> = want.iter().map(|(d, s)| (d.as_str(), *s)).collect();
    for (i, (doc, score)) in got.iter().enumerate() {
        let o = *oracle.get(doc.as_str()).ok_or_else(|| format!("unexpected hit {doc}"))?;
        ensure((score - o).abs() <= eps, || format!("{doc}: score {score} vs oracle {o}"))?;
        ensure((want[i].1 - o).abs() <= eps, || {
            format!("rank {}: {doc} ({o}) where oracle has {} ({})", i + 1, want[i].0, want[i].1)
        })?;
        if i > 0 {
            let (prev_doc, prev) = &got[i - 1];
            ensure(*prev > *score || (*prev == *score && prev_doc < doc), || {
                format!("order broken at rank {}: {prev_doc} {prev} then {doc} {score}", i + 1)
            })?;
        }
    }
    Ok(())
}

pub fn check_bm25_oracle(corpora: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Bm25Params::<f64>::default();
    let mut queries = 0;
    let mut max_docs = 0;
    for c in 0..corpora {
        let corpus = random_corpus(&mut rng);
        max_docs = max_docs.max(corpus.docs.len());
        let analyzer = Analyzer::for_lang("en");
        let index = InvertedIndex::build(corpus.docs.iter().cloned().map(Ok), analyzer.clone())
            .map_err(|e| e.to_string())?;
        let oracle = BruteForce::new(&corpus.docs, &analyzer);
        for _ in 0..5 {
            let q = random_query(&mut rng, &corpus.vocab);
            let got: Vec<(String, f64)> = index
                .search(&params, &q, index.num_docs())
                .into_iter()
                .map(|h| (h.doc_id, h.score))
                .collect();
            let want = oracle.search(&analyzer, &q, params.k1, params.b);
            compare_bm25(&got, &want, 1e-9).map_err(|e| format!("corpus {c}, query {q:?}: {e}"))?;
            queries += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{corpora} corpora (up to {max_docs} docs), {queries} queries in {:.2?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// Metrics

pub fn oracle_ap(ranking: &[String], grades: &BTreeMap<String, u32>) -> Option<f64> {
    let r = grades.values().filter(|&&g| g >= 1).count();
    if r == 0 {
        return None;
    }
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if grades.get(d).copied().unwrap_or(0) >= 1 {
            let rel_so_far = ranking[..=i].iter().filter(|x| grades.get(*x).copied().unwrap_or(0) >= 1).count();
            sum += rel_so_far as f64 / (i + 1) as f64;
        }
    }
    Some(sum / r as f64)
}

pub fn oracle_p_at(ranking: &[String], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| grades.get(*d).copied().unwrap_or(0) >= 1)
        .count();
    hits as f64 / k as f64
}

pub fn oracle_ndcg_at(ranking: &[String], grades: &BTreeMap<String, u32>, k: usize) -> Option<f64> {
    let dcg_of = |gs: &[u32]| -> f64 {
        gs.iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal: Vec<u32> = grades.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_of(&ideal);
    if idcg == 0.0 {
        return None;
    }
    let got: Vec<u32> = ranking.iter().map(|d| grades.get(d).copied().unwrap_or(0)).collect();
    Some(dcg_of(&got) / idcg)
}

pub struct RandomJudged {
    pub topic: String,
    pub ranking: Vec<String>,
    pub grades: BTreeMap<String, u32>,
}

pub fn random_judged(rng: &mut ChaCha8Rng, i: usize) -> RandomJudged {
    let pool = rng.gen_range(1..=120);
    let docs: Vec<String> = (0..pool).map(|d| format!("d{d}")).collect();
    let mut ranking = docs.clone();
    ranking.shuffle(rng);
    ranking.truncate(rng.gen_range(0..=pool));
    let mut grades = BTreeMap::new();
    // Judge a random subset; some judged docs never get retrieved.
    for d in docs.iter().chain(std::iter::once(&"never-retrieved".to_string())) {
        if rng.gen_bool(0.6) {
            grades.insert(d.clone(), rng.gen_range(0..=3));
        }
    }
    RandomJudged {
        topic: format!("t{i:03}"),
        ranking,
        grades,
    }
}

pub fn check_metric_oracle(pairs: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-6;
    let mut qrels = Qrels::new();
    let mut run = Vec::new();
    let mut expected = Vec::new();
    for i in 0..pairs {
        let j = random_judged(&mut rng, i);
        for (d, g) in &j.grades {
            qrels.insert(j.topic.as_str(), d.as_str(), *g);
        }
        let ap = average_precision::<f64, _>(&j.ranking, &qrels, &j.topic);
        ensure(ap.is_some() == oracle_ap(&j.ranking, &j.grades).is_some(), || {
            format!("{}: AP definedness differs", j.topic)
        })?;
        if let (Some(a), Some(o)) = (ap, oracle_ap(&j.ranking, &j.grades)) {
            ensure((a - o).abs() <= eps, || format!("{}: AP {a} vs {o}", j.topic))?;
            let p = precision_at::<f64, _>(&j.ranking, &qrels, &j.topic, CUTOFF);
            let po = oracle_p_at(&j.ranking, &j.grades, CUTOFF);
            ensure((p - po).abs() <= eps, || format!("{}: P@20 {p} vs {po}", j.topic))?;
            let n = ndcg_at::<f64, _>(&j.ranking, &qrels, &j.topic, CUTOFF).unwrap_or(f64::NAN);
            let no = oracle_ndcg_at(&j.ranking, &j.grades, CUTOFF).unwrap();
            ensure((n - no).abs() <= eps, || format!("{}: NDCG@20 {n} vs {no}", j.topic))?;
            if !j.ranking.is_empty() {
                expected.push((a, p, n));
            }
        }
        let n = j.ranking.len();
        for (r, d) in j.ranking.iter().enumerate() {
            run.push(RunEntry::new(&j.topic, d, r + 1, (n - r) as f64, "oracle"));
        }
    }
    // The same numbers through the run-level evaluator.
    let report = evaluate_run(&run, &qrels);
    let k = expected.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| expected.iter().map(f).sum::<f64>() / k;
    ensure(report.mean.num_topics == expected.len(), || {
        format!("evaluated {} topics, expected {}", report.mean.num_topics, expected.len())
    })?;
    ensure((report.mean.ap - mean(|e| e.0)).abs() <= eps, || "mean AP differs".into())?;
    ensure((report.mean.p20 - mean(|e| e.1)).abs() <= eps, || "mean P@20 differs".into())?;
    ensure((report.mean.ndcg20 - mean(|e| e.2)).abs() <= eps, || "mean NDCG@20 differs".into())?;

    let (ap, ndcg) = worked_metric_examples();
    ensure((ap - 0.8333).abs() < 1e-4, || format!("worked AP example gave {ap}"))?;
    ensure((ndcg - 0.9197).abs() < 1e-4, || format!("worked NDCG example gave {ndcg}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "{pairs} random pairs; worked examples AP={ap:.4} NDCG={ndcg:.4}; {:.2?}",
        start.elapsed()
    ))
}

/// AP of [d1,d2,d3] with {d1,d3} relevant; NDCG of [rel,non,rel] with two
/// relevant documents in total.
pub fn worked_metric_examples() -> (f64, f64) {
    let mut q = Qrels::new();
    q.insert("t", "d1", 1);
    q.insert("t", "d3", 1);
    let ap = average_precision::<f64, _>(&["d1", "d2", "d3"], &q, "t").unwrap();
    let ndcg = ndcg_at::<f64, _>(&["d1", "d2", "d3"], &q, "t", CUTOFF).unwrap();
    (ap, ndcg)
}

// ---------------------------------------------------------------------------
// Synthetic collection fixtures

pub struct Fixture {
    pub queries: Vec<(String, String)>,
    pub qrels: Qrels,
    pub bm25: Vec<RunEntry>,
    pub docs: HashMap<String, Document>,
}

pub fn synthetic_fixture(lang: &str) -> Fixture {
    let dir = synthetic_dir();
    let corpus = dir.join(format!("corpus.{lang}.jsonl"));
    let analyzer = Analyzer::for_lang(lang);
    let index = InvertedIndex::build(
        xlr_core::corpus::load_corpus(&corpus, xlr_core::CorpusFormat::Jsonl).unwrap(),
        analyzer,
    )
    .unwrap();
    let topics = read_topics(&dir.join("topics.jsonl")).unwrap();
    let queries = select_queries(&topics, lang, TopicField::Title).unwrap();
    let bm25 = bm25_run(&index, &Bm25Params::default(), &queries, 1000, "bm25");
    let wanted = bm25.iter().map(|e| e.doc_id.as_str()).collect();
    let docs = load_documents(&corpus, xlr_core::CorpusFormat::Jsonl, lang, &wanted).unwrap();
    Fixture {
        queries,
        qrels: read_qrels(&dir.join("qrels.txt")).unwrap(),
        bm25,
        docs,
    }
}

impl Fixture {
    pub fn evidence(&self, scorer: &dyn SentenceScorer) -> Vec<RerankTopic> {
        let queries: HashMap<String, String> = self.queries.iter().cloned().collect();
        gather_evidence(
            scorer,
            &queries,
            &candidates_from_run(&self.bm25),
            &self.docs,
            &EvidenceOptions::default(),
        )
        .unwrap()
    }

    pub fn clairvoyant(&self) -> ClairvoyantScorer {
        ClairvoyantScorer::new(std::sync::Arc::new(self.qrels.clone()))
    }

    pub fn lexical(&self) -> LexicalOverlapScorer {
        LexicalOverlapScorer::new(Analyzer::for_lang("en"))
    }
}

pub fn run_text(run: &[RunEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    xlr_core::corpus::write_run_to(&mut out, run).unwrap();
    out
}

// ---------------------------------------------------------------------------
// Fusion

pub fn check_fusion_identities(seed: u64) -> Check {
    let start = Instant::now();
    let fx = synthetic_fixture("en");

    // alpha = 1 with any sentence evidence leaves the BM25 run untouched.
    let constant = ConstantScorer::new(0.5).unwrap();
    for (name, evidence) in [("constant", fx.evidence(&constant)), ("lexical", fx.evidence(&fx.lexical()))] {
        let reranked = rerank_fixed(&evidence, &FusionParams::new(1.0, vec![1.0, 0.7, 0.3]).unwrap(), "bm25");
        ensure(run_text(&reranked) == run_text(&fx.bm25), || {
            format!("alpha=1 rerank with {name} scorer differs from the BM25 run")
        })?;
    }

    let p = FusionParams::new(0.5, vec![1.0, 0.5]).unwrap();
    let worked = fuse(&p, 2.0, &[0.8, 0.6, 0.1]);
    ensure(worked == 1.55, || format!("worked example gave {worked:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = 0;
    for _ in 0..500 {
        let k = rng.gen_range(1..=3);
        let mut weights = vec![1.0];
        weights.extend((1..k).map(|_| rng.gen_range(0..=10) as f64 / 10.0));
        let p = FusionParams::new(rng.gen_range(0..=10) as f64 / 10.0, weights).unwrap();
        let s_r = rng.gen_range(0.0..30.0);
        let mut scores: Vec<f64> = (0..rng.gen_range(0..12)).map(|_| rng.gen::<f64>()).collect();
        let base = fuse(&p, s_r, &scores);
        for _ in 0..5 {
            scores.shuffle(&mut rng);
            let again = fuse(&p, s_r, &scores);
            ensure(again.to_bits() == base.to_bits(), || format!("permutation changed {base} to {again}"))?;
            trials += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "alpha=1 byte-identical, worked example = {worked}, {trials} permutations stable; {:.2?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// End to end

pub fn mean_ap(run: &[RunEntry], qrels: &Qrels) -> f64 {
    evaluate_run(run, qrels).mean.ap
}

pub fn check_clairvoyant(seed: u64) -> Check {
    let start = Instant::now();
    let fx = synthetic_fixture("en");
    let evidence = fx.evidence(&fx.clairvoyant());
    let oracle = rerank_fixed(&evidence, &FusionParams::new(0.0, vec![1.0]).unwrap(), "clairvoyant");
    let oracle_ap = mean_ap(&oracle, &fx.qrels);
    ensure(oracle_ap == 1.0, || format!("alpha=0, k=1 mean AP {oracle_ap}"))?;

    let bm25_ap = mean_ap(&fx.bm25, &fx.qrels);
    let (cv_run, report) =
        tune_and_rerank(&evidence, &fx.qrels, &Grid::standard(), 5, seed, "cv").map_err(|e| e.to_string())?;
    let cv_ap = mean_ap(&cv_run, &fx.qrels);
    ensure((cv_ap - report.held_out.mean.ap).abs() < 1e-12, || "report disagrees with run".into())?;
    ensure(cv_ap >= bm25_ap, || format!("held-out AP {cv_ap} below BM25 {bm25_ap}"))?;
    if bm25_ap < 1.0 {
        ensure(cv_ap > bm25_ap, || format!("held-out AP {cv_ap} not above BM25 {bm25_ap}"))?;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "oracle AP={oracle_ap:.4}, BM25 AP={bm25_ap:.4}, 5-fold CV AP={cv_ap:.4} over {} grid points; {:.2?}",
        Grid::<f64>::standard().len(),
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FixedScores {
    topics: Vec<String>,
    table: Vec<BTreeMap<String, f64>>,
    points: Vec<FusionParams<f64>>,
}

impl CvPipeline<f64> for FixedScores {
    fn topic_ids(&self) -> Vec<String> {
        self.topics.clone()
    }

    fn per_topic_ap(&self, params: &FusionParams<f64>) -> xlr_core::Result<BTreeMap<String, f64>> {
        let i = self.points.iter().position(|p| p == params).unwrap();
        Ok(self.table[i].clone())
    }
}

pub fn check_cv_hygiene(seed: u64) -> Check {
    let start = Instant::now();
    let fx = synthetic_fixture("en");
    let evidence = fx.evidence(&fx.lexical());
    let grid = Grid::new(vec![0.0, 0.3, 0.6, 0.9], vec![0.0, 0.5, 1.0], vec![1, 2]).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = evidence.iter().map(|t| t.topic_id.as_str()).collect();
    let assignment = assign_folds(&ids, 5, seed).map_err(|e| e.to_string())?;
    let base = cross_validate(&assignment, &grid, &EvidencePipeline { topics: &evidence, qrels: &fx.qrels })
        .map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for fold in 0..assignment.n_folds {
        let test: BTreeSet<String> = assignment.test_topics(fold).into_iter().collect();
        // Rewrite the held-out topics' judgments wholesale.
        let mut perturbed = Qrels::new();
        for (t, d, g) in fx.qrels.iter() {
            if !test.contains(t) {
                perturbed.insert(t, d, g);
            }
        }
        for t in &test {
            let cands: Vec<&str> = fx.bm25.iter().filter(|e| &e.topic_id == t).map(|e| e.doc_id.as_str()).collect();
            for d in cands.choose_multiple(&mut rng, 5) {
                perturbed.insert(t.as_str(), *d, rng.gen_range(1..=2));
            }
        }
        let again = cross_validate(&assignment, &grid, &EvidencePipeline { topics: &evidence, qrels: &perturbed })
            .map_err(|e| e.to_string())?;
        ensure(again.folds[fold].choice == base.folds[fold].choice, || {
            format!("fold {fold}: params changed after perturbing its test qrels")
        })?;
    }

    // grid_search against exhaustive argmax on a 3-point grid, including
    // ties that the tie rule must settle.
    let tiny = Grid::new(vec![0.2, 0.5, 0.8], vec![1.0], vec![1]).map_err(|e| e.to_string())?;
    let points = tiny.points();
    let topics: Vec<String> = (0..6).map(|i| format!("t{i}")).collect();
    let mut cases = 0;
    for _ in 0..200 {
        let table: Vec<BTreeMap<String, f64>> = points
            .iter()
            .map(|_| topics.iter().map(|t| (t.clone(), rng.gen_range(0..4) as f64 / 4.0)).collect())
            .collect();
        let train: Vec<String> = topics.choose_multiple(&mut rng, 4).cloned().collect();
        let pipeline = FixedScores {
            topics: topics.clone(),
            table: table.clone(),
            points: points.clone(),
        };
        let got = grid_search(&tiny, &train, |p| pipeline.per_topic_ap(p)).map_err(|e| e.to_string())?;
        let means: Vec<f64> = table
            .iter()
            .map(|m| train.iter().map(|t| m[t]).sum::<f64>() / train.len() as f64)
            .collect();
        let mut best = 0;
        for i in 1..points.len() {
            if means[i] > means[best]
                || (means[i] == means[best] && tie_break(&points[i], &points[best]) == std::cmp::Ordering::Less)
            {
                best = i;
            }
        }
        ensure(got.params == points[best], || {
            format!("grid_search chose {} but argmax is {}", got.params, points[best])
        })?;
        cases += 1;
    }
    Ok(format!(
        "{} folds stable under test-qrels perturbation; {cases} grid searches equal exhaustive argmax; {:.2?}",
        assignment.n_folds,
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// Determinism

pub fn synthetic_config(name: &str, scorer: &str, out_dir: PathBuf) -> ExperimentConfig {
    let dir = synthetic_dir();
    let text = format!(
        r#"
        name = "{name}"
        corpus = "corpus.en.jsonl"
        doc_lang = "en"
        topics = "topics.jsonl"
        query_lang = "en"
        qrels = "qrels.txt"
        scorer = "{scorer}"
        seed = 7
        [grid]
        alpha_values = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        weight_values = [0.0, 0.5, 1.0]
        "#
    );
    let mut cfg = ExperimentConfig::from_toml(&format!("out_dir = \"unused\"\n{text}"))
        .unwrap()
        .resolved(&dir);
    cfg.out_dir = out_dir;
    cfg
}

pub fn run_files(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "run" || x == "json" || x == "tsv"))
        .filter(|p| p.file_name().is_some_and(|n| n != "summary.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

pub fn check_determinism(threads: usize) -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, t) in [1, threads, 1, threads].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let cfg = synthetic_config("determinism", "builtin:lexical", out.clone());
        run_experiment(&cfg, &RunOptions { threads: t, cache_dir: None }).map_err(|e| e.to_string())?;
        outputs.push(run_files(&out));
    }
    let runs = outputs[0].keys().filter(|k| k.ends_with(".run")).count();
    ensure(runs >= 4, || format!("only {runs} run files written"))?;
    for (i, o) in outputs.iter().enumerate().skip(1) {
        ensure(o == &outputs[0], || format!("output set {i} differs from the first"))?;
    }
    Ok(format!(
        "4 runs at 1/{threads} threads, {runs} run files byte-identical; {:.2?}",
        start.elapsed()
    ))
}
