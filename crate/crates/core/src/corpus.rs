//! Corpus, topic, qrels and run file I/O.
//!
//! Formats:
//!
//! * corpus JSONL: one `{"id": .., "contents": .., "lang": ..}` object per line
//! * corpus TREC-SGML: `<DOC><DOCNO>id</DOCNO> .. </DOC>` blocks, markup stripped
//! * topics JSONL: `{"id": .., "titles": {lang: query, ..}, "descriptions": {..}}`
//! * qrels: `topic_id 0 doc_id grade`
//! * run: `topic_id Q0 doc_id rank score tag`

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub contents: String,
    pub lang: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, contents: impl Into<String>, lang: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            contents: contents.into(),
            lang: lang.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Jsonl,
    TrecSgml,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "trec-sgml" | "sgml" | "trec" => Ok(CorpusFormat::TrecSgml),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::TrecSgml => "trec-sgml",
        })
    }
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    #[serde(default)]
    contents: String,
    lang: Option<String>,
}

/// Streaming corpus reader. Holds at most one document in memory plus the set
/// of ids seen so far (for duplicate detection).
pub struct CorpusReader<R> {
    reader: R,
    format: CorpusFormat,
    origin: String,
    default_lang: Option<String>,
    line_no: usize,
    seen: HashSet<String>,
    pending: String,
    pending_line: usize,
    done: bool,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, format: CorpusFormat, origin: impl Into<String>) -> Self {
        CorpusReader {
            reader,
            format,
            origin: origin.into(),
            default_lang: None,
            line_no: 0,
            seen: HashSet::new(),
            pending: String::new(),
            pending_line: 0,
            done: false,
        }
    }

    /// Language assigned to documents that do not carry one (always the case
    /// for TREC-SGML).
    pub fn with_default_lang(mut self, lang: impl Into<String>) -> Self {
        self.default_lang = Some(lang.into());
        self
    }

    fn read_line(&mut self, buf: &mut String) -> Result<bool> {
        buf.clear();
        let n = self
            .reader
            .read_line(buf)
            .map_err(|e| Error::parse(&self.origin, self.line_no + 1, format!("read failed: {e}")))?;
        if n == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        Ok(true)
    }

    fn resolve_lang(&self, lang: Option<String>, line: usize) -> Result<String> {
        match lang.or_else(|| self.default_lang.clone()) {
            Some(l) if !l.is_empty() => Ok(l),
            _ => Err(Error::parse(&self.origin, line, "document has no lang and no default was given")),
        }
    }

    fn register(&mut self, doc: Document, line: usize) -> Result<Document> {
        if doc.doc_id.is_empty() {
            return Err(Error::parse(&self.origin, line, "empty doc id"));
        }
        if !self.seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDoc(doc.doc_id));
        }
        Ok(doc)
    }

    fn next_jsonl(&mut self) -> Result<Option<Document>> {
        let mut line = String::new();
        loop {
            if !self.read_line(&mut line)? {
                return Ok(None);
            }
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let raw: RawDocument = serde_json::from_str(trimmed)
                .map_err(|e| Error::parse(&self.origin, self.line_no, e.to_string()))?;
            let lang = self.resolve_lang(raw.lang, self.line_no)?;
            let doc = Document {
                doc_id: raw.id,
                contents: raw.contents,
                lang,
            };
            return self.register(doc, self.line_no).map(Some);
        }
    }

    fn next_sgml(&mut self) -> Result<Option<Document>> {
        let mut line = String::new();
        loop {
            if let Some(open) = find_doc_open(&self.pending) {
                let before = &self.pending[..open.start];
                if !before.trim().is_empty() {
                    return Err(Error::parse(&self.origin, self.pending_line, "text outside <DOC> block"));
                }
                if let Some(close) = self.pending[open.end..].find("</DOC>") {
                    let body_end = open.end + close;
                    let body = self.pending[open.end..body_end].to_string();
                    let start_line = self.pending_line;
                    self.pending_line = self.line_no;
                    self.pending.drain(..body_end + "</DOC>".len());
                    let doc = self.parse_sgml_body(&body, start_line)?;
                    return self.register(doc, start_line).map(Some);
                }
            } else if !self.pending.trim().is_empty() && !could_start_doc(&self.pending) {
                return Err(Error::parse(&self.origin, self.pending_line, "text outside <DOC> block"));
            }

            if !self.read_line(&mut line)? {
                if self.pending.trim().is_empty() {
                    return Ok(None);
                }
                return Err(Error::parse(&self.origin, self.pending_line, "unterminated <DOC> block"));
            }
            if self.pending.trim().is_empty() {
                self.pending.clear();
                self.pending_line = self.line_no;
            }
            self.pending.push_str(&line);
        }
    }

    fn parse_sgml_body(&self, body: &str, line: usize) -> Result<Document> {
        let start = body
            .find("<DOCNO>")
            .ok_or_else(|| Error::parse(&self.origin, line, "missing <DOCNO>"))?;
        let rest = &body[start + "<DOCNO>".len()..];
        let end = rest
            .find("</DOCNO>")
            .ok_or_else(|| Error::parse(&self.origin, line, "unterminated <DOCNO>"))?;
        let doc_id = rest[..end].trim().to_string();
        let mut text = String::with_capacity(body.len());
        text.push_str(&body[..start]);
        text.push_str(&rest[end + "</DOCNO>".len()..]);
        let contents = strip_markup(&text);
        let lang = self.resolve_lang(None, line)?;
        Ok(Document {
            doc_id,
            contents,
            lang,
        })
    }
}

struct Span {
    start: usize,
    end: usize,
}

fn find_doc_open(buf: &str) -> Option<Span> {
    let mut from = 0;
    while let Some(pos) = buf[from..].find("<DOC") {
        let start = from + pos;
        let after = &buf[start + 4..];
        match after.chars().next() {
            Some('>') => {
                return Some(Span {
                    start,
                    end: start + 5,
                })
            }
            Some(c) if c.is_whitespace() => {
                let close = after.find('>')?;
                return Some(Span {
                    start,
                    end: start + 4 + close + 1,
                });
            }
            _ => from = start + 4,
        }
    }
    None
}

fn could_start_doc(buf: &str) -> bool {
    let t = buf.trim_start();
    t.starts_with("<DOC") || "<DOC".starts_with(t)
}

/// Removes `<...>` tags and trims each line, dropping blank lines.
fn strip_markup(text: &str) -> String {
    let mut plain = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                plain.push(' ');
            }
            _ if !in_tag => plain.push(c),
            _ => {}
        }
    }
    let mut out = String::with_capacity(plain.len());
    for line in plain.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(line);
    }
    out
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = match self.format {
            CorpusFormat::Jsonl => self.next_jsonl(),
            CorpusFormat::TrecSgml => self.next_sgml(),
        };
        match item {
            Ok(Some(doc)) => Some(Ok(doc)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Opens a corpus file for streaming.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<CorpusReader<BufReader<File>>> {
    Ok(CorpusReader::new(open(path)?, format, path.display().to_string()))
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = create(path)?;
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    #[serde(rename = "id")]
    pub topic_id: String,
    pub titles: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub descriptions: BTreeMap<String, String>,
}

/// Which topic field forms the query text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicField {
    #[default]
    Title,
    Description,
}

impl FromStr for TopicField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "title" => Ok(TopicField::Title),
            "description" | "desc" => Ok(TopicField::Description),
            other => Err(Error::Config(format!("unknown topic field {other:?}"))),
        }
    }
}

impl Topic {
    pub fn query(&self, lang: &str, field: TopicField) -> Result<&str> {
        let variants = match field {
            TopicField::Title => &self.titles,
            TopicField::Description => &self.descriptions,
        };
        variants.get(lang).map(String::as_str).ok_or_else(|| Error::MissingVariant {
            topic_id: self.topic_id.clone(),
            lang: lang.to_string(),
        })
    }
}

pub fn parse_topics<R: BufRead>(reader: R, origin: &str) -> Result<Vec<Topic>> {
    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let topic: Topic =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        if topic.topic_id.is_empty() {
            return Err(Error::parse(origin, line_no, "empty topic id"));
        }
        if topic.titles.is_empty() {
            return Err(Error::parse(origin, line_no, format!("topic {} has no titles", topic.topic_id)));
        }
        if !seen.insert(topic.topic_id.clone()) {
            return Err(Error::DuplicateTopic(topic.topic_id));
        }
        topics.push(topic);
    }
    Ok(topics)
}

pub fn read_topics(path: &Path) -> Result<Vec<Topic>> {
    parse_topics(open(path)?, &path.display().to_string())
}

pub fn write_topics(path: &Path, topics: &[Topic]) -> Result<()> {
    let mut out = create(path)?;
    for t in topics {
        let line = serde_json::to_string(t).expect("topic serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Picks one query string per topic, in topic order. Cross-lingual runs differ
/// from mono-lingual ones only in `lang`.
pub fn select_queries(topics: &[Topic], lang: &str, field: TopicField) -> Result<Vec<(String, String)>> {
    topics
        .iter()
        .map(|t| t.query(lang, field).map(|q| (t.topic_id.clone(), q.to_string())))
        .collect()
}

pub fn load_topics(path: &Path, lang: &str, field: TopicField) -> Result<Vec<(String, String)>> {
    select_queries(&read_topics(path)?, lang, field)
}

/// Graded relevance judgments. Unjudged pairs are absent and read as grade 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, topic_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) -> Option<u32> {
        self.judgments
            .entry(topic_id.into())
            .or_default()
            .insert(doc_id.into(), grade)
    }

    pub fn grade(&self, topic_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(topic_id)
            .and_then(|t| t.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_relevant(&self, topic_id: &str, doc_id: &str) -> bool {
        self.grade(topic_id, doc_id) >= 1
    }

    pub fn topic(&self, topic_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(topic_id)
    }

    pub fn contains_topic(&self, topic_id: &str) -> bool {
        self.judgments.contains_key(topic_id)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn num_relevant(&self, topic_id: &str) -> usize {
        self.topic(topic_id)
            .map_or(0, |t| t.values().filter(|&&g| g >= 1).count())
    }

    /// All `(topic, doc, grade)` triples in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(t, docs)| docs.iter().map(move |(d, &g)| (t.as_str(), d.as_str(), g)))
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_qrels<R: BufRead>(reader: R, origin: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 4 columns `topic 0 doc grade`, got {}", cols.len()),
            ));
        }
        let grade: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(origin, line_no, format!("bad grade {:?}", cols[3])))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(origin, line_no, format!("grade must be non-negative, got {grade}")))?;
        if qrels.insert(cols[0], cols[2], grade).is_some() {
            return Err(Error::parse(
                origin,
                line_no,
                format!("duplicate judgment for ({}, {})", cols[0], cols[2]),
            ));
        }
    }
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(open(path)?, &path.display().to_string())
}

pub fn write_qrels_to<W: Write>(mut out: W, qrels: &Qrels) -> std::io::Result<()> {
    for (t, d, g) in qrels.iter() {
        writeln!(out, "{t} 0 {d} {g}")?;
    }
    out.flush()
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    write_qrels_to(create(path)?, qrels).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub topic_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

impl RunEntry {
    pub fn new(
        topic_id: impl Into<String>,
        doc_id: impl Into<String>,
        rank: usize,
        score: f64,
        tag: impl Into<String>,
    ) -> Self {
        RunEntry {
            topic_id: topic_id.into(),
            doc_id: doc_id.into(),
            rank,
            score,
            tag: tag.into(),
        }
    }
}

impl fmt::Display for RunEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{}` on f64 is the shortest representation that parses back exactly.
        write!(
            f,
            "{} Q0 {} {} {} {}",
            self.topic_id, self.doc_id, self.rank, self.score, self.tag
        )
    }
}

#[derive(Default)]
struct TopicRunState<'a> {
    next_rank: usize,
    last_score: f64,
    docs: HashSet<&'a str>,
}

/// Checks the per-topic run invariants: ranks 1..n in order, scores
/// non-increasing, finite, no repeated document. Topics may interleave.
pub fn validate_run(entries: &[RunEntry]) -> Result<()> {
    validate_run_inner(entries).map_err(|(_, e)| e)
}

fn validate_run_inner(entries: &[RunEntry]) -> std::result::Result<(), (usize, Error)> {
    let mut state: HashMap<&str, TopicRunState<'_>> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        let invalid = |message: String| {
            (
                i,
                Error::InvalidRun {
                    topic_id: e.topic_id.clone(),
                    message,
                },
            )
        };
        if e.topic_id.is_empty() || e.doc_id.is_empty() || e.tag.is_empty() {
            return Err(invalid("empty field".into()));
        }
        if e.topic_id.contains(char::is_whitespace)
            || e.doc_id.contains(char::is_whitespace)
            || e.tag.contains(char::is_whitespace)
        {
            return Err(invalid("field contains whitespace".into()));
        }
        if !e.score.is_finite() {
            return Err(invalid(format!("non-finite score for {}", e.doc_id)));
        }
        let st = state.entry(e.topic_id.as_str()).or_insert_with(|| TopicRunState {
            next_rank: 1,
            last_score: f64::INFINITY,
            docs: HashSet::new(),
        });
        if e.rank != st.next_rank {
            return Err(invalid(format!("expected rank {}, found {}", st.next_rank, e.rank)));
        }
        if e.score > st.last_score {
            return Err(invalid(format!(
                "score {} at rank {} exceeds score {} at rank {}",
                e.score,
                e.rank,
                st.last_score,
                e.rank - 1
            )));
        }
        if !st.docs.insert(e.doc_id.as_str()) {
            return Err(invalid(format!("document {} ranked twice", e.doc_id)));
        }
        st.next_rank += 1;
        st.last_score = e.score;
    }
    Ok(())
}

pub fn parse_run<R: BufRead>(reader: R, origin: &str) -> Result<Vec<RunEntry>> {
    let mut entries = Vec::new();
    let mut line_nos = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 6 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 6 columns `topic Q0 doc rank score tag`, got {}", cols.len()),
            ));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::parse(origin, line_no, format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(origin, line_no, format!("bad score {:?}", cols[4])))?;
        entries.push(RunEntry::new(cols[0], cols[2], rank, score, cols[5]));
        line_nos.push(line_no);
    }
    validate_run_inner(&entries).map_err(|(idx, e)| Error::parse(origin, line_nos[idx], e.to_string()))?;
    Ok(entries)
}

pub fn read_run(path: &Path) -> Result<Vec<RunEntry>> {
    parse_run(open(path)?, &path.display().to_string())
}

pub fn write_run_to<W: Write>(mut out: W, entries: &[RunEntry]) -> Result<()> {
    validate_run(entries)?;
    let io = |e| Error::io("<run>", e);
    for e in entries {
        writeln!(out, "{e}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_run(path: &Path, entries: &[RunEntry]) -> Result<()> {
    validate_run(entries)?;
    let mut out = create(path)?;
    for e in entries {
        writeln!(out, "{e}").map_err(|err| Error::io(path, err))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Groups run entries by topic, preserving rank order within each topic and
/// first-appearance order across topics.
pub fn group_run(entries: &[RunEntry]) -> Vec<(String, Vec<&RunEntry>)> {
    let mut order: Vec<(String, Vec<&RunEntry>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for e in entries {
        let slot = *index.entry(e.topic_id.as_str()).or_insert_with(|| {
            order.push((e.topic_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[slot].1.push(e);
    }
    for (_, list) in &mut order {
        list.sort_by_key(|e| e.rank);
    }
    order
}
