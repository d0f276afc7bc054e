use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{score_batch, ScoreContext, SentenceScorer};
use crate::analysis::{hex16, Sentence};
use crate::error::{Error, ScorerError};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
struct CacheKey {
    query: String,
    doc_id: String,
    index: usize,
    /// Digest of the sentence text, so a change of segmentation is a miss.
    text: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    #[serde(flatten)]
    key: CacheKey,
    score: f64,
}

/// Memoizes sentence scores per `(scorer fingerprint, query, doc_id,
/// sentence_index)`, optionally persisted as JSONL in a cache directory (one
/// file per fingerprint). Only misses reach the wrapped scorer.
pub struct CachedScorer<S> {
    inner: S,
    fingerprint: String,
    entries: Mutex<HashMap<CacheKey, f64>>,
    file: Option<(PathBuf, Mutex<BufWriter<File>>)>,
}

fn text_digest(text: &str) -> String {
    hex16(&Sha256::digest(text.as_bytes()))
}

impl<S: SentenceScorer> CachedScorer<S> {
    pub fn in_memory(inner: S) -> Self {
        let fingerprint = inner.fingerprint();
        CachedScorer {
            inner,
            fingerprint,
            entries: Mutex::new(HashMap::new()),
            file: None,
        }
    }

    pub fn persistent(inner: S, dir: &Path) -> Result<Self, Error> {
        let fingerprint = inner.fingerprint();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("scores-{}.jsonl", hex16(&Sha256::digest(fingerprint.as_bytes()))));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(l) if (0.0..=1.0).contains(&l.score) => {
                        entries.insert(l.key, l.score);
                    }
                    // A torn final line from an interrupted run is harmless.
                    _ => log::warn!("{}:{}: ignoring unreadable cache line", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(CachedScorer {
            inner,
            fingerprint,
            entries: Mutex::new(entries),
            file: Some((path, Mutex::new(BufWriter::new(file)))),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }
}

impl<S: SentenceScorer> SentenceScorer for CachedScorer<S> {
    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        let keys: Vec<CacheKey> = sentences
            .iter()
            .map(|s| CacheKey {
                query: ctx.query.to_string(),
                doc_id: s.doc_id.clone(),
                index: s.index,
                text: text_digest(&s.text),
            })
            .collect();
        let mut scores = vec![f64::NAN; sentences.len()];
        let mut misses = Vec::new();
        {
            let entries = self.entries.lock().unwrap_or_else(|p| p.into_inner());
            for (i, key) in keys.iter().enumerate() {
                match entries.get(key) {
                    Some(&s) => scores[i] = s,
                    None => misses.push(i),
                }
            }
        }
        if misses.is_empty() {
            return Ok(scores);
        }
        let pending: Vec<Sentence> = misses.iter().map(|&i| sentences[i].clone()).collect();
        let fresh = score_batch(&self.inner, ctx, &pending)?;
        let mut entries = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        let mut lines = String::new();
        for (&i, score) in misses.iter().zip(fresh) {
            scores[i] = score;
            if entries.insert(keys[i].clone(), score).is_none() && self.file.is_some() {
                let line = CacheLine {
                    key: keys[i].clone(),
                    score,
                };
                lines.push_str(&serde_json::to_string(&line).expect("cache line serializes"));
                lines.push('\n');
            }
        }
        drop(entries);
        if let Some((path, file)) = &self.file {
            let mut out = file.lock().unwrap_or_else(|p| p.into_inner());
            if let Err(e) = out.write_all(lines.as_bytes()).and_then(|_| out.flush()) {
                log::warn!("{}: cache write failed: {e}", path.display());
            }
        }
        Ok(scores)
    }

    fn health(&self) -> Option<Result<String, ScorerError>> {
        self.inner.health()
    }
}
