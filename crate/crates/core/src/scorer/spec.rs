use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::{
    ClairvoyantScorer, ConstantScorer, HttpTransport, LexicalOverlapScorer, RemoteScorer, SentenceScorer,
    StdioProcess,
};
use crate::analysis::Analyzer;
use crate::corpus::read_qrels;
use crate::error::{Error, ScorerError};

/// One string that selects any scorer:
///
/// ```text
/// builtin:constant:0.5 | builtin:lexical | builtin:clairvoyant:<qrels path>
/// http:<url> | stdio:<command>
/// ```
#[derive(Clone, Debug, PartialEq)]
pub enum ScorerSpec {
    Constant(f64),
    Lexical,
    Clairvoyant(PathBuf),
    Http(String),
    Stdio(String),
}

impl FromStr for ScorerSpec {
    type Err = ScorerError;

    fn from_str(s: &str) -> Result<Self, ScorerError> {
        let bad = |message: &str| ScorerError::Spec {
            spec: s.to_string(),
            message: message.to_string(),
        };
        if let Some(rest) = s.strip_prefix("builtin:") {
            let (name, arg) = match rest.split_once(':') {
                Some((n, a)) => (n, Some(a)),
                None => (rest, None),
            };
            return match (name, arg) {
                ("constant", Some(v)) => {
                    let v: f64 = v.parse().map_err(|_| bad("constant needs a number"))?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(bad("constant must lie in [0, 1]"));
                    }
                    Ok(ScorerSpec::Constant(v))
                }
                ("lexical", None) => Ok(ScorerSpec::Lexical),
                ("clairvoyant", Some(p)) if !p.is_empty() => Ok(ScorerSpec::Clairvoyant(PathBuf::from(p))),
                _ => Err(bad("expected builtin:constant:<x>, builtin:lexical or builtin:clairvoyant:<qrels>")),
            };
        }
        if s.starts_with("http:") || s.starts_with("https:") {
            let url = s.strip_prefix("http:").filter(|r| !r.starts_with("//")).unwrap_or(s);
            let url = if url.contains("://") { url.to_string() } else { format!("http://{url}") };
            return Ok(ScorerSpec::Http(url));
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err(bad("stdio needs a command"));
            }
            return Ok(ScorerSpec::Stdio(cmd.to_string()));
        }
        Err(bad("unknown scorer kind"))
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Constant(v) => write!(f, "builtin:constant:{v}"),
            ScorerSpec::Lexical => f.write_str("builtin:lexical"),
            ScorerSpec::Clairvoyant(p) => write!(f, "builtin:clairvoyant:{}", p.display()),
            ScorerSpec::Http(url) => write!(f, "http:{url}"),
            ScorerSpec::Stdio(cmd) => write!(f, "stdio:{cmd}"),
        }
    }
}

impl ScorerSpec {
    /// Relative clairvoyant qrels paths are resolved against `base`.
    pub fn resolve_paths(self, base: &Path) -> Self {
        match self {
            ScorerSpec::Clairvoyant(p) if p.is_relative() => ScorerSpec::Clairvoyant(base.join(p)),
            other => other,
        }
    }

    /// Instantiates the scorer. `analyzer` is the active analyzer, used by
    /// the lexical scorer.
    pub fn build(&self, analyzer: &Analyzer, batch_size: usize) -> Result<Arc<dyn SentenceScorer>, Error> {
        Ok(match self {
            ScorerSpec::Constant(v) => Arc::new(ConstantScorer::new(*v)?),
            ScorerSpec::Lexical => Arc::new(LexicalOverlapScorer::new(analyzer.clone())),
            ScorerSpec::Clairvoyant(path) => Arc::new(ClairvoyantScorer::new(Arc::new(read_qrels(path)?))),
            ScorerSpec::Http(url) => Arc::new(RemoteScorer::new(HttpTransport::new(url)).with_batch_size(batch_size)),
            ScorerSpec::Stdio(cmd) => Arc::new(RemoteScorer::new(StdioProcess::spawn(cmd)?).with_batch_size(batch_size)),
        })
    }
}
