use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::protocol::{check_response, parse_response, HealthResponse, ScoreRequest, ScoreResponse};
use super::{ScoreContext, SentenceScorer};
use crate::analysis::Sentence;
use crate::error::ScorerError;

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Moves wire-protocol requests to a scoring service. Responses may come back
/// in any order; [`RemoteScorer`] matches them by `request_id`.
pub trait Transport: Send + Sync {
    fn describe(&self) -> String;

    fn exchange(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError>;

    fn health(&self) -> Option<Result<String, ScorerError>> {
        None
    }
}

/// Scorer backed by an external service.
pub struct RemoteScorer<T> {
    transport: T,
    batch_size: usize,
    max_retries: usize,
    backoff: Duration,
    next_id: AtomicU64,
}

impl<T: Transport> RemoteScorer<T> {
    pub fn new(transport: T) -> Self {
        RemoteScorer {
            transport,
            batch_size: DEFAULT_BATCH_SIZE,
            max_retries: 2,
            backoff: Duration::from_millis(200),
            next_id: AtomicU64::new(0),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        self.batch_size = batch_size;
        self
    }

    pub fn with_retries(mut self, max_retries: usize, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn exchange_with_retry(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        let mut attempt = 0;
        loop {
            match self.transport.exchange(requests) {
                Err(e) if e.is_retriable() && attempt < self.max_retries => {
                    attempt += 1;
                    log::warn!("{} failed ({e}); retry {attempt}/{}", self.transport.describe(), self.max_retries);
                    std::thread::sleep(self.backoff * attempt as u32);
                }
                other => return other,
            }
        }
    }
}

impl<T: Transport> SentenceScorer for RemoteScorer<T> {
    fn fingerprint(&self) -> String {
        self.transport.describe()
    }

    fn score(&self, ctx: &ScoreContext<'_>, sentences: &[Sentence]) -> Result<Vec<f64>, ScorerError> {
        let requests: Vec<ScoreRequest> = sentences
            .chunks(self.batch_size)
            .map(|chunk| ScoreRequest {
                request_id: format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed)),
                query: ctx.query.to_string(),
                sentences: chunk.iter().map(|s| s.text.clone()).collect(),
            })
            .collect();
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let responses = self.exchange_with_retry(&requests)?;
        let mut by_id: HashMap<String, ScoreResponse> = HashMap::with_capacity(responses.len());
        for resp in responses {
            let id = resp.request_id.clone();
            if by_id.insert(id.clone(), resp).is_some() {
                return Err(ScorerError::protocol(&id, "duplicate response"));
            }
        }
        let mut scores = Vec::with_capacity(sentences.len());
        for req in &requests {
            let resp = by_id
                .remove(&req.request_id)
                .ok_or_else(|| ScorerError::protocol(&req.request_id, "no response"))?;
            check_response(req, &resp)?;
            scores.extend(resp.scores);
        }
        if let Some(stray) = by_id.keys().next() {
            return Err(ScorerError::protocol(stray, "response to unknown request"));
        }
        Ok(scores)
    }

    fn health(&self) -> Option<Result<String, ScorerError>> {
        self.transport.health()
    }
}

/// `POST {base}/score`, `GET {base}/health`.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn post(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let url = format!("{}/score", self.base_url);
        let body = serde_json::to_string(request).expect("request serializes");
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| ScorerError::Transport(format!("POST {url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ScorerError::Transport(format!("POST {url}: {e}")))?;
        if status != 200 {
            return Err(ScorerError::Transport(format!(
                "POST {url} (request {}): status {status}: {text}",
                request.request_id
            )));
        }
        parse_response(&request.request_id, &text)
    }
}

impl Transport for HttpTransport {
    fn describe(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn exchange(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        requests.iter().map(|r| self.post(r)).collect()
    }

    fn health(&self) -> Option<Result<String, ScorerError>> {
        let url = format!("{}/health", self.base_url);
        let result = (|| {
            let mut resp = self
                .agent
                .get(&url)
                .call()
                .map_err(|e| ScorerError::Transport(format!("GET {url}: {e}")))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| ScorerError::Transport(format!("GET {url}: {e}")))?;
            if status != 200 {
                return Err(ScorerError::Transport(format!("GET {url}: status {status}")));
            }
            serde_json::from_str::<HealthResponse>(&text)
                .map(|h| h.model)
                .map_err(|e| ScorerError::protocol("health", format!("malformed health response: {e}")))
        })();
        Some(result)
    }
}

/// Newline-delimited JSON over a writer/reader pair. Requests are written on
/// a helper thread while responses are read, so a peer that answers before
/// reading everything cannot deadlock on full pipes.
pub struct StdioChannel<W, R> {
    label: String,
    inner: Mutex<ChannelState<W, R>>,
}

struct ChannelState<W, R> {
    writer: W,
    reader: R,
    broken: bool,
}

impl<W: Write + Send, R: BufRead + Send> StdioChannel<W, R> {
    pub fn new(label: impl Into<String>, writer: W, reader: R) -> Self {
        StdioChannel {
            label: label.into(),
            inner: Mutex::new(ChannelState {
                writer,
                reader,
                broken: false,
            }),
        }
    }
}

impl<W: Write + Send, R: BufRead + Send> Transport for StdioChannel<W, R> {
    fn describe(&self) -> String {
        format!("stdio:{}", self.label)
    }

    fn exchange(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let state = &mut *guard;
        if state.broken {
            return Err(ScorerError::protocol("-", "stdio scorer stream is out of sync after an earlier failure"));
        }
        let writer = &mut state.writer;
        let reader = &mut state.reader;
        let result = std::thread::scope(|scope| {
            let sender = scope.spawn(move || -> std::io::Result<()> {
                for req in requests {
                    serde_json::to_writer(&mut *writer, req)?;
                    writer.write_all(b"\n")?;
                }
                writer.flush()
            });
            let mut responses = Vec::with_capacity(requests.len());
            let mut line = String::new();
            let mut failure = None;
            while responses.len() < requests.len() {
                line.clear();
                match reader.read_line(&mut line) {
                    Ok(0) => {
                        failure = Some(ScorerError::Transport("scorer closed its output".into()));
                        break;
                    }
                    Ok(_) if line.trim().is_empty() => continue,
                    Ok(_) => match parse_response("?", line.trim()) {
                        Ok(r) => responses.push(r),
                        Err(e) => {
                            failure = Some(e);
                            break;
                        }
                    },
                    Err(e) => {
                        failure = Some(ScorerError::Transport(format!("reading scorer output: {e}")));
                        break;
                    }
                }
            }
            let sent = sender.join().expect("writer thread panicked");
            match (failure, sent) {
                (Some(e), _) => Err(e),
                (None, Err(e)) => Err(ScorerError::Transport(format!("writing to scorer: {e}"))),
                (None, Ok(())) => Ok(responses),
            }
        });
        if result.is_err() {
            state.broken = true;
        }
        result
    }
}

/// A scorer child process spoken to over its stdin/stdout.
pub struct StdioProcess {
    child: Child,
    channel: StdioChannel<ChildStdin, BufReader<ChildStdout>>,
}

impl StdioProcess {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, ScorerError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::Transport(format!("spawning {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(StdioProcess {
            child,
            channel: StdioChannel::new(command, stdin, BufReader::new(stdout)),
        })
    }
}

impl Transport for StdioProcess {
    fn describe(&self) -> String {
        self.channel.describe()
    }

    fn exchange(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        self.channel.exchange(requests)
    }
}

impl Drop for StdioProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
