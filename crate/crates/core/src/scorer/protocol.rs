//! JSON wire protocol shared by the HTTP and stdio transports.
//!
//! * `POST /score` with `{"request_id": .., "query": .., "sentences": [..]}`
//!   answers `200 {"request_id": .., "scores": [..]}`.
//! * `GET /health` answers `200 {"model": ..}`.
//! * Over stdio, requests and responses are one JSON object per line and
//!   responses may come back in any order.
//!
//! A server that cannot score a parseable request may answer with
//! `{"request_id": .., "error": ".."}` instead of `scores`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{check_scores, ScoreContext, SentenceScorer};
use crate::analysis::Sentence;
use crate::error::ScorerError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub request_id: String,
    pub query: String,
    pub sentences: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub request_id: String,
    #[serde(default)]
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub model: String,
}

/// Validates a response against the request it answers.
pub fn check_response(request: &ScoreRequest, response: &ScoreResponse) -> Result<(), ScorerError> {
    if response.request_id != request.request_id {
        return Err(ScorerError::protocol(
            &request.request_id,
            format!("response carries request_id {:?}", response.request_id),
        ));
    }
    if let Some(err) = &response.error {
        return Err(ScorerError::protocol(&request.request_id, format!("scorer reported: {err}")));
    }
    check_scores(&request.request_id, request.sentences.len(), &response.scores)
}

/// Parses a response body. `serde_json` rejects NaN literals, which surfaces
/// them as protocol errors as well.
pub fn parse_response(request_id: &str, body: &str) -> Result<ScoreResponse, ScorerError> {
    serde_json::from_str(body).map_err(|e| ScorerError::protocol(request_id, format!("malformed response: {e}")))
}

/// Answers one request with a local scorer. Sentences are scored as if they
/// all came from one anonymous document.
pub fn answer<S: SentenceScorer + ?Sized>(scorer: &S, request: &ScoreRequest) -> ScoreResponse {
    let sentences: Vec<Sentence> = request
        .sentences
        .iter()
        .enumerate()
        .map(|(index, text)| Sentence {
            doc_id: String::new(),
            index,
            text: text.clone(),
        })
        .collect();
    let ctx = ScoreContext::new("", &request.query);
    match super::score_batch(scorer, &ctx, &sentences) {
        Ok(scores) => ScoreResponse {
            request_id: request.request_id.clone(),
            scores,
            error: None,
        },
        Err(e) => ScoreResponse {
            request_id: request.request_id.clone(),
            scores: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

fn error_line(line: &str, message: String) -> ScoreResponse {
    let request_id = serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("request_id").and_then(|id| id.as_str()).map(str::to_string))
        .unwrap_or_default();
    ScoreResponse {
        request_id,
        scores: Vec::new(),
        error: Some(message),
    }
}

/// Serves the stdio transport until `input` reaches EOF.
pub fn serve_stdio<S, R, W>(scorer: &S, input: R, mut output: W) -> std::io::Result<()>
where
    S: SentenceScorer + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<ScoreRequest>(&line) {
            Ok(req) => answer(scorer, &req),
            Err(e) => error_line(&line, format!("malformed request: {e}")),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

/// Transport-independent HTTP routing: returns `(status, json body)`.
pub fn handle_http<S: SentenceScorer + ?Sized>(scorer: &S, model: &str, method: &str, path: &str, body: &str) -> (u16, String) {
    match (method, path) {
        ("GET", "/health") => (
            200,
            serde_json::to_string(&HealthResponse { model: model.to_string() }).expect("serializes"),
        ),
        ("POST", "/score") => match serde_json::from_str::<ScoreRequest>(body) {
            Ok(req) => {
                let resp = answer(scorer, &req);
                let status = if resp.error.is_some() { 422 } else { 200 };
                (status, serde_json::to_string(&resp).expect("serializes"))
            }
            Err(e) => (
                400,
                serde_json::to_string(&error_line(body, format!("malformed request: {e}"))).expect("serializes"),
            ),
        },
        _ => (404, "{\"error\":\"not found\"}".to_string()),
    }
}
