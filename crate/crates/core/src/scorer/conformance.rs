//! Protocol conformance checks runnable against any scorer, local or remote.

use serde::Serialize;

use super::{score_batch, ScoreContext, SentenceScorer};
use crate::analysis::Sentence;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, result: Result<String, String>) -> Self {
        match result {
            Ok(detail) => CheckOutcome {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckOutcome {
                name,
                passed: false,
                detail,
            },
        }
    }
}

fn probe_sentences() -> Vec<Sentence> {
    [
        "The capital of France is Paris.",
        "Paris hosted the Olympic games.",
        "Bananas are rich in potassium.",
        "",
        "巴黎是法国的首都。",
        "Die Hauptstadt Frankreichs ist Paris.",
        "A completely unrelated sentence about weather patterns in the north.",
    ]
    .iter()
    .enumerate()
    .map(|(index, t)| Sentence {
        doc_id: "probe".into(),
        index,
        text: t.to_string(),
    })
    .collect()
}

fn scores_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Runs alignment, range, permutation, batching-transparency, determinism
/// and (for remote scorers) health checks.
pub fn run_checks<S: SentenceScorer + ?Sized>(scorer: &S) -> Vec<CheckOutcome> {
    let ctx = ScoreContext::new("probe", "capital of France");
    let batch = probe_sentences();
    let mut out = Vec::new();

    let base = score_batch(scorer, &ctx, &batch);
    out.push(CheckOutcome::new(
        "alignment",
        match &base {
            Ok(s) => Ok(format!("{} sentences -> {} scores", batch.len(), s.len())),
            Err(e) => Err(e.to_string()),
        },
    ));
    let Ok(base) = base else {
        return out;
    };
    out.push(CheckOutcome::new(
        "range",
        if base.iter().all(|s| (0.0..=1.0).contains(s)) {
            Ok("all scores in [0, 1]".into())
        } else {
            Err(format!("{base:?}"))
        },
    ));

    let perm: Vec<usize> = (0..batch.len()).rev().collect();
    let permuted: Vec<Sentence> = perm.iter().map(|&i| batch[i].clone()).collect();
    out.push(CheckOutcome::new(
        "permutation",
        score_batch(scorer, &ctx, &permuted)
            .map_err(|e| e.to_string())
            .and_then(|s| {
                let expected: Vec<f64> = perm.iter().map(|&i| base[i]).collect();
                if scores_equal(&s, &expected) {
                    Ok("reversed input -> reversed output".into())
                } else {
                    Err(format!("expected {expected:?}, got {s:?}"))
                }
            }),
    ));

    let mut pieces = Vec::new();
    let mut failure = None;
    for chunk in batch.chunks(3) {
        match score_batch(scorer, &ctx, chunk) {
            Ok(s) => pieces.extend(s),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    out.push(CheckOutcome::new(
        "batching",
        match failure {
            Some(e) => Err(e),
            None if scores_equal(&pieces, &base) => Ok("chunks of 3 match a single batch".into()),
            None => Err(format!("single {base:?} vs chunked {pieces:?}")),
        },
    ));

    out.push(CheckOutcome::new(
        "determinism",
        score_batch(scorer, &ctx, &batch)
            .map_err(|e| e.to_string())
            .and_then(|s| {
                if scores_equal(&s, &base) {
                    Ok("repeat request gives identical scores".into())
                } else {
                    Err(format!("{base:?} then {s:?}"))
                }
            }),
    ));

    if let Some(health) = scorer.health() {
        out.push(CheckOutcome::new(
            "health",
            health.map(|m| format!("model {m}")).map_err(|e| e.to_string()),
        ));
    }
    out
}
