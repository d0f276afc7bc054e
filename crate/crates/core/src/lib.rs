//! Two-stage multilingual document ranking.
//!
//! BM25 over an in-memory inverted index retrieves candidates; each candidate
//! is split into sentences, the sentences are scored by a relevance scorer,
//! and the document score is interpolated with its top-k sentence scores.
//! Interpolation weights are tuned by k-fold cross-validation on AP.
//!
//! The numeric core is generic over the scalar type (see [`num`]); the
//! aliases below fix it to `f64` for everyday use, and [`Exact`] gives
//! rational arithmetic where no transcendental functions are involved.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod index;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod scorer;
pub mod synthetic;
pub mod tuning;

pub use analysis::{split_sentences, Analyzer, Segmenter, Sentence, TokenMode};
pub use corpus::{CorpusFormat, Document, Qrels, RunEntry, Topic, TopicField};
pub use error::{Error, Result, ScorerError};
pub use fusion::{fuse, rerank, FusedDoc, FusionParams, Normalization, RankedList};
pub use index::{Bm25Params, InvertedIndex, ScoredDoc};
pub use metrics::{average_precision, evaluate_run, ndcg_at, precision_at, TopicMetrics};
pub use num::{Exact, Real, Scalar};
pub use scorer::{ScoreContext, ScorerSpec, SentenceScorer};
pub use tuning::{assign_folds, cross_validate, grid_search, FoldAssignment, Grid};

pub type Bm25 = index::Bm25Params<f64>;
pub type Hit = index::ScoredDoc<f64>;
pub type Params = fusion::FusionParams<f64>;
pub type ExactParams = fusion::FusionParams<Exact>;
pub type Fused = fusion::FusedDoc<f64>;
pub type Ranking = fusion::RankedList<f64>;
pub type Metrics = metrics::TopicMetrics<f64>;
pub type ParamGrid = tuning::Grid<f64>;
pub type ExactGrid = tuning::Grid<Exact>;
