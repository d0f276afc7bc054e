//! K-fold cross-validation with exhaustive grid search over fusion
//! parameters, selecting by mean average precision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionParams, MAX_K};
use crate::num::{cmp_scalar, Scalar};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Grid<S> {
    pub alpha_values: Vec<S>,
    /// Candidate values for `w_2..w_k`; `w_1` is always 1.
    pub weight_values: Vec<S>,
    pub k_values: Vec<usize>,
}

fn strictly_increasing<S: PartialOrd>(v: &[S]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl<S: Scalar> Grid<S> {
    pub fn new(alpha_values: Vec<S>, weight_values: Vec<S>, k_values: Vec<usize>) -> Result<Self> {
        let grid = Grid {
            alpha_values,
            weight_values,
            k_values,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// alpha and w_2, w_3 in {0.0, 0.1, ..., 1.0}; k in {1, 2, 3}.
    pub fn standard() -> Self {
        let tenths: Vec<S> = (0..=10).map(|i| S::ratio(i, 10)).collect();
        Grid {
            alpha_values: tenths.clone(),
            weight_values: tenths,
            k_values: vec![1, 2, 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: &S| *x >= S::zero() && *x <= S::one();
        if self.alpha_values.is_empty() || self.weight_values.is_empty() || self.k_values.is_empty() {
            return Err(Error::InvalidParams("grid lists must be non-empty".into()));
        }
        if !self.alpha_values.iter().all(unit) || !self.weight_values.iter().all(unit) {
            return Err(Error::InvalidParams("grid values must lie in [0, 1]".into()));
        }
        if !strictly_increasing(&self.alpha_values)
            || !strictly_increasing(&self.weight_values)
            || !strictly_increasing(&self.k_values)
        {
            return Err(Error::InvalidParams("grid lists must be strictly increasing".into()));
        }
        if self.k_values.iter().any(|&k| k == 0 || k > MAX_K) {
            return Err(Error::InvalidParams(format!("k values must lie in 1..={MAX_K}")));
        }
        Ok(())
    }

    /// The same grid restricted to one k.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Grid::new(self.alpha_values.clone(), self.weight_values.clone(), vec![k])
    }

    /// All grid points in a fixed order: k, then alpha, then weights
    /// lexicographically.
    pub fn points(&self) -> Vec<FusionParams<S>> {
        let mut out = Vec::new();
        for &k in &self.k_values {
            let tails = weight_tails(&self.weight_values, k - 1);
            for &alpha in &self.alpha_values {
                for tail in &tails {
                    let mut weights = Vec::with_capacity(k);
                    weights.push(S::one());
                    weights.extend_from_slice(tail);
                    out.push(FusionParams::new(alpha, weights).expect("grid values validated"));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.k_values
            .iter()
            .map(|&k| self.alpha_values.len() * self.weight_values.len().pow(k as u32 - 1))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn weight_tails<S: Scalar>(values: &[S], len: usize) -> Vec<Vec<S>> {
    let mut tails = vec![Vec::new()];
    for _ in 0..len {
        tails = tails
            .into_iter()
            .flat_map(|t| {
                values.iter().map(move |&v| {
                    let mut next = t.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    tails
}

/// Deterministic preference between two grid points with equal objective:
/// smaller k, then larger alpha, then lexicographically smaller weights.
pub fn tie_break<S: Scalar>(a: &FusionParams<S>, b: &FusionParams<S>) -> Ordering {
    a.k().cmp(&b.k())
        .then_with(|| cmp_scalar(&b.alpha(), &a.alpha()))
        .then_with(|| {
            a.weights()
                .iter()
                .zip(b.weights())
                .map(|(x, y)| cmp_scalar(x, y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub seed: u64,
    pub fold_of: BTreeMap<String, usize>,
}

/// Sorts topics, shuffles them with a seeded ChaCha8 generator, and deals
/// them round-robin into `n_folds` folds (sizes differ by at most one).
pub fn assign_folds<T: AsRef<str>>(topic_ids: &[T], n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    let mut topics: Vec<&str> = topic_ids.iter().map(AsRef::as_ref).collect();
    topics.sort_unstable();
    topics.dedup();
    if n_folds == 0 || topics.len() < n_folds {
        return Err(Error::InvalidParams(format!(
            "cannot split {} topics into {n_folds} folds",
            topics.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    topics.shuffle(&mut rng);
    let fold_of = topics
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i % n_folds))
        .collect();
    Ok(FoldAssignment { n_folds, seed, fold_of })
}

impl FoldAssignment {
    /// Topics held out in fold `f`, sorted.
    pub fn test_topics(&self, f: usize) -> Vec<String> {
        self.fold_of
            .iter()
            .filter(|(_, &g)| g == f)
            .map(|(t, _)| t.clone())
            .collect()
    }

    /// Topics used to tune fold `f`, sorted.
    pub fn train_topics(&self, f: usize) -> Vec<String> {
        self.fold_of
            .iter()
            .filter(|(_, &g)| g != f)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.fold_of.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridChoice<S> {
    pub params: FusionParams<S>,
    pub grid_index: usize,
    pub mean_ap: S,
}

/// Per-topic AP for one parameter setting. Topics whose AP is undefined (no
/// relevant documents) are simply absent.
pub type TopicScores<S> = BTreeMap<String, S>;

fn mean_over<S: Scalar>(scores: &TopicScores<S>, topics: &[String]) -> S {
    let mut sum = S::zero();
    let mut n = 0;
    for t in topics {
        if let Some(&s) = scores.get(t) {
            sum += s;
            n += 1;
        }
    }
    if n == 0 {
        S::zero()
    } else {
        sum / S::from_count(n)
    }
}

fn select<S: Scalar>(points: &[FusionParams<S>], means: Vec<S>) -> GridChoice<S> {
    let mut best = 0;
    for i in 1..points.len() {
        let better = match cmp_scalar(&means[i], &means[best]) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => tie_break(&points[i], &points[best]) == Ordering::Less,
        };
        if better {
            best = i;
        }
    }
    GridChoice {
        params: points[best].clone(),
        grid_index: best,
        mean_ap: means[best],
    }
}

/// Returns the grid point with the highest mean AP over `train_topics`.
/// Grid points are evaluated in parallel and reduced in grid order.
pub fn grid_search<S, F>(grid: &Grid<S>, train_topics: &[String], eval_fn: F) -> Result<GridChoice<S>>
where
    S: Scalar,
    F: Fn(&FusionParams<S>) -> Result<TopicScores<S>> + Sync,
{
    if train_topics.is_empty() {
        return Err(Error::InvalidParams("grid search needs at least one training topic".into()));
    }
    grid.validate()?;
    search_points(&grid.points(), train_topics, |_, p| eval_fn(p))
}

fn search_points<S, F>(points: &[FusionParams<S>], train_topics: &[String], eval_fn: F) -> Result<GridChoice<S>>
where
    S: Scalar,
    F: Fn(usize, &FusionParams<S>) -> Result<TopicScores<S>> + Sync,
{
    if train_topics.is_empty() {
        return Err(Error::InvalidParams("grid search needs at least one training topic".into()));
    }
    let means = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| eval_fn(i, p).map(|scores| mean_over(&scores, train_topics)))
        .collect::<Result<Vec<S>>>()?;
    Ok(select(points, means))
}

/// Anything that can rank every topic under given fusion parameters and
/// report per-topic AP.
pub trait CvPipeline<S>: Sync {
    fn topic_ids(&self) -> Vec<String>;

    fn per_topic_ap(&self, params: &FusionParams<S>) -> Result<TopicScores<S>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldOutcome<S> {
    pub fold: usize,
    pub choice: GridChoice<S>,
    pub test_topics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOutcome<S> {
    pub folds: Vec<FoldOutcome<S>>,
    /// Held-out AP per topic (absent when undefined).
    pub held_out: TopicScores<S>,
    pub mean_ap: S,
}

impl<S: Scalar> CvOutcome<S> {
    pub fn params_for(&self, topic_id: &str) -> Option<&FusionParams<S>> {
        self.folds
            .iter()
            .find(|f| f.test_topics.iter().any(|t| t == topic_id))
            .map(|f| &f.choice.params)
    }
}

/// For each fold, tunes on the other folds' topics and applies the chosen
/// parameters to the held-out topics. Per-grid-point evaluations are shared
/// across folds; selection for fold `f` reads only training-topic scores.
pub fn cross_validate<S, P>(assignment: &FoldAssignment, grid: &Grid<S>, pipeline: &P) -> Result<CvOutcome<S>>
where
    S: Scalar,
    P: CvPipeline<S> + ?Sized,
{
    grid.validate()?;
    let points = grid.points();
    let memo: Vec<OnceLock<TopicScores<S>>> = (0..points.len()).map(|_| OnceLock::new()).collect();

    let mut folds = Vec::with_capacity(assignment.n_folds);
    let mut held_out = TopicScores::new();
    for f in 0..assignment.n_folds {
        let train = assignment.train_topics(f);
        let test = assignment.test_topics(f);
        let eval = |i: usize, p: &FusionParams<S>| -> Result<TopicScores<S>> {
            let slot = &memo[i];
            if let Some(s) = slot.get() {
                return Ok(s.clone());
            }
            let scores = pipeline.per_topic_ap(p)?;
            Ok(slot.get_or_init(|| scores).clone())
        };
        let choice = search_points(&points, &train, eval).map_err(|e| Error::Fold {
            fold: f,
            source: Box::new(e),
        })?;
        let scores = memo[choice.grid_index].get().expect("evaluated during search");
        for t in &test {
            if let Some(&s) = scores.get(t) {
                held_out.insert(t.clone(), s);
            }
        }
        folds.push(FoldOutcome {
            fold: f,
            choice,
            test_topics: test,
        });
    }
    let all: Vec<String> = held_out.keys().cloned().collect();
    let mean_ap = mean_over(&held_out, &all);
    Ok(CvOutcome {
        folds,
        held_out,
        mean_ap,
    })
}

/// Topics of a fold assignment, for callers that need the set.
pub fn assigned_topics(assignment: &FoldAssignment) -> BTreeSet<&str> {
    assignment.fold_of.keys().map(String::as_str).collect()
}
