//! Scalar abstractions shared by the scoring, fusion, metric and tuning code.
//!
//! Everything that only needs field arithmetic and ordering (evidence fusion,
//! precision, average precision, grid selection) is written against
//! [`Scalar`], so it runs unchanged over `f32`, `f64` or an exact rational
//! such as [`Exact`]. Code that needs transcendental functions (BM25's IDF,
//! NDCG's log discount) asks for [`Real`] instead.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumAssignOps, ToPrimitive};

/// Exact rational scalar used by the arithmetic-only routines in tests and
/// for hand-checkable worked examples.
pub type Exact = Ratio<i64>;

pub trait Scalar:
    Num
    + NumAssignOps
    + Copy
    + PartialOrd
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts a count; panics only if the scalar cannot represent it.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    /// `num / den` for small integers, the way grid values are written.
    fn ratio(num: usize, den: usize) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(self) -> bool {
        self.to_f64().is_some_and(f64::is_finite)
    }
}

impl<T> Scalar for T where
    T: Num
        + NumAssignOps
        + Copy
        + PartialOrd
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Floating-point scalar.
pub trait Real: Scalar + Float {}

impl<T> Real for T where T: Scalar + Float {}

/// Total order used for sorting scores. Incomparable values (NaN) sort as equal;
/// callers validate finiteness before ranking.
pub(crate) fn cmp_scalar<S: PartialOrd>(a: &S, b: &S) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}
