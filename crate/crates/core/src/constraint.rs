//! Informativeness constraints: monotone families of admissible prediction
//! sets, together with the score level at which a conformal set stops being
//! admissible.

use crate::conformal::NonconformityScore;
use crate::error::{Error, Result};
use crate::set::PredictionSet;

/// Every variant is closed under taking subsets and admits the empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InformativeConstraint {
    /// Intervals whose infimum is strictly positive.
    PositiveInterval,
    /// Intervals whose infimum is strictly above `c`.
    LowerBoundedInterval(f64),
    /// Class sets with at most `k0` members.
    MaxSize(usize),
    /// Subsets of `{y0}`.
    Singleton(usize),
    /// Subsets of `(-∞, c_l)` or of `(c_u, ∞)`.
    TargetHalfLines { c_l: f64, c_u: f64 },
    /// Subsets of `(c0, ∞)`.
    HalfLine(f64),
}

impl InformativeConstraint {
    pub fn contains(&self, set: &PredictionSet) -> bool {
        if set.is_empty() {
            return true;
        }
        match (self, set) {
            (Self::PositiveInterval, PredictionSet::Intervals(u)) => infimum_above(u, 0.0),
            (Self::LowerBoundedInterval(c), PredictionSet::Intervals(u)) => infimum_above(u, *c),
            (Self::HalfLine(c0), PredictionSet::Intervals(u)) => {
                let (lo, open) = u.infimum().expect("nonempty");
                lo > *c0 || (lo == *c0 && open)
            }
            (Self::TargetHalfLines { c_l, c_u }, PredictionSet::Intervals(u)) => {
                let (lo, lo_open) = u.infimum().expect("nonempty");
                let (hi, hi_open) = u.supremum().expect("nonempty");
                let below = hi < *c_l || (hi == *c_l && hi_open);
                let above = lo > *c_u || (lo == *c_u && lo_open);
                below || above
            }
            (Self::MaxSize(k0), PredictionSet::Classes(c)) => c.len() <= *k0,
            (Self::Singleton(y0), PredictionSet::Classes(c)) => c.members() == [*y0],
            _ => false,
        }
    }

    /// Supremum of the score levels `ν` for which `{y : V(x, y) ≤ ν}` is
    /// informative; sets at smaller levels are informative, sets at `ν̃` and
    /// above are not.
    ///
    /// `Ok(None)` means no nonempty informative sublevel set exists, and
    /// `Ok(Some(+∞))` means every sublevel set is informative.
    pub fn breakpoint(&self, x: &[f64], score: &NonconformityScore) -> Result<Option<f64>> {
        let positive = |v: f64| if v > 0.0 { Some(v) } else { None };
        match (self, score) {
            (Self::PositiveInterval, NonconformityScore::AbsoluteResidual(mu)) => {
                Ok(positive(mu.predict(x)))
            }
            (
                Self::LowerBoundedInterval(c) | Self::HalfLine(c),
                NonconformityScore::AbsoluteResidual(mu),
            ) => Ok(positive(mu.predict(x) - c)),
            (Self::TargetHalfLines { c_l, c_u }, NonconformityScore::AbsoluteResidual(mu)) => {
                let m = mu.predict(x);
                Ok(positive((m - c_u).max(c_l - m)))
            }
            (Self::MaxSize(k0), NonconformityScore::OneMinusProb(model)) => {
                let mut probs = model.probabilities(x);
                if probs.len() <= *k0 {
                    return Ok(Some(f64::INFINITY));
                }
                probs.sort_unstable_by(|a, b| b.total_cmp(a));
                Ok(Some(1.0 - probs[*k0]))
            }
            (Self::Singleton(y0), NonconformityScore::OneMinusProb(model)) => {
                let probs = model.probabilities(x);
                let target = *probs
                    .get(*y0)
                    .ok_or(Error::ClassOutOfRange { index: *y0, classes: probs.len() })?;
                let runner_up = probs
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != *y0)
                    .map(|(_, &p)| p)
                    .fold(f64::NEG_INFINITY, f64::max);
                if runner_up == f64::NEG_INFINITY {
                    Ok(Some(f64::INFINITY))
                } else if target > runner_up {
                    Ok(Some(1.0 - runner_up))
                } else {
                    Ok(None)
                }
            }
            _ => Err(Error::UnsupportedBreakpoint),
        }
    }
}

fn infimum_above(u: &crate::set::IntervalUnion, c: f64) -> bool {
    let (lo, _) = u.infimum().expect("nonempty");
    lo > c
}
