//! Prediction sets: finite class subsets and finite unions of real intervals.

use alloc::vec::Vec;
use core::fmt;

use crate::data::Label;
use crate::error::{Error, Result};

/// Sorted, duplicate-free subset of the class indices `0..classes`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassSet {
    members: Vec<usize>,
    classes: usize,
}

impl ClassSet {
    pub fn new(classes: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if let Some(&index) = members.iter().find(|&&k| k >= classes) {
            return Err(Error::ClassOutOfRange { index, classes });
        }
        Ok(Self { members, classes })
    }

    pub fn empty(classes: usize) -> Self {
        Self { members: Vec::new(), classes }
    }

    pub fn full(classes: usize) -> Self {
        Self { members: (0..classes).collect(), classes }
    }

    pub fn singleton(classes: usize, class: usize) -> Result<Self> {
        Self::new(classes, [class])
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.members.binary_search(&class).is_ok()
    }

    pub fn is_subset(&self, other: &ClassSet) -> bool {
        self.members.iter().all(|&k| other.contains(k))
    }
}

/// One real interval with explicit endpoint topology. Infinite endpoints are
/// always open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub lower_open: bool,
    pub upper_open: bool,
}

impl Interval {
    pub fn new(lower: f64, upper: f64, lower_open: bool, upper_open: bool) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::NonFinite("interval endpoint"));
        }
        let iv = Self {
            lower,
            upper,
            lower_open: lower_open || lower.is_infinite(),
            upper_open: upper_open || upper.is_infinite(),
        };
        if iv.is_degenerate() {
            return Err(Error::MalformedSet("empty interval"));
        }
        Ok(iv)
    }

    pub fn closed(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, false, false)
    }

    pub fn open(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, true, true)
    }

    /// `(c, ∞)`
    pub fn above(c: f64) -> Self {
        Self { lower: c, upper: f64::INFINITY, lower_open: true, upper_open: true }
    }

    /// `(-∞, c)`
    pub fn below(c: f64) -> Self {
        Self { lower: f64::NEG_INFINITY, upper: c, lower_open: true, upper_open: true }
    }

    fn is_degenerate(&self) -> bool {
        self.lower > self.upper
            || (self.lower == self.upper && (self.lower_open || self.upper_open))
    }

    pub fn contains(&self, y: f64) -> bool {
        let above = if self.lower_open { y > self.lower } else { y >= self.lower };
        let below = if self.upper_open { y < self.upper } else { y <= self.upper };
        above && below
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// `self ⊆ other`
    pub fn is_subset(&self, other: &Interval) -> bool {
        let lower_ok = self.lower > other.lower
            || (self.lower == other.lower && (self.lower_open || !other.lower_open));
        let upper_ok = self.upper < other.upper
            || (self.upper == other.upper && (self.upper_open || !other.upper_open));
        lower_ok && upper_ok
    }

    /// True when `self` lies entirely to the left of `next` with a gap or a
    /// shared endpoint that neither side contains.
    fn strictly_before(&self, next: &Interval) -> bool {
        self.upper < next.lower || (self.upper == next.lower && self.upper_open && next.lower_open)
    }
}

/// Sorted, pairwise-disjoint, non-mergeable list of intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            if iv.is_degenerate() {
                return Err(Error::MalformedSet("empty interval"));
            }
        }
        for pair in intervals.windows(2) {
            if !pair[0].strictly_before(&pair[1]) {
                return Err(Error::MalformedSet("intervals overlap, touch, or are unsorted"));
            }
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    pub fn single(interval: Interval) -> Self {
        Self { intervals: alloc::vec![interval] }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(y))
    }

    pub fn infimum(&self) -> Option<(f64, bool)> {
        self.intervals.first().map(|iv| (iv.lower, iv.lower_open))
    }

    pub fn supremum(&self) -> Option<(f64, bool)> {
        self.intervals.last().map(|iv| (iv.upper, iv.upper_open))
    }

    /// Every interval of `self` sits inside some interval of `other`.
    pub fn is_subset(&self, other: &IntervalUnion) -> bool {
        self.intervals
            .iter()
            .all(|iv| other.intervals.iter().any(|o| iv.is_subset(o)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSet {
    Classes(ClassSet),
    Intervals(IntervalUnion),
}

impl PredictionSet {
    pub fn interval(interval: Interval) -> Self {
        Self::Intervals(IntervalUnion::single(interval))
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Self::Classes(c) => c.is_empty(),
            Self::Intervals(u) => u.is_empty(),
        }
    }

    /// Membership of `y`, respecting open and closed endpoints.
    pub fn contains(&self, y: Label) -> Result<bool> {
        match (self, y) {
            (Self::Classes(c), Label::Class(k)) => Ok(c.contains(k)),
            (Self::Intervals(u), Label::Real(v)) => Ok(u.contains(v)),
            _ => Err(Error::TaskMismatch),
        }
    }

    /// Cardinality for class sets, total length for interval unions.
    pub fn measure(&self) -> SetMeasure {
        match self {
            Self::Classes(c) => SetMeasure(c.len() as f64),
            Self::Intervals(u) => SetMeasure(u.intervals.iter().map(Interval::length).sum()),
        }
    }

    /// `self ⊆ other`. The empty set is a subset of anything; otherwise the
    /// kinds must agree.
    pub fn is_subset(&self, other: &PredictionSet) -> bool {
        match (self, other) {
            _ if self.is_empty() => true,
            (Self::Classes(a), Self::Classes(b)) => a.is_subset(b),
            (Self::Intervals(a), Self::Intervals(b)) => a.is_subset(b),
            _ => false,
        }
    }
}

/// Membership test `y ∈ set`.
pub fn set_contains(set: &PredictionSet, y: Label) -> Result<bool> {
    set.contains(y)
}

pub fn set_measure(set: &PredictionSet) -> SetMeasure {
    set.measure()
}

/// Size of a prediction set: a count for class sets, a Lebesgue length
/// (possibly infinite) for interval unions.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SetMeasure(pub f64);

impl SetMeasure {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 / |C|`, with unbounded sets contributing zero.
    pub fn reciprocal(self) -> f64 {
        if self.0.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lower_open { '(' } else { '[' };
        let r = if self.upper_open { ')' } else { ']' };
        write!(f, "{l}{}, {}{r}", self.lower, self.upper)
    }
}

impl fmt::Display for PredictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Classes(c) => {
                f.write_str("{")?;
                for (i, k) in c.members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{k}")?;
                }
                f.write_str("}")
            }
            Self::Intervals(u) if u.is_empty() => f.write_str("{}"),
            Self::Intervals(u) => {
                for (i, iv) in u.intervals.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" U ")?;
                    }
                    write!(f, "{iv}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn open_endpoint_excludes() {
        let s = PredictionSet::interval(Interval::above(2.0));
        assert!(!s.contains(Label::Real(2.0)).unwrap());
        assert!(s.contains(Label::Real(2.5)).unwrap());
    }

    #[test]
    fn closed_endpoint_includes() {
        let s = PredictionSet::interval(Interval::closed(0.5, 2.5).unwrap());
        assert!(s.contains(Label::Real(0.5)).unwrap());
        assert!(s.contains(Label::Real(2.5)).unwrap());
        assert_eq!(s.measure().value(), 2.0);
    }

    #[test]
    fn class_membership_and_size() {
        // {1,3} and {1,2} in one-based notation.
        let s = PredictionSet::Classes(ClassSet::new(3, [0, 2]).unwrap());
        assert!(s.contains(Label::Class(2)).unwrap());
        assert!(!s.contains(Label::Class(1)).unwrap());
        let t = PredictionSet::Classes(ClassSet::new(3, [0, 1]).unwrap());
        assert_eq!(t.measure().value(), 2.0);
    }

    #[test]
    fn empty_sets_measure_zero() {
        assert_eq!(PredictionSet::Classes(ClassSet::empty(4)).measure().value(), 0.0);
        assert_eq!(PredictionSet::Intervals(IntervalUnion::empty()).measure().value(), 0.0);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let s = PredictionSet::interval(Interval::above(0.0));
        assert_eq!(s.contains(Label::Class(1)), Err(Error::TaskMismatch));
        let c = PredictionSet::Classes(ClassSet::full(2));
        assert_eq!(c.contains(Label::Real(0.0)), Err(Error::TaskMismatch));
    }

    #[test]
    fn unbounded_measure_is_infinite() {
        let s = PredictionSet::interval(Interval::below(0.0));
        assert!(s.measure().value().is_infinite());
        assert_eq!(s.measure().reciprocal(), 0.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(ClassSet::new(3, [3]).is_err());
        assert!(Interval::open(1.0, 1.0).is_err());
        assert!(Interval::closed(2.0, 1.0).is_err());
        assert!(Interval::closed(1.0, 1.0).is_ok());
        let a = Interval::closed(0.0, 1.0).unwrap();
        let b = Interval::open(1.0, 2.0).unwrap();
        // [0,1] ∪ (1,2) is mergeable into [0,2).
        assert!(IntervalUnion::new(alloc::vec![a, b]).is_err());
        let c = Interval::open(0.0, 1.0).unwrap();
        assert!(IntervalUnion::new(alloc::vec![c, b]).is_ok());
        assert!(IntervalUnion::new(alloc::vec![b, c]).is_err());
    }

    /// Exact comparison on integer numerators over a common denominator.
    fn rational_contains(lo: i64, hi: i64, lo_open: bool, hi_open: bool, y: i64) -> bool {
        let above = if lo_open { y > lo } else { y >= lo };
        let below = if hi_open { y < hi } else { y <= hi };
        above && below
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn membership_matches_rational_comparison(
            lo in -50i64..50, len in 0i64..50, lo_open: bool, hi_open: bool, y in -120i64..120,
        ) {
            let hi = lo + len;
            prop_assume!(len > 0 || (!lo_open && !hi_open));
            let den = 8.0;
            let iv = Interval::new(lo as f64 / den, hi as f64 / den, lo_open, hi_open).unwrap();
            let set = PredictionSet::interval(iv);
            let got = set.contains(Label::Real(y as f64 / den)).unwrap();
            prop_assert_eq!(got, rational_contains(lo, hi, lo_open, hi_open, y));
        }
    }
}
