//! Intervals and coalesced interval sets over an exact ordered scalar.
//!
//! Everything here is generic over [`Scalar`]; the rest of the crate uses the
//! [`Time`](crate::Time) alias (arbitrary precision rationals).

use std::cmp::Ordering;
use std::fmt;

use num_traits::Zero;

/// Exact, totally ordered time values.
///
/// Floating point types do not qualify: ruler alignment needs exact equality.
pub trait Scalar: Clone + Ord + fmt::Debug + Zero {
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn negated(&self) -> Self;
}

impl<T> Scalar for T
where
    T: Clone + Ord + fmt::Debug + Zero,
    for<'a> &'a T: std::ops::Add<&'a T, Output = T>
        + std::ops::Sub<&'a T, Output = T>
        + std::ops::Neg<Output = T>,
{
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn negated(&self) -> Self {
        -self
    }
}

/// A nonempty bounded interval `⟨lo, hi⟩`.
///
/// Punctual intervals are always closed; empty intervals cannot be built.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval<T> {
    lo: T,
    hi: T,
    lo_closed: bool,
    hi_closed: bool,
}

impl<T: Scalar> Interval<T> {
    /// Returns `None` when the described set of points is empty.
    pub fn new(lo: T, lo_closed: bool, hi: T, hi_closed: bool) -> Option<Self> {
        match lo.cmp(&hi) {
            Ordering::Less => Some(Interval { lo, hi, lo_closed, hi_closed }),
            Ordering::Equal if lo_closed && hi_closed => {
                Some(Interval { lo, hi, lo_closed, hi_closed })
            }
            _ => None,
        }
    }

    /// `[lo, hi]`; panics if `lo > hi`.
    pub fn closed(lo: T, hi: T) -> Self {
        Self::new(lo, true, hi, true).expect("closed interval with lo > hi")
    }

    pub fn point(t: T) -> Self {
        Interval { lo: t.clone(), hi: t, lo_closed: true, hi_closed: true }
    }

    pub fn lo(&self) -> &T {
        &self.lo
    }
    pub fn hi(&self) -> &T {
        &self.hi
    }
    pub fn lo_closed(&self) -> bool {
        self.lo_closed
    }
    pub fn hi_closed(&self) -> bool {
        self.hi_closed
    }
    pub fn is_punctual(&self) -> bool {
        self.lo == self.hi
    }
    pub fn len(&self) -> T {
        self.hi.minus(&self.lo)
    }

    pub fn contains(&self, t: &T) -> bool {
        let above = match self.lo.cmp(t) {
            Ordering::Less => true,
            Ordering::Equal => self.lo_closed,
            Ordering::Greater => false,
        };
        let below = match t.cmp(&self.hi) {
            Ordering::Less => true,
            Ordering::Equal => self.hi_closed,
            Ordering::Greater => false,
        };
        above && below
    }

    /// True iff every point of `other` lies in `self`.
    pub fn contains_interval(&self, other: &Interval<T>) -> bool {
        let left_ok = match self.lo.cmp(&other.lo) {
            Ordering::Less => true,
            Ordering::Equal => self.lo_closed || !other.lo_closed,
            Ordering::Greater => false,
        };
        let right_ok = match other.hi.cmp(&self.hi) {
            Ordering::Less => true,
            Ordering::Equal => self.hi_closed || !other.hi_closed,
            Ordering::Greater => false,
        };
        left_ok && right_ok
    }

    pub fn intersect(&self, other: &Interval<T>) -> Option<Interval<T>> {
        let (lo, lo_closed) = match self.lo.cmp(&other.lo) {
            Ordering::Less => (other.lo.clone(), other.lo_closed),
            Ordering::Greater => (self.lo.clone(), self.lo_closed),
            Ordering::Equal => (self.lo.clone(), self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&other.hi) {
            Ordering::Less => (self.hi.clone(), self.hi_closed),
            Ordering::Greater => (other.hi.clone(), other.hi_closed),
            Ordering::Equal => (self.hi.clone(), self.hi_closed && other.hi_closed),
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }

    pub fn shift(&self, delta: &T) -> Interval<T> {
        Interval {
            lo: self.lo.plus(delta),
            hi: self.hi.plus(delta),
            lo_closed: self.lo_closed,
            hi_closed: self.hi_closed,
        }
    }

    /// `{−t | t ∈ self}`.
    pub fn reflect(&self) -> Interval<T> {
        Interval {
            lo: self.hi.negated(),
            hi: self.lo.negated(),
            lo_closed: self.hi_closed,
            hi_closed: self.lo_closed,
        }
    }

    /// `{s + w | s ∈ self, w ∈ other}`.
    pub fn sum(&self, other: &Interval<T>) -> Interval<T> {
        Interval {
            lo: self.lo.plus(&other.lo),
            hi: self.hi.plus(&other.hi),
            lo_closed: self.lo_closed && other.lo_closed,
            hi_closed: self.hi_closed && other.hi_closed,
        }
    }

    /// Smallest interval covering both.
    pub fn hull(&self, other: &Interval<T>) -> Interval<T> {
        let (lo, lo_closed) = match self.lo.cmp(&other.lo) {
            Ordering::Less => (self.lo.clone(), self.lo_closed),
            Ordering::Greater => (other.lo.clone(), other.lo_closed),
            Ordering::Equal => (self.lo.clone(), self.lo_closed || other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&other.hi) {
            Ordering::Greater => (self.hi.clone(), self.hi_closed),
            Ordering::Less => (other.hi.clone(), other.hi_closed),
            Ordering::Equal => (self.hi.clone(), self.hi_closed || other.hi_closed),
        };
        Interval { lo, hi, lo_closed, hi_closed }
    }

    /// Grows the interval by `by` on both sides, closing both ends.
    pub fn widen(&self, by: &T) -> Interval<T> {
        Interval::closed(self.lo.minus(by), self.hi.plus(by))
    }

    /// Whether `self ∪ other` is a single interval (overlapping or adjacent).
    fn touches(&self, other: &Interval<T>) -> bool {
        let (a, b) = if self.lo <= other.lo { (self, other) } else { (other, self) };
        match b.lo.cmp(&a.hi) {
            Ordering::Less => true,
            Ordering::Equal => a.hi_closed || b.lo_closed,
            Ordering::Greater => false,
        }
    }

    fn start_order(&self, other: &Interval<T>) -> Ordering {
        self.lo.cmp(&other.lo).then_with(|| other.lo_closed.cmp(&self.lo_closed))
    }
}

impl<T: fmt::Display> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Sorted, pairwise disjoint, fully coalesced intervals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntervalSet<T> {
    intervals: Vec<Interval<T>>,
}

impl<T> Default for IntervalSet<T> {
    fn default() -> Self {
        IntervalSet { intervals: Vec::new() }
    }
}

impl<T: Scalar> IntervalSet<T> {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(i: Interval<T>) -> Self {
        IntervalSet { intervals: vec![i] }
    }

    /// Canonical form of an arbitrary collection of fragments.
    pub fn from_fragments<I: IntoIterator<Item = Interval<T>>>(fragments: I) -> Self {
        let mut v: Vec<Interval<T>> = fragments.into_iter().collect();
        v.sort_by(|a, b| a.start_order(b));
        let mut out: Vec<Interval<T>> = Vec::with_capacity(v.len());
        for i in v {
            match out.last_mut() {
                Some(last) if last.touches(&i) => {
                    match i.hi.cmp(&last.hi) {
                        Ordering::Greater => {
                            last.hi = i.hi;
                            last.hi_closed = i.hi_closed;
                        }
                        Ordering::Equal => last.hi_closed |= i.hi_closed,
                        Ordering::Less => {}
                    }
                }
                _ => out.push(i),
            }
        }
        IntervalSet { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    pub fn into_intervals(self) -> Vec<Interval<T>> {
        self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, t: &T) -> bool {
        let idx = self.intervals.partition_point(|i| i.lo <= *t);
        idx > 0 && self.intervals[idx - 1].contains(t)
    }

    /// True iff the whole interval is covered.
    pub fn covers(&self, w: &Interval<T>) -> bool {
        self.intervals.iter().any(|i| i.contains_interval(w))
    }

    pub fn hull(&self) -> Option<Interval<T>> {
        let first = self.intervals.first()?;
        let last = self.intervals.last()?;
        Some(first.hull(last))
    }

    pub fn union(&self, other: &IntervalSet<T>) -> IntervalSet<T> {
        if other.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return other.clone();
        }
        IntervalSet::from_fragments(self.intervals.iter().chain(other.intervals.iter()).cloned())
    }

    pub fn intersection(&self, other: &IntervalSet<T>) -> IntervalSet<T> {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.intervals, &other.intervals);
        while i < a.len() && j < b.len() {
            if let Some(x) = a[i].intersect(&b[j]) {
                out.push(x);
            }
            let a_first = match a[i].hi.cmp(&b[j].hi) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => !a[i].hi_closed || b[j].hi_closed,
            };
            if a_first {
                i += 1;
            } else {
                j += 1;
            }
        }
        // Pieces of disjoint inputs are disjoint but may be adjacent.
        IntervalSet::from_fragments(out)
    }

    pub fn difference(&self, other: &IntervalSet<T>) -> IntervalSet<T> {
        if other.is_empty() || self.is_empty() {
            return self.clone();
        }
        let mut out = Vec::new();
        let b = &other.intervals;
        let mut j = 0;
        for a in &self.intervals {
            // skip subtrahends entirely before a
            while j < b.len() && b[j].hi < a.lo {
                j += 1;
            }
            let mut cur = Some(a.clone());
            let mut k = j;
            while let Some(c) = cur.take() {
                if k >= b.len() || b[k].lo > c.hi {
                    cur = Some(c);
                    break;
                }
                if c.intersect(&b[k]).is_none() {
                    k += 1;
                    cur = Some(c);
                    continue;
                }
                if let Some(before) =
                    Interval::new(c.lo.clone(), c.lo_closed, b[k].lo.clone(), !b[k].lo_closed)
                {
                    out.push(before);
                }
                cur = Interval::new(b[k].hi.clone(), !b[k].hi_closed, c.hi.clone(), c.hi_closed);
                k += 1;
            }
            if let Some(c) = cur {
                out.push(c);
            }
        }
        IntervalSet { intervals: out }
    }

    /// Restriction to a single interval.
    pub fn restrict(&self, w: &Interval<T>) -> IntervalSet<T> {
        let start = self.intervals.partition_point(|i| i.hi < w.lo);
        let mut out = Vec::new();
        for i in &self.intervals[start..] {
            if i.lo > w.hi {
                break;
            }
            if let Some(x) = i.intersect(w) {
                out.push(x);
            }
        }
        IntervalSet { intervals: out }
    }

    pub fn shift(&self, delta: &T) -> IntervalSet<T> {
        IntervalSet { intervals: self.intervals.iter().map(|i| i.shift(delta)).collect() }
    }

    /// `{t | ∃t1 ∈ self, t − t1 ∈ w}`.
    pub fn minkowski_sum(&self, w: &Interval<T>) -> IntervalSet<T> {
        IntervalSet::from_fragments(self.intervals.iter().map(|i| i.sum(w)))
    }

    pub fn is_subset(&self, other: &IntervalSet<T>) -> bool {
        self.intervals.iter().all(|i| other.covers(i))
    }
}

impl<T: fmt::Display> fmt::Display for IntervalSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.intervals.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Free-function spellings of the set algebra.
pub fn intersect<T: Scalar>(a: &Interval<T>, b: &Interval<T>) -> Option<Interval<T>> {
    a.intersect(b)
}

pub fn set_union<T: Scalar>(a: &IntervalSet<T>, b: &IntervalSet<T>) -> IntervalSet<T> {
    a.union(b)
}

pub fn set_difference<T: Scalar>(a: &IntervalSet<T>, b: &IntervalSet<T>) -> IntervalSet<T> {
    a.difference(b)
}

pub fn set_intersection<T: Scalar>(a: &IntervalSet<T>, b: &IntervalSet<T>) -> IntervalSet<T> {
    a.intersection(b)
}

pub fn shift<T: Scalar>(s: &IntervalSet<T>, delta: &T) -> IntervalSet<T> {
    s.shift(delta)
}

pub fn minkowski_sum<T: Scalar>(s: &IntervalSet<T>, w: &Interval<T>) -> IntervalSet<T> {
    s.minkowski_sum(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: i64, lc: bool, hi: i64, hc: bool) -> Interval<i64> {
        Interval::new(lo, lc, hi, hc).unwrap()
    }

    #[test]
    fn empty_intervals_are_unrepresentable() {
        assert!(Interval::new(1, true, 1, false).is_none());
        assert!(Interval::new(2, true, 1, true).is_none());
        assert!(Interval::new(1, true, 1, true).is_some());
    }

    #[test]
    fn difference_splits_and_keeps_borders() {
        let a = IntervalSet::single(iv(0, true, 10, true));
        let b = IntervalSet::from_fragments([iv(0, true, 1, false), iv(3, false, 4, true)]);
        let d = a.difference(&b);
        assert_eq!(d.intervals(), &[iv(1, true, 3, true), iv(4, false, 10, true)]);
    }

    #[test]
    fn intersection_of_adjacent_pieces_coalesces() {
        let a = IntervalSet::single(iv(0, true, 4, true));
        let b = IntervalSet::from_fragments([iv(1, true, 2, false), iv(2, true, 3, true)]);
        assert_eq!(a.intersection(&b).intervals(), &[iv(1, true, 3, true)]);
    }
}
