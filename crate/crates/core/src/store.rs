//! Coalesced fact stores: finite interpretations keyed by ground atom.

use std::collections::btree_map::{self, BTreeMap};
use std::fmt;
use std::ops::Bound;
use std::sync::Arc;

use thiserror::Error;

use crate::syntax::{Fact, Symbol};
use crate::temporal::{Interval, IntervalSet, Scalar};
use crate::Time;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: Symbol,
    pub args: Arc<[Symbol]>,
}

impl GroundAtom {
    pub fn new(predicate: Symbol, args: Vec<Symbol>) -> Self {
        GroundAtom { predicate, args: args.into() }
    }

    pub fn parse_like(predicate: &str, args: &[&str]) -> Self {
        GroundAtom::new(Arc::from(predicate), args.iter().map(|a| Arc::from(*a)).collect())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "({})", self.args.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("predicate {predicate} used with arity {found}, first seen with arity {expected}")]
    Arity { predicate: String, expected: usize, found: usize },
}

/// Map from ground atom to the nonempty coalesced set of times it holds.
///
/// The map is ordered by predicate first, so it doubles as the predicate index.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FactStore<T = Time> {
    map: BTreeMap<GroundAtom, IntervalSet<T>>,
}

impl<T: Scalar> FactStore<T> {
    pub fn new() -> Self {
        FactStore { map: BTreeMap::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Number of ground atoms with content.
    pub fn atom_count(&self) -> usize {
        self.map.len()
    }

    /// Number of (atom, maximal interval) pairs.
    pub fn fact_count(&self) -> usize {
        self.map.values().map(IntervalSet::len).sum()
    }

    pub fn get(&self, a: &GroundAtom) -> Option<&IntervalSet<T>> {
        self.map.get(a)
    }

    pub fn intervals_of(&self, a: &GroundAtom) -> IntervalSet<T> {
        self.map.get(a).cloned().unwrap_or_default()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, GroundAtom, IntervalSet<T>> {
        self.map.iter()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.map.keys()
    }

    /// Ground atoms of one predicate.
    pub fn atoms_of<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = &'a GroundAtom> + 'a {
        let start = GroundAtom { predicate: Arc::from(predicate), args: Arc::from(Vec::new()) };
        self.map
            .range((Bound::Included(start), Bound::Unbounded))
            .map(|(a, _)| a)
            .take_while(move |a| &*a.predicate == predicate)
    }

    /// Checks `atom` against the arities already present.
    pub fn check_arity(&self, atom: &GroundAtom) -> Result<(), StoreError> {
        if let Some(other) = self.atoms_of(&atom.predicate).next() {
            if other.arity() != atom.arity() {
                return Err(StoreError::Arity {
                    predicate: atom.predicate.to_string(),
                    expected: other.arity(),
                    found: atom.arity(),
                });
            }
        }
        Ok(())
    }

    /// Adds content; returns whether any time point was newly covered.
    pub fn insert(&mut self, atom: GroundAtom, interval: Interval<T>) -> Result<bool, StoreError> {
        self.check_arity(&atom)?;
        Ok(self.insert_unchecked(atom, IntervalSet::single(interval)))
    }

    pub fn insert_set(&mut self, atom: GroundAtom, set: IntervalSet<T>) -> Result<bool, StoreError> {
        self.check_arity(&atom)?;
        Ok(self.insert_unchecked(atom, set))
    }

    fn insert_unchecked(&mut self, atom: GroundAtom, set: IntervalSet<T>) -> bool {
        if set.is_empty() {
            return false;
        }
        match self.map.entry(atom) {
            btree_map::Entry::Vacant(v) => {
                v.insert(set);
                true
            }
            btree_map::Entry::Occupied(mut o) => {
                if set.is_subset(o.get()) {
                    false
                } else {
                    let u = o.get().union(&set);
                    o.insert(u);
                    true
                }
            }
        }
    }

    /// Replaces an atom's content; an empty set removes the atom.
    pub fn set(&mut self, atom: GroundAtom, set: IntervalSet<T>) {
        if set.is_empty() {
            self.map.remove(&atom);
        } else {
            self.map.insert(atom, set);
        }
    }

    pub fn remove_atom(&mut self, atom: &GroundAtom) {
        self.map.remove(atom);
    }

    pub fn union_with(&mut self, other: &FactStore<T>) {
        for (a, s) in &other.map {
            self.insert_unchecked(a.clone(), s.clone());
        }
    }

    pub fn subtract(&mut self, other: &FactStore<T>) {
        for (a, s) in &other.map {
            if let Some(mine) = self.map.get(a) {
                let d = mine.difference(s);
                self.set(a.clone(), d);
            }
        }
    }

    pub fn union(&self, other: &FactStore<T>) -> FactStore<T> {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn difference(&self, other: &FactStore<T>) -> FactStore<T> {
        let mut out = self.clone();
        out.subtract(other);
        out
    }

    pub fn intersection(&self, other: &FactStore<T>) -> FactStore<T> {
        let (small, big) = if self.map.len() <= other.map.len() { (self, other) } else { (other, self) };
        let mut out = FactStore::new();
        for (a, s) in &small.map {
            if let Some(t) = big.map.get(a) {
                out.set(a.clone(), s.intersection(t));
            }
        }
        out
    }

    pub fn project(&self, w: &Interval<T>) -> FactStore<T> {
        let mut out = FactStore::new();
        for (a, s) in &self.map {
            out.set(a.clone(), s.restrict(w));
        }
        out
    }

    pub fn shift(&self, delta: &T) -> FactStore<T> {
        FactStore { map: self.map.iter().map(|(a, s)| (a.clone(), s.shift(delta))).collect() }
    }

    /// Whether shifting `self` by `delta` yields exactly `other`.
    pub fn is_shift(&self, other: &FactStore<T>, delta: &T) -> bool {
        self.map.len() == other.map.len()
            && self.map.iter().zip(other.map.iter()).all(|((a, s), (b, t))| a == b && s.shift(delta) == *t)
    }

    pub fn is_subset(&self, other: &FactStore<T>) -> bool {
        self.map.iter().all(|(a, s)| other.map.get(a).is_some_and(|t| s.is_subset(t)))
    }

    /// Every endpoint mentioned in the store.
    pub fn endpoints(&self) -> impl Iterator<Item = &T> {
        self.map.values().flat_map(|s| s.intervals().iter().flat_map(|i| [i.lo(), i.hi()]))
    }

    /// Least and greatest endpoint over all content.
    pub fn span(&self) -> Option<(T, T)> {
        let mut lo: Option<&T> = None;
        let mut hi: Option<&T> = None;
        for s in self.map.values() {
            if let Some(h) = s.hull() {
                if lo.is_none_or(|l| h.lo() < l) {
                    lo = Some(s.intervals()[0].lo());
                }
                if hi.is_none_or(|x| h.hi() > x) {
                    hi = Some(s.intervals()[s.len() - 1].hi());
                }
            }
        }
        Some((lo?.clone(), hi?.clone()))
    }

    pub fn constants(&self) -> std::collections::BTreeSet<Symbol> {
        self.map.keys().flat_map(|a| a.args.iter().cloned()).collect()
    }
}

impl FactStore<Time> {
    pub fn from_facts<I: IntoIterator<Item = Fact>>(facts: I) -> Result<Self, StoreError> {
        let mut s = FactStore::new();
        for f in facts {
            s.insert(f.atom, f.interval)?;
        }
        Ok(s)
    }

    pub fn insert_fact(&mut self, f: Fact) -> Result<bool, StoreError> {
        self.insert(f.atom, f.interval)
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.map
            .iter()
            .flat_map(|(a, s)| s.intervals().iter().map(move |i| Fact::new(a.clone(), i.clone())))
    }

    pub fn satisfies(&self, f: &Fact) -> bool {
        self.map.get(&f.atom).is_some_and(|s| s.covers(&f.interval))
    }
}

impl<T: Scalar + fmt::Display> fmt::Display for FactStore<T> {
    /// Dataset format: one fact per line, atoms sorted, intervals by start.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, s) in &self.map {
            for i in s.intervals() {
                writeln!(f, "{a}@{i}")?;
            }
        }
        Ok(())
    }
}

pub fn insert_fact(s: &mut FactStore, f: Fact) -> Result<bool, StoreError> {
    s.insert_fact(f)
}

pub fn store_union<T: Scalar>(a: &FactStore<T>, b: &FactStore<T>) -> FactStore<T> {
    a.union(b)
}

pub fn store_difference<T: Scalar>(a: &FactStore<T>, b: &FactStore<T>) -> FactStore<T> {
    a.difference(b)
}

pub fn store_intersection<T: Scalar>(a: &FactStore<T>, b: &FactStore<T>) -> FactStore<T> {
    a.intersection(b)
}

pub fn project<T: Scalar>(s: &FactStore<T>, w: &Interval<T>) -> FactStore<T> {
    s.project(w)
}

pub fn is_shift<T: Scalar>(a: &FactStore<T>, b: &FactStore<T>, delta: &T) -> bool {
    a.is_shift(b, delta)
}

pub fn satisfies(s: &FactStore, f: &Fact) -> bool {
    s.satisfies(f)
}
