//! Periodic materialisations: a finite core plus left/right periods whose
//! content tiles outward forever.

use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::eval::{immediate_consequence, LazyInterpretation};
use crate::store::{FactStore, GroundAtom};
use crate::syntax::{
    parse_dataset, parse_interval, rational_lcm, ruler_points_from_residues, ruler_residues, Fact, ParseError,
    Program,
};
use crate::temporal::{Interval, IntervalSet};
use crate::Time;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeriodicError {
    #[error("left period must have the form [a,b) with a < b, got {0}")]
    BadLeft(String),
    #[error("right period must have the form (c,d] with c < d, got {0}")]
    BadRight(String),
    #[error("no period at the {0} end of either input")]
    NoPeriod(End),
    #[error("periods at the {0} end have different lengths; extend first")]
    LengthMismatch(End),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Left,
    Right,
}

impl fmt::Display for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            End::Left => "left",
            End::Right => "right",
        })
    }
}

pub fn left_period(a: Time, b: Time) -> Interval<Time> {
    Interval::new(a, true, b, false).expect("left period with a < b")
}

pub fn right_period(c: Time, d: Time) -> Interval<Time> {
    Interval::new(c, false, d, true).expect("right period with c < d")
}

fn ceil_div(a: &Time, b: &Time) -> Time {
    (a / b).ceil()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicMaterialisation {
    core: FactStore,
    left: Option<Interval<Time>>,
    right: Option<Interval<Time>>,
}

impl PeriodicMaterialisation {
    /// Builds a materialisation, dropping core content outside the periods.
    pub fn new(
        core: FactStore,
        left: Option<Interval<Time>>,
        right: Option<Interval<Time>>,
    ) -> Result<Self, PeriodicError> {
        if let Some(l) = &left {
            if !l.lo_closed() || l.hi_closed() || l.is_punctual() {
                return Err(PeriodicError::BadLeft(l.to_string()));
            }
        }
        if let Some(r) = &right {
            if r.lo_closed() || !r.hi_closed() || r.is_punctual() {
                return Err(PeriodicError::BadRight(r.to_string()));
            }
        }
        let mut m = PeriodicMaterialisation { core, left, right };
        m.trim();
        Ok(m)
    }

    pub fn bounded(core: FactStore) -> Self {
        PeriodicMaterialisation { core, left: None, right: None }
    }

    fn trim(&mut self) {
        let Some((lo, hi)) = self.core.span() else { return };
        let a = self.left.as_ref().map(|l| l.lo().clone()).unwrap_or_else(|| lo.clone());
        let d = self.right.as_ref().map(|r| r.hi().clone()).unwrap_or_else(|| hi.clone());
        if a <= d {
            if lo < a || hi > d {
                self.core = self.core.project(&Interval::closed(a, d));
            }
        } else {
            self.core = FactStore::new();
        }
    }

    pub fn core(&self) -> &FactStore {
        &self.core
    }
    pub fn left(&self) -> Option<&Interval<Time>> {
        self.left.as_ref()
    }
    pub fn right(&self) -> Option<&Interval<Time>> {
        self.right.as_ref()
    }
    pub fn period(&self, end: End) -> Option<&Interval<Time>> {
        match end {
            End::Left => self.left.as_ref(),
            End::Right => self.right.as_ref(),
        }
    }

    pub fn into_core(self) -> FactStore {
        self.core
    }

    /// The unfolding of one atom restricted to `w`.
    pub fn atom_window(&self, atom: &GroundAtom, w: &Interval<Time>) -> IntervalSet<Time> {
        let Some(set) = self.core.get(atom) else { return IntervalSet::empty() };
        let mut frags: Vec<Interval<Time>> = set.restrict(w).into_intervals();
        if let Some(l) = &self.left {
            if w.lo() < l.lo() {
                let len = l.len();
                let content = set.restrict(l);
                if !content.is_empty() {
                    let first = ceil_div(&(l.lo() - w.hi()), &len).max(Time::one());
                    let last = ceil_div(&(l.hi() - w.lo()), &len) - Time::one();
                    let mut n = first;
                    while n <= last {
                        frags.extend(content.shift(&-(&n * &len)).restrict(w).into_intervals());
                        n += Time::one();
                    }
                }
            }
        }
        if let Some(r) = &self.right {
            if w.hi() > r.hi() {
                let len = r.len();
                let content = set.restrict(r);
                if !content.is_empty() {
                    let first = ceil_div(&(w.lo() - r.hi()), &len).max(Time::one());
                    let last = ceil_div(&(w.hi() - r.lo()), &len) - Time::one();
                    let mut n = first;
                    while n <= last {
                        frags.extend(content.shift(&(&n * &len)).restrict(w).into_intervals());
                        n += Time::one();
                    }
                }
            }
        }
        IntervalSet::from_fragments(frags)
    }

    /// The unfolding restricted to a bounded window.
    pub fn unfold_window(&self, w: &Interval<Time>) -> FactStore {
        let mut out = FactStore::new();
        for a in self.core.atoms() {
            out.set(a.clone(), self.atom_window(a, w));
        }
        out
    }

    /// Content of a period.
    pub fn period_content(&self, end: End) -> FactStore {
        match self.period(end) {
            Some(p) => self.core.project(p),
            None => FactStore::new(),
        }
    }

    /// Moves the right period to `(c, c + len]`, copying unfolded content.
    ///
    /// Requires `c` at or beyond the current seam (or beyond all content when
    /// there is no right period) and `len` a multiple of the current length.
    pub fn reseat_right(&mut self, c: Time, len: Time) {
        let new = right_period(c.clone(), &c + &len);
        if self.right.as_ref() == Some(&new) {
            return;
        }
        if let Some(r) = &self.right {
            let d = r.hi().clone();
            if new.hi() > &d {
                let extra = Interval::new(d, false, new.hi().clone(), true).unwrap();
                let add = self.unfold_window(&extra);
                self.core.union_with(&add);
            }
        }
        self.right = Some(new);
    }

    /// Moves the left period to `[b − len, b)`, copying unfolded content.
    pub fn reseat_left(&mut self, b: Time, len: Time) {
        let new = left_period(&b - &len, b);
        if self.left.as_ref() == Some(&new) {
            return;
        }
        if let Some(l) = &self.left {
            let a = l.lo().clone();
            if new.lo() < &a {
                let extra = Interval::new(new.lo().clone(), true, a, false).unwrap();
                let add = self.unfold_window(&extra);
                self.core.union_with(&add);
            }
        }
        self.left = Some(new);
    }

    pub fn fact_count(&self) -> usize {
        self.core.fact_count()
    }

    /// Parses the `.pmat` text format.
    pub fn parse(text: &str) -> Result<Self, PmatError> {
        let mut left = None;
        let mut right = None;
        let mut body = String::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix("#LPERIOD") {
                left = Some(parse_interval(rest.trim()).map_err(|e| PmatError::Parse(relocate(e, i + 1)))?);
                body.push('\n');
            } else if let Some(rest) = t.strip_prefix("#RPERIOD") {
                right = Some(parse_interval(rest.trim()).map_err(|e| PmatError::Parse(relocate(e, i + 1)))?);
                body.push('\n');
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let facts = parse_dataset(&body).map_err(PmatError::Parse)?;
        let core = FactStore::from_facts(facts).map_err(|e| PmatError::Store(e.to_string()))?;
        PeriodicMaterialisation::new(core, left, right).map_err(PmatError::Periodic)
    }
}

fn relocate(e: ParseError, line: usize) -> ParseError {
    match e {
        ParseError::Syntax { column, message, .. } => ParseError::Syntax { line, column, message },
        ParseError::Unbounded { column, .. } => ParseError::Unbounded { line, column },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PmatError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Store(String),
    #[error("{0}")]
    Periodic(#[from] PeriodicError),
}

impl fmt::Display for PeriodicMaterialisation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = &self.left {
            writeln!(f, "#LPERIOD {l}")?;
        }
        if let Some(r) = &self.right {
            writeln!(f, "#RPERIOD {r}")?;
        }
        write!(f, "{}", self.core)
    }
}

impl LazyInterpretation for PeriodicMaterialisation {
    fn atoms_of(&self, predicate: &str) -> Vec<GroundAtom> {
        self.core.atoms_of(predicate).cloned().collect()
    }
    fn has_atom(&self, atom: &GroundAtom) -> bool {
        self.core.get(atom).is_some()
    }
    fn holds_on(&self, atom: &GroundAtom, w: &Interval<Time>) -> IntervalSet<Time> {
        self.atom_window(atom, w)
    }
}

pub fn unfold_window(m: &PeriodicMaterialisation, w: &Interval<Time>) -> FactStore {
    m.unfold_window(w)
}

/// Gives both inputs periods of the lcm length at `end`.
pub fn ext(
    mut m1: PeriodicMaterialisation,
    mut m2: PeriodicMaterialisation,
    end: End,
) -> Result<(PeriodicMaterialisation, PeriodicMaterialisation), PeriodicError> {
    let (Some(p1), Some(p2)) = (m1.period(end).cloned(), m2.period(end).cloned()) else {
        return Err(PeriodicError::NoPeriod(end));
    };
    let len = rational_lcm(&p1.len(), &p2.len());
    for (m, p) in [(&mut m1, &p1), (&mut m2, &p2)] {
        match end {
            End::Right => m.reseat_right(p.lo().clone(), len.clone()),
            End::Left => m.reseat_left(p.hi().clone(), len.clone()),
        }
    }
    Ok((m1, m2))
}

/// Places both inputs' periods at `end` on one common interval.
pub fn aln(
    mut m1: PeriodicMaterialisation,
    mut m2: PeriodicMaterialisation,
    end: End,
) -> Result<(PeriodicMaterialisation, PeriodicMaterialisation, Interval<Time>), PeriodicError> {
    let (p1, p2) = (m1.period(end).cloned(), m2.period(end).cloned());
    let len = match (&p1, &p2) {
        (None, None) => return Err(PeriodicError::NoPeriod(end)),
        (Some(a), Some(b)) if a.len() != b.len() => return Err(PeriodicError::LengthMismatch(end)),
        (Some(a), _) | (None, Some(a)) => a.len(),
    };
    match end {
        End::Right => {
            let mut c: Option<Time> = None;
            for (m, p) in [(&m1, &p1), (&m2, &p2)] {
                let bound = match p {
                    Some(p) => Some(p.lo().clone()),
                    None => m.core.span().map(|(_, hi)| hi),
                };
                if let Some(b) = bound {
                    c = Some(match c {
                        Some(x) => x.max(b),
                        None => b,
                    });
                }
            }
            let c = c.expect("a period is present");
            m1.reseat_right(c.clone(), len.clone());
            m2.reseat_right(c.clone(), len.clone());
            Ok((m1, m2, right_period(c.clone(), &c + &len)))
        }
        End::Left => {
            let mut b: Option<Time> = None;
            for (m, p) in [(&m1, &p1), (&m2, &p2)] {
                let bound = match p {
                    Some(p) => Some(p.hi().clone()),
                    None => m.core.span().map(|(lo, _)| lo),
                };
                if let Some(x) = bound {
                    b = Some(match b {
                        Some(y) => y.min(x),
                        None => x,
                    });
                }
            }
            let b = b.expect("a period is present");
            m1.reseat_left(b.clone(), len.clone());
            m2.reseat_left(b.clone(), len.clone());
            Ok((m1, m2, left_period(&b - &len, b)))
        }
    }
}

/// Brings both inputs to identical periods at both ends.
fn align_both(
    mut m1: PeriodicMaterialisation,
    mut m2: PeriodicMaterialisation,
) -> (PeriodicMaterialisation, PeriodicMaterialisation) {
    for end in [End::Left, End::Right] {
        let (a, b) = (m1.period(end).is_some(), m2.period(end).is_some());
        if a && b {
            (m1, m2) = ext(m1, m2, end).expect("both present");
        }
        if a || b {
            let (x, y, _) = aln(m1, m2, end).expect("one present, equal lengths");
            m1 = x;
            m2 = y;
        }
    }
    (m1, m2)
}

/// `m1 ⊖ m2`: unfolds to the pointwise difference of the unfoldings.
pub fn periodic_minus(m1: PeriodicMaterialisation, m2: PeriodicMaterialisation) -> PeriodicMaterialisation {
    if m2.core.is_empty() {
        return m1;
    }
    let (mut a, b) = align_both(m1, m2);
    a.core.subtract(&b.core);
    a
}

/// `m1 ⊎ m2`: unfolds to the pointwise union of the unfoldings.
pub fn periodic_union(m1: PeriodicMaterialisation, m2: PeriodicMaterialisation) -> PeriodicMaterialisation {
    if m2.core.is_empty() && (m2.left.is_none() || m1.left.is_some()) && (m2.right.is_none() || m1.right.is_some()) {
        return m1;
    }
    let (mut a, b) = align_both(m1, m2);
    a.core.union_with(&b.core);
    a
}

/// A fact in one unfolding but not the other, if any.
pub fn difference_witness(m1: &PeriodicMaterialisation, m2: &PeriodicMaterialisation) -> Option<(bool, Fact)> {
    let (a, b) = align_both(m1.clone(), m2.clone());
    if let Some(f) = a.core.difference(&b.core).facts().next() {
        return Some((true, f));
    }
    b.core.difference(&a.core).facts().next().map(|f| (false, f))
}

/// Whether the two unfoldings coincide.
pub fn equivalent(m1: &PeriodicMaterialisation, m2: &PeriodicMaterialisation) -> bool {
    difference_witness(m1, m2).is_none()
}

/// Parameters of a search for a repeating window pair on each side of the data.
#[derive(Clone, Debug)]
pub struct PeriodSearch {
    pub depth: Time,
    pub div: Time,
    /// Residues of the dataset endpoints modulo `div`.
    pub residues: Vec<Time>,
    /// `[t_E⁻, t_E⁺]`.
    pub span: (Time, Time),
    /// Offsets must be multiples of these.
    pub left_step: Time,
    pub right_step: Time,
    /// Inclusive upper bound on ϱ2⁺.
    pub left_max: Option<Time>,
    /// Inclusive lower bound on ϱ3⁻.
    pub right_min: Option<Time>,
    /// Every window must lie inside this interval.
    pub outer: Option<Interval<Time>>,
}

impl PeriodSearch {
    /// Defaults for a program and dataset with no reference periods.
    pub fn new(p: &Program, e: &FactStore) -> Self {
        let span = e.span().unwrap_or_else(|| (Time::zero(), Time::zero()));
        PeriodSearch {
            depth: p.depth().clone(),
            div: p.div().clone(),
            residues: ruler_residues(p.div(), e.endpoints()),
            span,
            left_step: p.div().clone(),
            right_step: p.div().clone(),
            left_max: None,
            right_min: None,
            outer: None,
        }
    }

    /// Uses reference periods for offsets and search bounds.
    pub fn with_reference(mut self, left: Option<&Interval<Time>>, right: Option<&Interval<Time>>) -> Self {
        let two_d = &self.depth + &self.depth;
        if let Some(l) = left {
            self.left_step = l.len();
            self.left_max = Some(l.hi() + &two_d);
        }
        if let Some(r) = right {
            self.right_step = r.len();
            self.right_min = Some(r.lo() - &two_d);
        }
        self
    }

    fn ruler(&self, lo: &Time, hi: &Time) -> Vec<Time> {
        if lo > hi {
            return Vec::new();
        }
        ruler_points_from_residues(&self.div, &self.residues, &Interval::closed(lo.clone(), hi.clone()))
    }

    /// Runs the search over the store `d` whose next-round additions are `delta`.
    ///
    /// Returns `([ϱ1⁻, ϱ2⁻), (ϱ3⁺, ϱ4⁺])`.
    pub fn find(&self, d: &FactStore, delta: &FactStore) -> Option<(Interval<Time>, Interval<Time>)> {
        let (te_lo, te_hi) = &self.span;
        let data = Interval::closed(te_lo.clone(), te_hi.clone());
        let mut u: Option<Time> = None;
        let mut v: Option<Time> = None;
        for (_, s) in delta.iter() {
            for i in s.intervals() {
                if i.intersect(&data).is_some() {
                    return None;
                }
                if i.hi() <= te_lo {
                    u = Some(u.map_or(i.hi().clone(), |x| x.max(i.hi().clone())));
                } else {
                    v = Some(v.map_or(i.lo().clone(), |x| x.min(i.lo().clone())));
                }
            }
        }
        let left = self.find_left(d, u.as_ref())?;
        let right = self.find_right(d, v.as_ref())?;
        Some((left, right))
    }

    fn find_left(&self, d: &FactStore, u: Option<&Time>) -> Option<Interval<Time>> {
        let two_d = &self.depth + &self.depth;
        let (te_lo, _) = &self.span;
        // ϱ2⁺ < t_E⁻ on the ruler: at most t_E⁻ − div when t_E⁻ is a ruler point
        let mut top = te_lo - &self.div;
        if let Some(m) = &self.left_max {
            top = top.min(m.clone());
        }
        if let Some(o) = &self.outer {
            top = top.min(o.hi().clone());
        }
        let content_lo = d.span().map(|(lo, _)| lo);
        let mut k = Time::one();
        loop {
            let len = &k * &self.left_step;
            let x_max = &top - &len - &two_d;
            // lowest anchor worth trying: windows entirely below all content
            let floor = match (u, &self.outer) {
                (Some(u), _) => u + &self.div / Time::from_integer(2.into()),
                (None, Some(o)) => o.lo().clone(),
                (None, None) => match &content_lo {
                    Some(c) => (c - &len - &two_d - &self.div).min(&x_max - &self.div),
                    None => &x_max - &self.div,
                },
            };
            let floor = match &self.outer {
                Some(o) => floor.max(o.lo().clone()),
                None => floor,
            };
            let points = self.ruler(&floor, &x_max);
            if points.is_empty() && (u.is_some() || self.outer.is_some()) {
                return None;
            }
            for x in points.iter().rev() {
                if u.is_some_and(|u| x <= u) {
                    break;
                }
                let w1 = Interval::closed(x.clone(), x + &two_d);
                if windows_shift_equal(d, &w1, &len) {
                    return Some(left_period(x.clone(), x + &len));
                }
            }
            k += Time::one();
        }
    }

    fn find_right(&self, d: &FactStore, v: Option<&Time>) -> Option<Interval<Time>> {
        let two_d = &self.depth + &self.depth;
        let (_, te_hi) = &self.span;
        let mut bottom = te_hi + &self.div;
        if let Some(m) = &self.right_min {
            bottom = bottom.max(m.clone());
        }
        if let Some(o) = &self.outer {
            bottom = bottom.max(o.lo().clone());
        }
        let content_hi = d.span().map(|(_, hi)| hi);
        let mut k = Time::one();
        loop {
            let len = &k * &self.right_step;
            let z_min = bottom.clone();
            // highest anchor worth trying, for ϱ4⁺ = z + len + 2d
            let ceiling = match (v, &self.outer) {
                (Some(v), _) => v - &len - &two_d - &self.div / Time::from_integer(2.into()),
                (None, Some(o)) => o.hi() - &len - &two_d,
                (None, None) => match &content_hi {
                    Some(c) => (c + &self.div + &self.div).max(&z_min + &self.div),
                    None => &z_min + &self.div,
                },
            };
            let ceiling = match &self.outer {
                Some(o) => ceiling.min(o.hi() - &len - &two_d),
                None => ceiling,
            };
            let points = self.ruler(&z_min, &ceiling);
            if points.is_empty() && (v.is_some() || self.outer.is_some()) {
                return None;
            }
            for z in &points {
                let w3 = Interval::closed(z.clone(), z + &two_d);
                if windows_shift_equal(d, &w3, &len) {
                    let c = z + &two_d;
                    let dd = &c + &len;
                    return Some(right_period(c, dd));
                }
            }
            k += Time::one();
        }
    }
}

/// Whether `d` on `w` shifted by `len` equals `d` on `w + len`.
fn windows_shift_equal(d: &FactStore, w: &Interval<Time>, len: &Time) -> bool {
    let w2 = w.shift(len);
    d.iter().all(|(_, s)| s.restrict(w).shift(len) == s.restrict(&w2))
}

/// Period search for an update stage with optional reference periods.
pub fn pds(
    p: &Program,
    e: &FactStore,
    rho_l: Option<&Interval<Time>>,
    rho_r: Option<&Interval<Time>>,
    d: &FactStore,
    delta: &FactStore,
) -> Option<(Interval<Time>, Interval<Time>)> {
    PeriodSearch::new(p, e).with_reference(rho_l, rho_r).find(d, delta)
}

/// Saturation test for plain materialisation rounds.
pub fn detect_saturation(
    p: &Program,
    e: &FactStore,
    current: &FactStore,
    previous: &FactStore,
) -> Option<(Interval<Time>, Interval<Time>)> {
    let delta = current.difference(previous);
    PeriodSearch::new(p, e).find(previous, &delta)
}

/// Independent check of the saturation conditions for `s` with the given periods.
pub fn is_saturated(p: &Program, e: &FactStore, s: &FactStore, left: &Interval<Time>, right: &Interval<Time>) -> bool {
    let two_d = p.depth() + p.depth();
    let (te_lo, te_hi) = e.span().unwrap_or_else(|| (Time::zero(), Time::zero()));
    let w1 = Interval::closed(left.lo().clone(), left.lo() + &two_d);
    let w2 = Interval::closed(left.hi().clone(), left.hi() + &two_d);
    let w4 = Interval::closed(right.hi() - &two_d, right.hi().clone());
    let w3 = Interval::closed(right.lo() - &two_d, right.lo().clone());
    if !(w1.hi() < w2.hi() && w2.hi() < &te_lo && &te_hi < w3.lo() && w3.lo() < w4.lo()) {
        return false;
    }
    let residues = ruler_residues(p.div(), e.endpoints());
    let on_ruler = |t: &Time| residues.iter().any(|r| ((t - r) / p.div()).is_integer());
    if !on_ruler(w1.lo()) || !on_ruler(w3.lo()) {
        return false;
    }
    if !s.project(&w1).shift(&left.len()).eq(&s.project(&w2)) {
        return false;
    }
    if !s.project(&w3).shift(&right.len()).eq(&s.project(&w4)) {
        return false;
    }
    let span = Interval::closed(w1.lo().clone(), w4.hi().clone());
    immediate_consequence(p, s).project(&span) == s.project(&span)
}
