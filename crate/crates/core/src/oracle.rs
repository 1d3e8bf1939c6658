//! Brute-force reference semantics on a bounded window.
//!
//! The window is cut into cells: every ruler point and every open gap between
//! consecutive ruler points. Atom truth is constant on cells, so each formula
//! is evaluated once per cell, straight from the pointwise definitions. None of
//! the interval-set operators are used, so results can be compared against the
//! engine.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use crate::store::{FactStore, GroundAtom};
use crate::syntax::{ground_relational, ruler_points_from_residues, ruler_residues, MetricAtom, Program, Substitution, Symbol, Term};
use crate::temporal::Interval;
use crate::Time;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub store: FactStore,
    pub rounds: usize,
    pub budget_exceeded: bool,
}

struct Cells {
    points: Vec<Time>,
}

impl Cells {
    fn count(&self) -> usize {
        2 * self.points.len() - 1
    }

    fn rep(&self, k: usize) -> Time {
        if k % 2 == 0 {
            self.points[k / 2].clone()
        } else {
            (&self.points[k / 2] + &self.points[k / 2 + 1]) / Time::from_integer(2.into())
        }
    }

    fn interval(&self, k: usize) -> Interval<Time> {
        if k % 2 == 0 {
            Interval::point(self.points[k / 2].clone())
        } else {
            Interval::new(self.points[k / 2].clone(), false, self.points[k / 2 + 1].clone(), false).unwrap()
        }
    }

    /// Cell index of `t`; −1 below the window, `count` above it.
    fn cell_of(&self, t: &Time) -> i64 {
        let n = self.points.len();
        if *t < self.points[0] {
            return -1;
        }
        if *t > self.points[n - 1] {
            return self.count() as i64;
        }
        match self.points.binary_search(t) {
            Ok(i) => 2 * i as i64,
            Err(i) => 2 * (i as i64 - 1) + 1,
        }
    }

    /// Inclusive range of cell indices meeting `w` (may leave the window).
    fn range(&self, w: &Interval<Time>) -> (i64, i64) {
        let mut lo = self.cell_of(w.lo());
        if !w.lo_closed() && lo >= 0 && lo % 2 == 0 && lo < self.count() as i64 {
            lo += 1;
        }
        let mut hi = self.cell_of(w.hi());
        if !w.hi_closed() && hi >= 0 && hi % 2 == 0 && hi < self.count() as i64 {
            hi -= 1;
        }
        (lo, hi)
    }
}

type Vector = Vec<bool>;

/// Inclusive cell range; may leave the window on either side.
type Range = (i64, i64);

/// One candidate for the anchor of a SINCE/UNTIL at some cell: the anchor
/// cell, whether the left operand must hold on that cell, and the cells on
/// which it must hold between anchor and evaluation point.
#[derive(Clone)]
struct Candidate {
    cell: usize,
    needs_own: bool,
    tail: Option<Range>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shape {
    Past,
    Future,
    Since,
    Until,
}

#[derive(Default)]
struct Geometry {
    ranges: Vec<((Shape, Interval<Time>), Rc<Vec<Range>>)>,
    anchors: Vec<((Shape, Interval<Time>), Rc<Vec<Vec<Candidate>>>)>,
}

struct Prefix {
    counts: Vec<u32>,
}

impl Prefix {
    fn new(v: &Vector) -> Prefix {
        let mut counts = Vec::with_capacity(v.len() + 1);
        counts.push(0);
        let mut c = 0;
        for &b in v {
            c += b as u32;
            counts.push(c);
        }
        Prefix { counts }
    }

    fn n(&self) -> i64 {
        self.counts.len() as i64 - 1
    }

    fn count(&self, lo: i64, hi: i64) -> u32 {
        self.counts[(hi + 1) as usize] - self.counts[lo as usize]
    }

    fn exists(&self, (lo, hi): Range) -> bool {
        let (lo, hi) = (lo.max(0), hi.min(self.n() - 1));
        lo <= hi && self.count(lo, hi) > 0
    }

    /// Vacuous on an empty range; false when the range leaves the window.
    fn forall(&self, (lo, hi): Range) -> bool {
        if lo > hi {
            return true;
        }
        if lo < 0 || hi >= self.n() {
            return false;
        }
        self.count(lo, hi) as i64 == hi - lo + 1
    }
}

struct Ctx<'a> {
    cells: &'a Cells,
    interp: &'a BTreeMap<GroundAtom, Vector>,
    geometry: &'a RefCell<Geometry>,
}

impl Ctx<'_> {
    fn ranges(&self, shape: Shape, w: &Interval<Time>) -> Rc<Vec<Range>> {
        let key = (shape, w.clone());
        if let Some((_, r)) = self.geometry.borrow().ranges.iter().find(|(k, _)| *k == key) {
            return r.clone();
        }
        let r: Rc<Vec<Range>> = Rc::new(
            (0..self.cells.count())
                .map(|k| {
                    let t = self.cells.rep(k);
                    self.cells.range(&if shape == Shape::Past { past(&t, w) } else { future(&t, w) })
                })
                .collect(),
        );
        self.geometry.borrow_mut().ranges.push((key, r.clone()));
        r
    }

    fn anchors(&self, shape: Shape, w: &Interval<Time>) -> Rc<Vec<Vec<Candidate>>> {
        let key = (shape, w.clone());
        if let Some((_, r)) = self.geometry.borrow().anchors.iter().find(|(k, _)| *k == key) {
            return r.clone();
        }
        let n = self.cells.count() as i64;
        let r: Rc<Vec<Vec<Candidate>>> = Rc::new(
            (0..self.cells.count())
                .map(|k| {
                    let t = self.cells.rep(k);
                    let j = if shape == Shape::Since { past(&t, w) } else { future(&t, w) };
                    let (lo, hi) = self.cells.range(&j);
                    let mut out = Vec::new();
                    for c in lo.max(0)..=hi.min(n - 1) {
                        let Some(x) = self.cells.interval(c as usize).intersect(&j) else { continue };
                        let cand = if shape == Shape::Since {
                            // the latest admissible anchor in this cell is the best choice
                            if x.hi_closed() {
                                Candidate { cell: c as usize, needs_own: false, tail: self.open_range(x.hi(), &t) }
                            } else {
                                let tail = if x.hi() >= &t {
                                    None
                                } else {
                                    Some(self.cells.range(&Interval::new(x.hi().clone(), true, t.clone(), false).unwrap()))
                                };
                                Candidate { cell: c as usize, needs_own: true, tail }
                            }
                        } else if x.lo_closed() {
                            Candidate { cell: c as usize, needs_own: false, tail: self.open_range(&t, x.lo()) }
                        } else {
                            let tail = if x.lo() <= &t {
                                None
                            } else {
                                Some(self.cells.range(&Interval::new(t.clone(), false, x.lo().clone(), true).unwrap()))
                            };
                            Candidate { cell: c as usize, needs_own: true, tail }
                        };
                        out.push(cand);
                    }
                    out
                })
                .collect(),
        );
        self.geometry.borrow_mut().anchors.push((key, r.clone()));
        r
    }

    /// Cells of the open interval (a, b); `None` when it is empty.
    fn open_range(&self, a: &Time, b: &Time) -> Option<Range> {
        Interval::new(a.clone(), false, b.clone(), false).map(|w| self.cells.range(&w))
    }

    fn eval(&self, m: &MetricAtom) -> Vector {
        let n = self.cells.count();
        match m {
            MetricAtom::Top => vec![true; n],
            MetricAtom::Bottom => vec![false; n],
            MetricAtom::Relational(p, ts) => {
                let g = ground_relational(p, ts, &Substitution::new()).expect("ground");
                self.interp.get(&g).cloned().unwrap_or_else(|| vec![false; n])
            }
            MetricAtom::Diamondminus(w, inner) | MetricAtom::Boxminus(w, inner) => {
                let v = Prefix::new(&self.eval(inner));
                let exists = matches!(m, MetricAtom::Diamondminus(..));
                let ranges = self.ranges(Shape::Past, w);
                ranges.iter().map(|&r| if exists { v.exists(r) } else { v.forall(r) }).collect()
            }
            MetricAtom::Diamondplus(w, inner) | MetricAtom::Boxplus(w, inner) => {
                let v = Prefix::new(&self.eval(inner));
                let exists = matches!(m, MetricAtom::Diamondplus(..));
                let ranges = self.ranges(Shape::Future, w);
                ranges.iter().map(|&r| if exists { v.exists(r) } else { v.forall(r) }).collect()
            }
            MetricAtom::Since(l, w, r) | MetricAtom::Until(l, w, r) => {
                let vl = self.eval(l);
                let pl = Prefix::new(&vl);
                let vr = self.eval(r);
                let shape = if matches!(m, MetricAtom::Since(..)) { Shape::Since } else { Shape::Until };
                let anchors = self.anchors(shape, w);
                anchors
                    .iter()
                    .map(|cands| {
                        cands.iter().any(|c| {
                            vr[c.cell] && (!c.needs_own || vl[c.cell]) && c.tail.is_none_or(|t| pl.forall(t))
                        })
                    })
                    .collect()
            }
        }
    }
}

/// `{t1 | t − t1 ∈ w}`.
fn past(t: &Time, w: &Interval<Time>) -> Interval<Time> {
    Interval::new(t - w.hi(), w.hi_closed(), t - w.lo(), w.lo_closed()).unwrap()
}

/// `{t1 | t1 − t ∈ w}`.
fn future(t: &Time, w: &Interval<Time>) -> Interval<Time> {
    Interval::new(t + w.lo(), w.lo_closed(), t + w.hi(), w.hi_closed()).unwrap()
}

fn substitutions(
    vars: &[Symbol],
    required: &[(Symbol, Vec<Term>)],
    present: &BTreeSet<GroundAtom>,
    constants: &[Symbol],
) -> Vec<Substitution> {
    // plain enumeration, filtered by the atoms that must hold somewhere
    let mut out = Vec::new();
    let mut idx = vec![0usize; vars.len()];
    if constants.is_empty() && !vars.is_empty() {
        return out;
    }
    loop {
        let sigma: Substitution = vars.iter().cloned().zip(idx.iter().map(|&i| constants[i].clone())).collect();
        if required.iter().all(|(p, ts)| ground_relational(p, ts, &sigma).is_some_and(|g| present.contains(&g))) {
            out.push(sigma);
        }
        let mut k = 0;
        loop {
            if k == vars.len() {
                return out;
            }
            idx[k] += 1;
            if idx[k] < constants.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Naive fixpoint iteration of T_Π on the cells of `window`.
pub fn pointwise_oracle(p: &Program, data: &FactStore, window: &Interval<Time>, max_rounds: usize) -> OracleResult {
    let residues = ruler_residues(p.div(), data.endpoints());
    let points = ruler_points_from_residues(p.div(), &residues, window);
    if points.is_empty() {
        return OracleResult { store: FactStore::new(), rounds: 0, budget_exceeded: false };
    }
    let cells = Cells { points };
    let n = cells.count();
    let mut interp: BTreeMap<GroundAtom, Vector> = BTreeMap::new();
    for (a, s) in data.iter() {
        let v: Vector = (0..n).map(|k| s.contains(&cells.rep(k))).collect();
        if v.iter().any(|&b| b) {
            interp.insert(a.clone(), v);
        }
    }
    let mut constants: BTreeSet<Symbol> = data.constants();
    constants.extend(p.constants());
    let constants: Vec<Symbol> = constants.into_iter().collect();

    let geometry = RefCell::new(Geometry::default());
    let mut covers: Vec<(MetricAtom, Vec<Range>)> = Vec::new();
    let mut rounds = 0;
    loop {
        if rounds >= max_rounds {
            return OracleResult { store: to_store(&cells, &interp), rounds, budget_exceeded: true };
        }
        rounds += 1;
        let present: BTreeSet<GroundAtom> = interp.keys().cloned().collect();
        let mut next = interp.clone();
        let ctx = Ctx { cells: &cells, interp: &interp, geometry: &geometry };
        for r in p.rules() {
            let mut vars = BTreeSet::new();
            r.head.variables(&mut vars);
            for b in &r.body {
                b.variables(&mut vars);
            }
            let vars: Vec<Symbol> = vars.into_iter().collect();
            let mut required = Vec::new();
            for b in &r.body {
                b.for_each_relational(true, &mut |p, ts, req| {
                    if req {
                        required.push((p.clone(), ts.to_vec()));
                    }
                });
            }
            for sigma in substitutions(&vars, &required, &present, &constants) {
                let mut body = vec![true; n];
                for b in &r.body {
                    let v = ctx.eval(&b.substitute(&sigma));
                    for (x, y) in body.iter_mut().zip(v) {
                        *x &= y;
                    }
                }
                let (hp, hts) = r.head.head_relational().unwrap();
                let atom = ground_relational(hp, hts, &sigma).unwrap();
                let cover = match covers.iter().position(|(h, _)| *h == r.head) {
                    Some(i) => i,
                    None => {
                        let rs = (0..n).map(|k| cells.range(&head_cover(&r.head, cells.interval(k)))).collect();
                        covers.push((r.head.clone(), rs));
                        covers.len() - 1
                    }
                };
                for k in (0..n).filter(|&k| body[k]) {
                    let (lo, hi) = covers[cover].1[k];
                    let v = next.entry(atom.clone()).or_insert_with(|| vec![false; n]);
                    for c in lo.max(0)..=hi.min(n as i64 - 1) {
                        v[c as usize] = true;
                    }
                }
            }
        }
        next.retain(|_, v| v.iter().any(|&b| b));
        if next == interp {
            return OracleResult { store: to_store(&cells, &interp), rounds, budget_exceeded: false };
        }
        interp = next;
    }
}

/// Where the relational atom of a head must hold when the body holds on `cell`.
fn head_cover(head: &MetricAtom, cell: Interval<Time>) -> Interval<Time> {
    match head {
        MetricAtom::Relational(..) => cell,
        MetricAtom::Boxplus(w, m) => head_cover(m, cell.sum(w)),
        MetricAtom::Boxminus(w, m) => head_cover(m, cell.sum(&w.reflect())),
        _ => unreachable!("validated head"),
    }
}

fn to_store(cells: &Cells, interp: &BTreeMap<GroundAtom, Vector>) -> FactStore {
    let mut out = FactStore::new();
    for (a, v) in interp {
        let mut k = 0;
        while k < v.len() {
            if !v[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k + 1 < v.len() && v[k + 1] {
                k += 1;
            }
            let first = cells.interval(start);
            let last = cells.interval(k);
            let iv = Interval::new(first.lo().clone(), first.lo_closed(), last.hi().clone(), last.hi_closed()).unwrap();
            out.insert(a.clone(), iv).expect("arity");
            k += 1;
        }
    }
    out
}

/// Oracle on `inner`, computed on ever wider outer windows until two
/// consecutive widths agree on `inner`.
pub fn stable_oracle(
    p: &Program,
    data: &FactStore,
    inner: &Interval<Time>,
    margin: &Time,
    max_rounds: usize,
    max_doublings: usize,
) -> Option<FactStore> {
    let mut m = margin.clone();
    let mut prev = pointwise_oracle(p, data, &inner.widen(&m), max_rounds);
    if prev.budget_exceeded {
        return None;
    }
    for _ in 0..max_doublings {
        m = &m + &m;
        let next = pointwise_oracle(p, data, &inner.widen(&m), max_rounds);
        if next.budget_exceeded {
            return None;
        }
        let a = prev.store.project(inner);
        let b = next.store.project(inner);
        if a == b {
            return Some(a);
        }
        prev = next;
    }
    None
}
