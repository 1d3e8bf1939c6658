//! Metric atom evaluation, grounding, and the consequence operators.

use std::collections::BTreeSet;

use num_traits::Zero;
use thiserror::Error;

use crate::store::{FactStore, GroundAtom};
use crate::syntax::{ground_relational, Fact, MetricAtom, Program, Rule, Substitution, Symbol, Term};
use crate::temporal::{Interval, IntervalSet};
use crate::Time;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("atom {0} is not ground")]
    NonGround(String),
    #[error("atom {0} holds at every time point")]
    Unbounded(String),
}

/// Times where an atom holds: either everywhere (only reachable through ⊤)
/// or a bounded set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Truth {
    Everywhere,
    Set(IntervalSet<Time>),
}

impl Truth {
    fn map(self, f: impl FnOnce(IntervalSet<Time>) -> IntervalSet<Time>) -> Truth {
        match self {
            Truth::Everywhere => Truth::Everywhere,
            Truth::Set(s) => Truth::Set(f(s)),
        }
    }

    pub fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::Everywhere, t) | (t, Truth::Everywhere) => t,
            (Truth::Set(a), Truth::Set(b)) => Truth::Set(a.intersection(&b)),
        }
    }

    /// The bounded set, clipped to `w` when everywhere.
    pub fn within(self, w: &Interval<Time>) -> IntervalSet<Time> {
        match self {
            Truth::Everywhere => IntervalSet::single(w.clone()),
            Truth::Set(s) => s.restrict(w),
        }
    }
}

/// `{t | t1 ∈ s for all t1 with t − t1 ∈ w}`.
pub fn box_minus_set(s: &IntervalSet<Time>, w: &Interval<Time>) -> IntervalSet<Time> {
    IntervalSet::from_fragments(s.intervals().iter().filter_map(|r| {
        Interval::new(
            r.lo() + w.hi(),
            r.lo_closed() || !w.hi_closed(),
            r.hi() + w.lo(),
            r.hi_closed() || !w.lo_closed(),
        )
    }))
}

/// `{t | t1 ∈ s for all t1 with t1 − t ∈ w}`.
pub fn box_plus_set(s: &IntervalSet<Time>, w: &Interval<Time>) -> IntervalSet<Time> {
    box_minus_set(s, &w.reflect())
}

fn positive_part(w: &Interval<Time>) -> Option<Interval<Time>> {
    if w.lo().is_zero() {
        Interval::new(Time::zero(), false, w.hi().clone(), w.hi_closed())
    } else {
        Some(w.clone())
    }
}

/// `left SINCE[w] right`.
pub fn since(left: Truth, w: &Interval<Time>, right: Truth) -> Truth {
    let zero_in = w.contains(&Time::zero());
    let wp = positive_part(w);
    match (left, right) {
        (Truth::Everywhere, Truth::Everywhere) => Truth::Everywhere,
        (Truth::Everywhere, Truth::Set(r)) => Truth::Set(r.minkowski_sum(w)),
        (Truth::Set(_), Truth::Everywhere) if zero_in => Truth::Everywhere,
        (Truth::Set(l), Truth::Everywhere) => {
            let wp = wp.expect("0 ∉ w so w is positive");
            Truth::Set(IntervalSet::from_fragments(l.intervals().iter().filter_map(|g| {
                let a = Interval::new(g.lo().clone(), true, g.hi().clone(), false)?;
                a.sum(&wp).intersect(&Interval::closed(g.lo().clone(), g.hi().clone()))
            })))
        }
        (Truth::Set(l), Truth::Set(r)) => {
            let mut frags: Vec<Interval<Time>> = if zero_in { r.intervals().to_vec() } else { Vec::new() };
            if let Some(wp) = wp {
                for g in l.intervals() {
                    let Some(gap) = Interval::new(g.lo().clone(), true, g.hi().clone(), false) else { continue };
                    let cap = Interval::closed(g.lo().clone(), g.hi().clone());
                    let start = r.intervals().partition_point(|x| x.hi() < g.lo());
                    for x in &r.intervals()[start..] {
                        if x.lo() > g.hi() {
                            break;
                        }
                        if let Some(a) = x.intersect(&gap) {
                            if let Some(y) = a.sum(&wp).intersect(&cap) {
                                frags.push(y);
                            }
                        }
                    }
                }
            }
            Truth::Set(IntervalSet::from_fragments(frags))
        }
    }
}

/// `left UNTIL[w] right`.
pub fn until(left: Truth, w: &Interval<Time>, right: Truth) -> Truth {
    let zero_in = w.contains(&Time::zero());
    let wn = positive_part(w).map(|x| x.reflect());
    match (left, right) {
        (Truth::Everywhere, Truth::Everywhere) => Truth::Everywhere,
        (Truth::Everywhere, Truth::Set(r)) => Truth::Set(r.minkowski_sum(&w.reflect())),
        (Truth::Set(_), Truth::Everywhere) if zero_in => Truth::Everywhere,
        (Truth::Set(l), Truth::Everywhere) => {
            let wn = wn.expect("0 ∉ w so w is positive");
            Truth::Set(IntervalSet::from_fragments(l.intervals().iter().filter_map(|g| {
                let a = Interval::new(g.lo().clone(), false, g.hi().clone(), true)?;
                a.sum(&wn).intersect(&Interval::closed(g.lo().clone(), g.hi().clone()))
            })))
        }
        (Truth::Set(l), Truth::Set(r)) => {
            let mut frags: Vec<Interval<Time>> = if zero_in { r.intervals().to_vec() } else { Vec::new() };
            if let Some(wn) = wn {
                for g in l.intervals() {
                    let Some(gap) = Interval::new(g.lo().clone(), false, g.hi().clone(), true) else { continue };
                    let cap = Interval::closed(g.lo().clone(), g.hi().clone());
                    let start = r.intervals().partition_point(|x| x.hi() < g.lo());
                    for x in &r.intervals()[start..] {
                        if x.lo() > g.hi() {
                            break;
                        }
                        if let Some(a) = x.intersect(&gap) {
                            if let Some(y) = a.sum(&wn).intersect(&cap) {
                                frags.push(y);
                            }
                        }
                    }
                }
            }
            Truth::Set(IntervalSet::from_fragments(frags))
        }
    }
}

/// Evaluates a ground atom given the content of each ground relational atom.
pub fn eval_with(a: &MetricAtom, lookup: &mut dyn FnMut(&GroundAtom) -> IntervalSet<Time>) -> Truth {
    match a {
        MetricAtom::Top => Truth::Everywhere,
        MetricAtom::Bottom => Truth::Set(IntervalSet::empty()),
        MetricAtom::Relational(p, ts) => {
            let g = ground_relational(p, ts, &Substitution::new()).expect("ground atom");
            Truth::Set(lookup(&g))
        }
        MetricAtom::Diamondminus(w, m) => eval_with(m, lookup).map(|s| s.minkowski_sum(w)),
        MetricAtom::Diamondplus(w, m) => eval_with(m, lookup).map(|s| s.minkowski_sum(&w.reflect())),
        MetricAtom::Boxminus(w, m) => eval_with(m, lookup).map(|s| box_minus_set(&s, w)),
        MetricAtom::Boxplus(w, m) => eval_with(m, lookup).map(|s| box_plus_set(&s, w)),
        MetricAtom::Since(l, w, r) => {
            let lt = eval_with(l, lookup);
            let rt = eval_with(r, lookup);
            since(lt, w, rt)
        }
        MetricAtom::Until(l, w, r) => {
            let lt = eval_with(l, lookup);
            let rt = eval_with(r, lookup);
            until(lt, w, rt)
        }
    }
}

/// Where an atom holds, and where it holds through a support meeting a given set.
struct Touched {
    holds: Truth,
    touched: IntervalSet<Time>,
}

/// Evaluates `a` in `full`, also returning the times at which some minimal
/// support of `a` (a set of facts of `full` making it true) meets `delta`.
fn eval_touched(
    a: &MetricAtom,
    full: &mut dyn FnMut(&GroundAtom) -> IntervalSet<Time>,
    delta: &dyn Fn(&GroundAtom) -> Option<IntervalSet<Time>>,
) -> Touched {
    match a {
        MetricAtom::Top => Touched { holds: Truth::Everywhere, touched: IntervalSet::empty() },
        MetricAtom::Bottom => Touched { holds: Truth::Set(IntervalSet::empty()), touched: IntervalSet::empty() },
        MetricAtom::Relational(p, ts) => {
            let g = ground_relational(p, ts, &Substitution::new()).expect("ground atom");
            let holds = full(&g);
            let touched = delta(&g).map(|d| d.intersection(&holds)).unwrap_or_default();
            Touched { holds: Truth::Set(holds), touched }
        }
        MetricAtom::Diamondminus(w, m) | MetricAtom::Diamondplus(w, m) => {
            let w = if matches!(a, MetricAtom::Diamondminus(..)) { w.clone() } else { w.reflect() };
            let inner = eval_touched(m, full, delta);
            Touched { holds: inner.holds.map(|s| s.minkowski_sum(&w)), touched: inner.touched.minkowski_sum(&w) }
        }
        MetricAtom::Boxminus(w, m) | MetricAtom::Boxplus(w, m) => {
            let w = if matches!(a, MetricAtom::Boxminus(..)) { w.clone() } else { w.reflect() };
            let inner = eval_touched(m, full, delta);
            let holds = inner.holds.map(|s| box_minus_set(&s, &w));
            let reach = inner.touched.minkowski_sum(&w);
            let touched = match &holds {
                Truth::Everywhere => reach,
                Truth::Set(h) => h.intersection(&reach),
            };
            Touched { holds, touched }
        }
        MetricAtom::Since(l, w, r) | MetricAtom::Until(l, w, r) => {
            let future = matches!(a, MetricAtom::Until(..));
            let op = if future { until } else { since };
            let lt = eval_touched(l, full, delta);
            let rt = eval_touched(r, full, delta);
            let holds = op(lt.holds.clone(), w, rt.holds.clone());
            // anchor in the touched part of the right operand
            let mut touched = match op(lt.holds.clone(), w, Truth::Set(rt.touched)) {
                Truth::Set(s) => s,
                Truth::Everywhere => unreachable!("bounded right operand"),
            };
            // or the left operand touched strictly between anchor and now
            if let (Truth::Set(left), Some(wp)) = (&lt.holds, positive_part(w)) {
                if !lt.touched.is_empty() {
                    let frags = left_touched(left, &lt.touched, &rt.holds, &wp, future);
                    touched = touched.union(&IntervalSet::from_fragments(frags));
                }
            }
            Touched { holds, touched }
        }
    }
}

/// Times `t` with an anchor `t1` in `right`, `left` on the open span between
/// them, `|t − t1| ∈ wp`, and a point of `touched` inside that span.
fn left_touched(
    left: &IntervalSet<Time>,
    touched: &IntervalSet<Time>,
    right: &Truth,
    wp: &Interval<Time>,
    future: bool,
) -> Vec<Interval<Time>> {
    let mut out = Vec::new();
    for g in left.intervals() {
        let cap = Interval::closed(g.lo().clone(), g.hi().clone());
        for tau in touched.restrict(g).intervals() {
            // anchors before (SINCE) or after (UNTIL) some point of tau, and
            // evaluation points on the other side of it
            let (anchors, side, shift) = if future {
                let anchors = Interval::new(g.lo().max(tau.lo()).clone(), false, g.hi().clone(), true);
                let side = Interval::new(g.lo().clone(), true, tau.hi().clone(), false);
                (anchors, side, wp.reflect())
            } else {
                let anchors = Interval::new(g.lo().clone(), true, g.hi().min(tau.hi()).clone(), false);
                let side = Interval::new(tau.lo().clone(), false, g.hi().clone(), true);
                (anchors, side, wp.clone())
            };
            let (Some(anchors), Some(side)) = (anchors, side) else { continue };
            let rs: Vec<Interval<Time>> = match right {
                Truth::Everywhere => vec![anchors.clone()],
                Truth::Set(r) => r.restrict(&anchors).into_intervals(),
            };
            for x in rs {
                if let Some(y) = x.sum(&shift).intersect(&cap).and_then(|y| y.intersect(&side)) {
                    out.push(y);
                }
            }
        }
    }
    out
}

/// Exactly the times where a ground atom holds in the store.
pub fn eval_atom(a: &MetricAtom, s: &FactStore) -> Result<IntervalSet<Time>, EvalError> {
    if !a.is_ground() {
        return Err(EvalError::NonGround(a.to_string()));
    }
    match eval_with(a, &mut |g| s.intervals_of(g)) {
        Truth::Set(x) => Ok(x),
        Truth::Everywhere => Err(EvalError::Unbounded(a.to_string())),
    }
}

/// An interpretation that can be inspected per atom on bounded windows.
pub trait LazyInterpretation {
    /// Ground atoms of a predicate that may hold somewhere.
    fn atoms_of(&self, predicate: &str) -> Vec<GroundAtom>;
    /// Whether the atom may hold somewhere.
    fn has_atom(&self, atom: &GroundAtom) -> bool;
    /// The atom's content restricted to `w`.
    fn holds_on(&self, atom: &GroundAtom, w: &Interval<Time>) -> IntervalSet<Time>;
}

impl LazyInterpretation for FactStore {
    fn atoms_of(&self, predicate: &str) -> Vec<GroundAtom> {
        FactStore::atoms_of(self, predicate).cloned().collect()
    }
    fn has_atom(&self, atom: &GroundAtom) -> bool {
        self.get(atom).is_some()
    }
    fn holds_on(&self, atom: &GroundAtom, w: &Interval<Time>) -> IntervalSet<Time> {
        self.get(atom).map(|s| s.restrict(w)).unwrap_or_default()
    }
}

/// `base ∖ minus`.
pub struct MinusView<'a> {
    pub base: &'a dyn LazyInterpretation,
    pub minus: &'a FactStore,
}

impl LazyInterpretation for MinusView<'_> {
    fn atoms_of(&self, predicate: &str) -> Vec<GroundAtom> {
        self.base.atoms_of(predicate)
    }
    fn has_atom(&self, atom: &GroundAtom) -> bool {
        self.base.has_atom(atom)
    }
    fn holds_on(&self, atom: &GroundAtom, w: &Interval<Time>) -> IntervalSet<Time> {
        let b = self.base.holds_on(atom, w);
        match self.minus.get(atom) {
            Some(m) if !b.is_empty() => b.difference(m),
            _ => b,
        }
    }
}

/// `base ∪ plus`.
pub struct PlusView<'a> {
    pub base: &'a dyn LazyInterpretation,
    pub plus: &'a FactStore,
}

impl LazyInterpretation for PlusView<'_> {
    fn atoms_of(&self, predicate: &str) -> Vec<GroundAtom> {
        let mut v = self.base.atoms_of(predicate);
        let extra: Vec<GroundAtom> =
            self.plus.atoms_of(predicate).filter(|a| !self.base.has_atom(a)).cloned().collect();
        if !extra.is_empty() {
            v.extend(extra);
            v.sort();
        }
        v
    }
    fn has_atom(&self, atom: &GroundAtom) -> bool {
        self.base.has_atom(atom) || self.plus.get(atom).is_some()
    }
    fn holds_on(&self, atom: &GroundAtom, w: &Interval<Time>) -> IntervalSet<Time> {
        let b = self.base.holds_on(atom, w);
        match self.plus.get(atom) {
            Some(p) => b.union(&p.restrict(w)),
            None => b,
        }
    }
}

fn unify(terms: &[Term], args: &[Symbol], sigma: &Substitution) -> Option<Substitution> {
    if terms.len() != args.len() {
        return None;
    }
    let mut out = sigma.clone();
    for (t, c) in terms.iter().zip(args.iter()) {
        match t {
            Term::Const(k) => {
                if k != c {
                    return None;
                }
            }
            Term::Var(v) => match out.get(v) {
                Some(bound) if bound != c => return None,
                Some(_) => {}
                None => {
                    out.insert(v.clone(), c.clone());
                }
            },
        }
    }
    Some(out)
}

type RelRef<'a> = (&'a Symbol, &'a [Term]);

fn body_relationals(rule: &Rule) -> (Vec<RelRef<'_>>, Vec<RelRef<'_>>) {
    let mut all = Vec::new();
    let mut required = Vec::new();
    for b in &rule.body {
        b.for_each_relational(true, &mut |p, ts, req| {
            all.push((p, ts));
            if req {
                required.push((p, ts));
            }
        });
    }
    (all, required)
}

fn join(
    required: &[RelRef<'_>],
    full: &dyn LazyInterpretation,
    sigma: Substitution,
    out: &mut BTreeSet<Substitution>,
) {
    let Some(((p, ts), rest)) = required.split_first() else {
        out.insert(sigma);
        return;
    };
    if let Some(g) = ground_relational(p, ts, &sigma) {
        if full.has_atom(&g) {
            join(rest, full, sigma, out);
        }
        return;
    }
    for a in full.atoms_of(p) {
        if let Some(s2) = unify(ts, &a.args, &sigma) {
            join(rest, full, s2, out);
        }
    }
}

/// Ground atom of a head under a substitution.
pub fn head_atom(head: &MetricAtom, sigma: &Substitution) -> GroundAtom {
    let (p, ts) = head.head_relational().expect("validated head");
    ground_relational(p, ts, sigma).expect("safe rule")
}

/// Times at which the relational atom of a head holds, given body times.
pub fn head_times(head: &MetricAtom, body_times: &IntervalSet<Time>) -> IntervalSet<Time> {
    match head {
        MetricAtom::Relational(..) => body_times.clone(),
        MetricAtom::Boxplus(w, m) => head_times(m, &body_times.minkowski_sum(w)),
        MetricAtom::Boxminus(w, m) => head_times(m, &body_times.minkowski_sum(&w.reflect())),
        _ => panic!("invalid head {head}"),
    }
}

/// Least facts making a ground head true at every body time.
pub fn apply_head(head: &MetricAtom, body_times: &IntervalSet<Time>) -> Vec<Fact> {
    let atom = head_atom(head, &Substitution::new());
    head_times(head, body_times).into_intervals().into_iter().map(|i| Fact::new(atom.clone(), i)).collect()
}

fn body_reach(rule: &Rule) -> Time {
    rule.body.iter().map(MetricAtom::depth).max().unwrap_or_else(Time::zero)
}

fn eval_body(rule: &Rule, sigma: &Substitution, lookup: &mut dyn FnMut(&GroundAtom) -> IntervalSet<Time>) -> Truth {
    let mut acc = Truth::Everywhere;
    for b in &rule.body {
        let t = eval_with(&b.substitute(sigma), lookup);
        acc = acc.and(t);
        if matches!(&acc, Truth::Set(s) if s.is_empty()) {
            break;
        }
    }
    acc
}

/// Every substitution with a nonempty body set, with that set.
pub fn ground_rule_matches(r: &Rule, s: &FactStore) -> Vec<(Substitution, IntervalSet<Time>)> {
    let (_, required) = body_relationals(r);
    let mut subs = BTreeSet::new();
    join(&required, s, Substitution::new(), &mut subs);
    let mut out = Vec::new();
    for sigma in subs {
        match eval_body(r, &sigma, &mut |g| s.intervals_of(g)) {
            Truth::Set(x) if !x.is_empty() => out.push((sigma, x)),
            Truth::Set(_) => {}
            Truth::Everywhere => unreachable!("anchored body"),
        }
    }
    out
}

/// One application of every rule, added to the store.
pub fn immediate_consequence(p: &Program, s: &FactStore) -> FactStore {
    let mut out = s.clone();
    for r in p.rules() {
        for (sigma, times) in ground_rule_matches(r, s) {
            let atom = head_atom(&r.head, &sigma);
            out.insert_set(atom, head_times(&r.head, &times)).expect("arity from program");
        }
    }
    out
}

/// Π⟨full ⋮ delta⟩: facts derived where a body holds in `full` but not in `full ∖ delta`.
pub fn seminaive(p: &Program, full: &dyn LazyInterpretation, delta: &FactStore) -> FactStore {
    let mut out = FactStore::new();
    if delta.is_empty() {
        return out;
    }
    let minus = MinusView { base: full, minus: delta };
    for r in p.rules() {
        let (all, required) = body_relationals(r);
        let mut subs = BTreeSet::new();
        for (pred, ts) in &all {
            for a in delta.atoms_of(pred) {
                if let Some(sigma) = unify(ts, &a.args, &Substitution::new()) {
                    join(&required, full, sigma, &mut subs);
                }
            }
        }
        let reach = body_reach(r);
        for sigma in subs {
            // region where the body can change, from the delta content it reads
            let mut hull: Option<Interval<Time>> = None;
            for (pred, ts) in &all {
                let g = ground_relational(pred, ts, &sigma).expect("safe rule");
                if let Some(h) = delta.get(&g).and_then(|s| s.hull()) {
                    hull = Some(match hull {
                        None => h,
                        Some(x) => x.hull(&h),
                    });
                }
            }
            let Some(hull) = hull else { continue };
            let region = hull.widen(&reach);
            let window = region.widen(&reach);
            let with = eval_body(r, &sigma, &mut |g| full.holds_on(g, &window)).within(&region);
            if with.is_empty() {
                continue;
            }
            let without = eval_body(r, &sigma, &mut |g| minus.holds_on(g, &window)).within(&region);
            let diff = with.difference(&without);
            if diff.is_empty() {
                continue;
            }
            let atom = head_atom(&r.head, &sigma);
            out.insert_set(atom, head_times(&r.head, &diff)).expect("arity from program");
        }
    }
    out
}

/// One overdeletion step: facts with a derivation in `full` whose support meets `delta`.
///
/// Unlike [`seminaive`], a body that also holds without `delta` still counts,
/// so facts whose only other support depends on themselves are caught.
pub fn overdelete_step(p: &Program, full: &dyn LazyInterpretation, delta: &FactStore) -> FactStore {
    let mut out = FactStore::new();
    if delta.is_empty() {
        return out;
    }
    for r in p.rules() {
        let (all, required) = body_relationals(r);
        let mut subs = BTreeSet::new();
        for (pred, ts) in &all {
            for a in delta.atoms_of(pred) {
                if let Some(sigma) = unify(ts, &a.args, &Substitution::new()) {
                    join(&required, full, sigma, &mut subs);
                }
            }
        }
        let reach = body_reach(r);
        for sigma in subs {
            let mut hull: Option<Interval<Time>> = None;
            for (pred, ts) in &all {
                let g = ground_relational(pred, ts, &sigma).expect("safe rule");
                if let Some(h) = delta.get(&g).and_then(|s| s.hull()) {
                    hull = Some(match hull {
                        None => h,
                        Some(x) => x.hull(&h),
                    });
                }
            }
            let Some(hull) = hull else { continue };
            let region = hull.widen(&reach);
            let window = region.widen(&reach);
            let mut holds = Truth::Everywhere;
            let mut touched = IntervalSet::empty();
            for b in &r.body {
                let t = eval_touched(&b.substitute(&sigma), &mut |g| full.holds_on(g, &window), &|g| delta.get(g).cloned());
                holds = holds.and(t.holds);
                touched = touched.union(&t.touched);
            }
            let diff = holds.within(&region).intersection(&touched);
            if diff.is_empty() {
                continue;
            }
            let atom = head_atom(&r.head, &sigma);
            out.insert_set(atom, head_times(&r.head, &diff)).expect("arity from program");
        }
    }
    out
}

/// T_Π(full) restricted to the target atoms and their content, over `w`.
///
/// Rules are grounded backwards from the target atoms.
pub fn derive_into(p: &Program, full: &dyn LazyInterpretation, targets: &FactStore, w: &Interval<Time>) -> FactStore {
    let mut out = FactStore::new();
    if targets.is_empty() {
        return out;
    }
    for r in p.rules() {
        let (_, required) = body_relationals(r);
        let (hp, hts) = r.head.head_relational().expect("validated head");
        let reach = body_reach(r);
        let head_reach = r.head.depth();
        let region = w.widen(&head_reach);
        let window = region.widen(&reach);
        let mut subs = BTreeSet::new();
        for a in targets.atoms_of(hp) {
            if let Some(sigma) = unify(hts, &a.args, &Substitution::new()) {
                join(&required, full, sigma, &mut subs);
            }
        }
        for sigma in subs {
            let body = eval_body(r, &sigma, &mut |g| full.holds_on(g, &window)).within(&region);
            if body.is_empty() {
                continue;
            }
            let atom = head_atom(&r.head, &sigma);
            let Some(target) = targets.get(&atom) else { continue };
            let derived = head_times(&r.head, &body).restrict(w).intersection(target);
            out.insert_set(atom, derived).expect("arity from program");
        }
    }
    out
}
