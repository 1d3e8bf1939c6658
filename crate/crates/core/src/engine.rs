//! Materialisation, incremental maintenance (delete/rederive/insert) and entailment.

use std::time::{Duration, Instant};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::eval::{derive_into, overdelete_step, seminaive, LazyInterpretation, PlusView};
use crate::periodic::{periodic_minus, periodic_union, PeriodSearch, PeriodicMaterialisation};
use crate::store::FactStore;
use crate::syntax::{ruler_points_from_residues, ruler_residues, Fact, Program};
use crate::temporal::Interval;
use crate::Time;

pub const DEFAULT_STAGE_CAP: usize = 10_000;
pub const STAGE_CAP_VAR: &str = "DMTL_STAGE_CAP";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("{stage}: no saturation after {rounds} rounds (round budget {budget})")]
    BudgetExceeded { stage: Stage, rounds: usize, budget: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Materialise,
    Overdelete,
    Rederive,
    Insert,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Materialise => "materialise",
            Stage::Overdelete => "overdelete",
            Stage::Rederive => "rederive",
            Stage::Insert => "insert",
        })
    }
}

/// Round limits for one stage.
///
/// `k_max` follows the saturation bound `w = C + B·C·(2^A)^B` and saturates at
/// `u128::MAX`; the practical limit is `min(k_max, cap)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaturationBudget {
    pub k_max: u128,
    pub cap: usize,
}

impl SaturationBudget {
    /// Budget for a program and dataset; `cap` from `DMTL_STAGE_CAP` if set.
    pub fn for_inputs(p: &Program, e: &FactStore, reference: Option<&Interval<Time>>) -> Self {
        let cap = std::env::var(STAGE_CAP_VAR)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_STAGE_CAP);
        SaturationBudget { k_max: k_max(p, e, reference), cap }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn limit(&self) -> u128 {
        self.k_max.min(self.cap as u128)
    }
}

fn k_max(p: &Program, e: &FactStore, reference: Option<&Interval<Time>>) -> u128 {
    let mut consts = e.constants();
    consts.extend(p.constants());
    let c = consts.len().max(1) as u128;
    let mut a: u128 = 0;
    let mut preds = std::collections::BTreeMap::new();
    for (atom, _) in e.iter() {
        preds.insert(atom.predicate.clone(), atom.arity());
    }
    for r in p.rules() {
        r.head.for_each_relational(true, &mut |pr, ts, _| {
            preds.insert(pr.clone(), ts.len());
        });
        for b in &r.body {
            b.for_each_relational(true, &mut |pr, ts, _| {
                preds.insert(pr.clone(), ts.len());
            });
        }
    }
    for arity in preds.values() {
        a = a.saturating_add(c.checked_pow(*arity as u32).unwrap_or(u128::MAX));
    }
    let residues = ruler_residues(p.div(), e.endpoints());
    let (lo, _) = e.span().unwrap_or_else(|| (Time::zero(), Time::zero()));
    let two_d = p.depth() + p.depth();
    let pts = ruler_points_from_residues(p.div(), &residues, &Interval::closed(lo.clone(), &lo + &two_d)).len();
    let b = (2 * pts).max(1) as u128;
    let cc = match reference {
        Some(r) => ((r.len() / p.div()).to_integer().try_into().unwrap_or(u64::MAX) as u128)
            .saturating_mul(residues.len() as u128)
            .max(1),
        None => 1,
    };
    let pow = (|| {
        let two_a = 2u128.checked_pow(u32::try_from(a).ok()?)?;
        two_a.checked_pow(u32::try_from(b).ok()?)
    })()
    .unwrap_or(u128::MAX);
    cc.saturating_add(b.saturating_mul(cc).saturating_mul(pow))
}

/// What one update stage did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageReport {
    /// Facts (maximal intervals) in the stage store.
    pub facts: usize,
    pub rounds: usize,
    pub duration: Duration,
    pub periods: Option<(Interval<Time>, Interval<Time>)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateReport {
    pub overdelete: StageReport,
    pub rederive: StageReport,
    pub insert: StageReport,
    /// Stage stores, exposed so callers can audit the counts.
    pub deleted: FactStore,
    pub rederived: FactStore,
    pub added: FactStore,
}

impl UpdateReport {
    pub fn d_count(&self) -> usize {
        self.overdelete.facts
    }
    pub fn r_count(&self) -> usize {
        self.rederive.facts
    }
    pub fn a_count(&self) -> usize {
        self.insert.facts
    }
    pub fn total_duration(&self) -> Duration {
        self.overdelete.duration + self.rederive.duration + self.insert.duration
    }
}

fn check_budget(stage: Stage, rounds: usize, budget: &SaturationBudget) -> Result<(), EngineError> {
    if rounds as u128 > budget.limit() {
        return Err(EngineError::BudgetExceeded { stage, rounds, budget: budget.limit() });
    }
    Ok(())
}

/// Periodic materialisation of the canonical model of `p` and `e`.
pub fn materialise(p: &Program, e: &FactStore) -> Result<PeriodicMaterialisation, EngineError> {
    materialise_with(p, e, &SaturationBudget::for_inputs(p, e, None)).map(|(m, _)| m)
}

/// As [`materialise`], also returning the number of rounds.
pub fn materialise_with(
    p: &Program,
    e: &FactStore,
    budget: &SaturationBudget,
) -> Result<(PeriodicMaterialisation, usize), EngineError> {
    let search = PeriodSearch::new(p, e);
    let mut s = FactStore::new();
    let mut n = e.clone();
    let mut rounds = 0;
    loop {
        let delta = n.difference(&s);
        if let Some((l, r)) = search.find(&s, &delta) {
            let m = PeriodicMaterialisation::new(s, Some(l), Some(r)).expect("periods have the right shape");
            return Ok((m, rounds));
        }
        rounds += 1;
        check_budget(Stage::Materialise, rounds, budget)?;
        s.union_with(&delta);
        n = seminaive(p, &s, &delta);
    }
}

/// Same as materialising the updated dataset from scratch.
pub fn rematerialise(p: &Program, new_e: &FactStore) -> Result<PeriodicMaterialisation, EngineError> {
    materialise(p, new_e)
}

/// `n` minus the unfolding of `m`, atom by atom.
fn minus_unfolding(n: &FactStore, m: &dyn LazyInterpretation) -> FactStore {
    let mut out = FactStore::new();
    for (a, s) in n.iter() {
        let hull = s.hull().expect("nonempty");
        let have = m.holds_on(a, &hull);
        out.set(a.clone(), s.difference(&have));
    }
    out
}

/// Incremental update of `m` (for `e`) by deleting `e_minus` and adding `e_plus`.
pub fn dred_update(
    p: &Program,
    e: FactStore,
    m: PeriodicMaterialisation,
    e_minus: &FactStore,
    e_plus: &FactStore,
) -> Result<(PeriodicMaterialisation, FactStore, UpdateReport), EngineError> {
    let started = Instant::now();
    let budget = SaturationBudget::for_inputs(p, &e, m.right());
    let search = PeriodSearch::new(p, &e).with_reference(m.left(), m.right());
    let e_minus = e_minus.intersection(&e).difference(e_plus);
    let e_plus = minus_unfolding(e_plus, &e);
    let mut report = UpdateReport::default();
    let depth = p.depth().clone();
    let two_d = &depth + &depth;

    // overdeletion; its timing includes the shared setup above
    let mut d = FactStore::new();
    let mut n = e_minus.clone();
    let mut rounds = 0;
    let deleted = loop {
        let delta = n.difference(&d);
        if let Some((l, r)) = search.find(&d, &delta) {
            report.overdelete.periods = Some((l.clone(), r.clone()));
            break PeriodicMaterialisation::new(d.clone(), Some(l), Some(r)).expect("period shape");
        }
        rounds += 1;
        check_budget(Stage::Overdelete, rounds, &budget)?;
        n = overdelete_step(p, &m, &delta);
        d.union_with(&delta);
    };
    let m = periodic_minus(m, deleted.clone());
    report.overdelete.rounds = rounds;
    report.overdelete.facts = d.fact_count();
    report.overdelete.duration = started.elapsed();
    report.deleted = d;

    // rederivation
    let started = Instant::now();
    let mut kept = e;
    kept.subtract(&e_minus);
    let base = search.with_reference(m.left(), m.right());
    let (data_lo, data_hi) = base.span.clone();
    let anchor_l = m.left().map(|l| l.hi().clone()).unwrap_or_else(|| data_lo.clone());
    let anchor_r = m.right().map(|r| r.lo().clone()).unwrap_or_else(|| data_hi.clone());
    let step_l = m.left().map(|l| l.len()).unwrap_or_else(|| p.div().clone()).max(two_d.clone());
    let step_r = m.right().map(|r| r.len()).unwrap_or_else(|| p.div().clone()).max(two_d.clone());
    let mut r_store = FactStore::new();
    let mut n = FactStore::new();
    let mut k = Time::one();
    let mut rounds = 0;
    let rederived = if report.deleted.is_empty() {
        PeriodicMaterialisation::bounded(FactStore::new())
    } else {
        loop {
            let t_l = &anchor_l - &k * &step_l;
            let t_r = &anchor_r + &k * &step_r;
            let w = Interval::closed(t_l.clone(), t_r.clone());
            let targets = deleted.unfold_window(&w);
            n.union_with(&derive_into(p, &m, &targets, &w));
            n.union_with(&targets.intersection(&kept));
            let delta = minus_unfolding(&n.difference(&r_store), &m);
            let mut search = base.clone();
            search.outer = Some(w);
            if let Some((l, r)) = search.find(&r_store, &delta) {
                report.rederive.periods = Some((l.clone(), r.clone()));
                break PeriodicMaterialisation::new(r_store.clone(), Some(l), Some(r)).expect("period shape");
            }
            rounds += 1;
            check_budget(Stage::Rederive, rounds, &budget)?;
            r_store.union_with(&delta);
            k += Time::one();
            n = seminaive(p, &PlusView { base: &m, plus: &r_store }, &delta);
        }
    };
    let m = periodic_union(m, rederived);
    report.rederive.rounds = rounds;
    report.rederive.facts = r_store.fact_count();
    report.rederive.duration = started.elapsed();
    report.rederived = r_store;

    // insertion
    let started = Instant::now();
    let mut new_e = kept;
    new_e.union_with(&e_plus);
    let search = PeriodSearch::new(p, &new_e).with_reference(m.left(), m.right());
    let mut a = FactStore::new();
    let mut n = e_plus.clone();
    let mut rounds = 0;
    let added = loop {
        let delta = minus_unfolding(&n.difference(&a), &m);
        if let Some((l, r)) = search.find(&a, &delta) {
            report.insert.periods = Some((l.clone(), r.clone()));
            break PeriodicMaterialisation::new(a.clone(), Some(l), Some(r)).expect("period shape");
        }
        rounds += 1;
        check_budget(Stage::Insert, rounds, &budget)?;
        a.union_with(&delta);
        n = seminaive(p, &PlusView { base: &m, plus: &a }, &delta);
    };
    let m = periodic_union(m, added);
    report.insert.rounds = rounds;
    report.insert.facts = a.fact_count();
    report.insert.duration = started.elapsed();
    report.added = a;

    Ok((m, new_e, report))
}

/// Whether the unfolding of `m` satisfies `f`.
pub fn entails(m: &PeriodicMaterialisation, f: &Fact) -> bool {
    m.atom_window(&f.atom, &f.interval).covers(&f.interval)
}
