//! Datalog with metric temporal operators over the rational timeline.
//!
//! Materialisation is periodic: a finite core plus a left and a right period
//! that repeat forever. Updates are applied incrementally by overdeleting,
//! rederiving and inserting, each stage producing its own periodic store.

pub mod engine;
pub mod eval;
pub mod oracle;
pub mod periodic;
pub mod store;
pub mod syntax;
pub mod temporal;

/// Time points: exact rationals.
pub type Time = num_rational::BigRational;
/// Intervals over [`Time`].
pub type TimeInterval = temporal::Interval<Time>;
/// Interval sets over [`Time`].
pub type TimeSet = temporal::IntervalSet<Time>;

pub use engine::{dred_update, entails, materialise, rematerialise, EngineError, SaturationBudget, UpdateReport};
pub use eval::{eval_atom, immediate_consequence, seminaive};
pub use periodic::{equivalent, ext, aln, periodic_minus, periodic_union, PeriodicMaterialisation};
pub use store::{FactStore, GroundAtom};
pub use syntax::{parse_dataset, parse_fact, parse_program, Fact, MetricAtom, Program, Rule};
pub use temporal::{Interval, IntervalSet};
