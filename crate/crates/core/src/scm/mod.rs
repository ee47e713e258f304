//! Discrete structural causal models propagated in time.
//!
//! A [`ScmTemplate`] declares one time slice: endogenous variables, per-slice
//! exogenous noise, and lookup-table mechanisms for slice 0 and for every later
//! slice (which may read lag-1 parents). [`Scm`] is the validated, compiled form
//! and [`UnrolledScm`] lays it out over a horizon with one intervention per slice.

mod config;
mod expr;
mod graph;
mod template;
mod unrolled;

pub use expr::Expr;
pub use graph::CausalDiagram;
pub use template::{
    validate_template, Domain, ExoId, ExogenousSpec, Intervention, Issue, Lag, Parent, Regime,
    ScmTemplate, StructuralTable, ValidationReport, Value, VarId, Variable,
};
pub use unrolled::{unroll, Node, SampleScratch, Scm, Trajectory, UnrolledGraph, UnrolledScm};

pub(crate) use config::for_each_assignment;
