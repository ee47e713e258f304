//! Chronological causal bandits: a sequence of causal multi-armed bandits
//! played on one time-propagated structural causal model, each conditioned on
//! the interventions its predecessors implemented.

pub mod arms;
pub mod engine;
pub mod error;
pub mod inference;
pub mod policies;
pub mod rng;
pub mod scm;
pub mod toy;

#[cfg(test)]
mod oracle;

pub use arms::{Arm, ArmMode, ArmTable, InterventionSet};
pub use engine::{Agent, ChronologicalRun, Estimation, Problem, RunConfig, TrialResult};
pub use error::{Error, Result};
pub use inference::{EstimatedSem, ObservationalDataset, RewardTable, Window};
pub use policies::{PlayTrace, PolicyKind, PolicyState};
pub use scm::{Intervention, Scm, ScmTemplate, UnrolledScm, VarId};
