//! Chronological orchestration: each trial's bandit is conditioned on the
//! interventions implemented before it, plays to its horizon, and hands its
//! most-played arm to the next trial.

use std::sync::Arc;

use rayon::prelude::*;

use crate::arms::ArmTable;
use crate::error::{Error, Result};
use crate::inference::{
    conditioned_scm, exact_reward_table, fit_structural_pmfs, fitted_reward_table,
    generate_observational, EstimatedSem, RewardTable, Window,
};
use crate::policies::{
    cumulative_regret, decomposed_regret, play_trial, Environment, PlayTrace, PolicyKind,
    PolicyState, RewardSampler,
};
use crate::rng::{stream, Purpose};
use crate::scm::{Intervention, Scm, UnrolledScm};

/// The agent's transfer model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimation {
    /// The agent knows the true mechanisms.
    OracleSem,
    /// Mechanisms fitted from `samples` observational trajectories.
    Observational { samples: usize, smoothing: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RewardSampling {
    /// Bernoulli draws from the tabulated arm means.
    #[default]
    Table,
    /// A full model run per pull; only available with the true mechanisms.
    Scm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Agent {
    Ccb,
    /// Memoryless causal bandit: always plays against the trial-0 model.
    ScmMab,
}

impl Agent {
    pub fn name(&self) -> &'static str {
        match self {
            Agent::Ccb => "ccb",
            Agent::ScmMab => "scm-mab",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Horizon of each trial; its length is the number of trials.
    pub horizons: Vec<usize>,
    pub policy: PolicyKind,
    pub window: Window,
    pub estimation: Estimation,
    pub sampling: RewardSampling,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(trials: usize, horizon: usize, policy: PolicyKind, seed: u64) -> Self {
        Self {
            horizons: vec![horizon; trials],
            policy,
            window: Window::Lag1,
            estimation: Estimation::OracleSem,
            sampling: RewardSampling::Table,
            seed,
        }
    }

    pub fn trials(&self) -> usize {
        self.horizons.len()
    }

    fn check(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::ZeroHorizon);
        }
        if u16::try_from(self.horizons.len()).is_err() {
            return Err(Error::Config("at most 65535 trials".into()));
        }
        if self.sampling == RewardSampling::Scm && self.estimation != Estimation::OracleSem {
            return Err(Error::Config(
                "per-pull model sampling needs the true mechanisms (estimation = oracle)".into(),
            ));
        }
        Ok(())
    }
}

/// A model together with the arms played on it.
#[derive(Clone, Debug)]
pub struct Problem {
    pub scm: Arc<Scm>,
    pub arms: ArmTable,
}

#[derive(Clone, Debug)]
pub enum TransferModel {
    True(Arc<Scm>),
    Fitted(Box<EstimatedSem>),
}

/// Conditional mean of every arm given the implemented history.
pub fn conditional_reward_env(
    model: &TransferModel,
    arms: &ArmTable,
    history: &[Intervention],
    window: Window,
) -> Result<RewardTable> {
    match model {
        TransferModel::True(scm) => exact_reward_table(scm, arms, history, window),
        TransferModel::Fitted(fhat) => fitted_reward_table(fhat, arms, history, window),
    }
}

/// Builds the agent's transfer model for one replicate.
pub fn transfer_model(problem: &Problem, config: &RunConfig, replicate: u32) -> Result<TransferModel> {
    match config.estimation {
        Estimation::OracleSem => Ok(TransferModel::True(Arc::clone(&problem.scm))),
        Estimation::Observational { samples, smoothing } => {
            let slices = config.trials().max(2);
            let unrolled = UnrolledScm::new(Arc::clone(&problem.scm), slices)?;
            let mut rng = stream(config.seed, replicate, Purpose::Observational, 0);
            let data = generate_observational(&unrolled, samples, &mut rng)?;
            let fhat = fit_structural_pmfs(&data, problem.scm.template(), smoothing)?;
            Ok(TransferModel::Fitted(Box::new(fhat)))
        }
    }
}

/// Most-played arm, lowest id on ties.
pub fn select_implemented_intervention(counts: &[u64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (a, &n) in counts.iter().enumerate() {
        if best.map_or(true, |b| n > counts[b]) {
            best = Some(a);
        }
    }
    best.ok_or(Error::NoArms)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    /// The environment the implemented history actually produced.
    pub true_table: RewardTable,
    /// The means the agent's rewards were drawn from.
    pub agent_table: RewardTable,
    pub trace: PlayTrace,
    pub counts: Vec<u64>,
    pub implemented: usize,
}

impl TrialResult {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        cumulative_regret(&self.trace, &self.true_table.means)
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret().last().copied().unwrap_or(0.0)
    }

    pub fn decomposed_regret(&self) -> f64 {
        decomposed_regret(&self.counts, &self.true_table.means)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChronologicalRun {
    pub agent: Agent,
    pub replicate: u32,
    pub config: RunConfig,
    pub trials: Vec<TrialResult>,
}

impl ChronologicalRun {
    pub fn implemented(&self) -> Vec<usize> {
        self.trials.iter().map(|t| t.implemented).collect()
    }
}

fn sampler_for(
    problem: &Problem,
    config: &RunConfig,
    table: &RewardTable,
    history: &[Intervention],
) -> Result<RewardSampler> {
    Ok(match config.sampling {
        RewardSampling::Table => RewardSampler::Table(table.means.clone()),
        RewardSampling::Scm => RewardSampler::scm(
            problem
                .arms
                .arms()
                .iter()
                .map(|a| conditioned_scm(&problem.scm, &a.intervention, history, config.window))
                .collect::<Result<_>>()?,
        ),
    })
}

/// Plays every trial of one replicate.
pub fn run_chronological(
    problem: &Problem,
    config: &RunConfig,
    agent: Agent,
    replicate: u32,
) -> Result<ChronologicalRun> {
    config.check()?;
    if problem.arms.is_empty() {
        return Err(Error::NoArms);
    }
    let model = transfer_model(problem, config, replicate)?;
    let baseline = match agent {
        Agent::ScmMab => Some(conditional_reward_env(&model, &problem.arms, &[], config.window)?),
        Agent::Ccb => None,
    };
    let mut history: Vec<Intervention> = Vec::with_capacity(config.trials());
    let mut trials = Vec::with_capacity(config.trials());
    for (i, &horizon) in config.horizons.iter().enumerate() {
        let true_table = exact_reward_table(&problem.scm, &problem.arms, &history, config.window)?;
        let (agent_table, agent_history) = match (&baseline, &model) {
            (Some(b), _) => (b.clone(), &[][..]),
            (None, TransferModel::True(_)) => (true_table.clone(), history.as_slice()),
            (None, m) => (
                conditional_reward_env(m, &problem.arms, &history, config.window)?,
                history.as_slice(),
            ),
        };
        let mut env = Environment {
            sampler: sampler_for(problem, config, &agent_table, agent_history)?,
            means: true_table.means.clone(),
        };
        let mut policy = PolicyState::new(config.policy, problem.arms.len())?;
        let mut rng = stream(config.seed, replicate, Purpose::Play, i as u16);
        let trace = play_trial(&mut env, &mut policy, horizon, &mut rng)?;
        let counts = policy.counts().to_vec();
        let implemented = select_implemented_intervention(&counts)?;
        history.push(problem.arms.arms()[implemented].intervention.clone());
        trials.push(TrialResult {
            index: i,
            true_table,
            agent_table,
            trace,
            counts,
            implemented,
        });
    }
    Ok(ChronologicalRun {
        agent,
        replicate,
        config: config.clone(),
        trials,
    })
}

pub fn run_ccb(problem: &Problem, config: &RunConfig, replicate: u32) -> Result<ChronologicalRun> {
    run_chronological(problem, config, Agent::Ccb, replicate)
}

pub fn run_scm_mab_baseline(
    problem: &Problem,
    config: &RunConfig,
    replicate: u32,
) -> Result<ChronologicalRun> {
    run_chronological(problem, config, Agent::ScmMab, replicate)
}

/// Replicates `0..replicates` on the current rayon pool, in replicate order.
pub fn run_replicates(
    problem: &Problem,
    config: &RunConfig,
    agent: Agent,
    replicates: u32,
) -> Result<Vec<ChronologicalRun>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| run_chronological(problem, config, agent, r))
        .collect()
}

/// Per-trial reward tables and their best arms.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillationReport {
    pub tables: Vec<RewardTable>,
    pub argmax: Vec<usize>,
}

impl OscillationReport {
    /// The interventions behind each trial's best arm.
    pub fn best_interventions<'a>(&self, arms: &'a ArmTable) -> Vec<&'a Intervention> {
        self.argmax.iter().map(|&a| &arms.arms()[a].intervention).collect()
    }
}

/// Exact-selection recursion: every trial implements its true best arm.
pub fn oracle_sequence(problem: &Problem, trials: usize, window: Window) -> Result<OscillationReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let mut history = Vec::with_capacity(trials);
    let mut tables = Vec::with_capacity(trials);
    let mut argmax = Vec::with_capacity(trials);
    for _ in 0..trials {
        let table = exact_reward_table(&problem.scm, &problem.arms, &history, window)?;
        let best = table.argmax().ok_or(Error::NoArms)?;
        history.push(problem.arms.arms()[best].intervention.clone());
        tables.push(table);
        argmax.push(best);
    }
    Ok(OscillationReport { tables, argmax })
}

/// True conditional tables of a played run and their best arms.
pub fn oscillation_report(run: &ChronologicalRun) -> OscillationReport {
    let tables: Vec<RewardTable> = run.trials.iter().map(|t| t.true_table.clone()).collect();
    let argmax = tables
        .iter()
        .map(|t| t.argmax().expect("non-empty arm table"))
        .collect();
    OscillationReport { tables, argmax }
}

/// Across-replicate statistics of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    pub replicates: usize,
    /// Mean and sample standard deviation of cumulative regret after each round.
    pub mean_regret: Vec<f64>,
    pub sd_regret: Vec<f64>,
    /// Share of replicates playing a best arm at each round.
    pub optimal_prob: Vec<f64>,
}

impl TrialSummary {
    pub fn final_mean(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    /// Standard error of the final mean.
    pub fn final_se(&self) -> f64 {
        self.sd_regret.last().copied().unwrap_or(0.0) / (self.replicates as f64).sqrt()
    }
}

/// Tolerance under which an arm counts as optimal.
pub const OPTIMAL_GAP: f64 = 1e-12;

pub fn summarize(runs: &[ChronologicalRun]) -> Vec<TrialSummary> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    (0..first.trials.len())
        .map(|i| {
            let rounds = first.trials[i].trace.len();
            let mut sum = vec![0.0; rounds];
            let mut sum_sq = vec![0.0; rounds];
            let mut optimal = vec![0.0; rounds];
            for run in runs {
                let trial = &run.trials[i];
                let gaps = trial.true_table.gaps();
                for (k, r) in trial.cumulative_regret().into_iter().enumerate() {
                    sum[k] += r;
                    sum_sq[k] += r * r;
                }
                for (k, &a) in trial.trace.arms.iter().enumerate() {
                    if gaps[a as usize] <= OPTIMAL_GAP {
                        optimal[k] += 1.0;
                    }
                }
            }
            let mean_regret: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let sd_regret = sum_sq
                .iter()
                .zip(&mean_regret)
                .map(|(sq, m)| {
                    if runs.len() < 2 {
                        0.0
                    } else {
                        ((sq - n * m * m) / (n - 1.0)).max(0.0).sqrt()
                    }
                })
                .collect();
            TrialSummary {
                trial: i,
                replicates: runs.len(),
                mean_regret,
                sd_regret,
                optimal_prob: optimal.iter().map(|c| c / n).collect(),
            }
        })
        .collect()
}
