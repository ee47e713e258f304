//! Command-line runner for chronological causal bandit experiments.
//!
//! The binary is a thin wrapper over [`main_with_args`], which the integration
//! tests drive in-process.

pub mod config;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ccb_core::arms::{check_mis_time_invariance, ArmMode};
use ccb_core::engine::{oracle_sequence, run_replicates, Agent};
use ccb_core::inference::monte_carlo_mean;
use ccb_core::rng::{stream, Purpose};
use clap::{Args, Parser, Subcommand};

pub use config::{Experiment, ExperimentConfig, PolicyName, RunMode};

#[derive(Debug, Parser)]
#[command(name = "ccb", version, about = "Chronological causal bandit experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model, MIS time-invariance, POMIS membership and Monte Carlo agreement.
    Validate(Common),
    /// Write the arm table.
    Arms(Common),
    /// Write exact per-trial reward tables along the exact-selection path.
    Rewards(Common),
    /// Run replicated chronological bandits and the SCM-MAB baseline.
    Run(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<u32>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyName>,
    #[arg(long, value_enum)]
    pub mode: Option<RunMode>,
    /// Arm catalogue: all, mis or pomis.
    #[arg(long)]
    pub arms: Option<ArmMode>,
    /// Also write one round-by-round trace CSV per replicate and trial.
    #[arg(long)]
    pub traces: bool,
}

/// Validation found a problem with the model or configuration.
#[derive(Debug)]
pub struct ValidationFailed(pub String);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "validation failed: {}", self.0)
    }
}

impl std::error::Error for ValidationFailed {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

/// Exit code for an error: 2 for structural model problems, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ValidationFailed>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<ccb_core::Error>() {
            if matches!(e, ccb_core::Error::InvalidTemplate(_) | ccb_core::Error::NotMis(_)) {
                return EXIT_VALIDATION;
            }
        }
    }
    EXIT_CONFIG
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

impl Common {
    fn experiment(&self) -> Result<Experiment> {
        let (mut config, base) = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(r) = self.replicates {
            config.replicates = r;
        }
        if let Some(t) = self.trials {
            config.trials = t;
        }
        if let Some(j) = self.jobs {
            config.jobs = Some(j);
        }
        if let Some(p) = self.policy {
            config.policy.kind = p;
        }
        if let Some(m) = self.mode {
            config.mode = m;
        }
        if let Some(a) = self.arms {
            config.arms.mode = a;
        }
        config.traces |= self.traces;
        let mut exp = Experiment::resolve(config, &base)?;
        if let Some(out) = &self.out {
            exp.out = out.clone();
            exp.config.out = out.clone();
        }
        Ok(exp)
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => cmd_validate(&c.experiment()?),
        Command::Arms(c) => cmd_arms(&c.experiment()?),
        Command::Rewards(c) => cmd_rewards(&c.experiment()?),
        Command::Run(c) => cmd_run(&c.experiment()?),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    Ok(builder.build().context("starting worker pool")?.install(f))
}

/// Monte Carlo sample size of the validation cross-check.
pub const VALIDATE_MC_SAMPLES: usize = 100_000;

pub fn cmd_validate(exp: &Experiment) -> Result<()> {
    let mut failures = Vec::new();
    let report = ccb_core::scm::validate_template(&exp.template);
    if report.is_ok() {
        println!("ok    template");
    } else {
        println!("FAIL  template\n{report}");
        return Err(ValidationFailed(format!("template invalid\n{report}")).into());
    }

    let slices = exp.config.trials.max(2);
    let invariance = check_mis_time_invariance(&exp.template, slices)?;
    if invariance.invariant() {
        println!("ok    MIS identical across {slices} slices");
    } else {
        println!("FAIL  MIS differ from slice 0 at slices {:?}", invariance.mismatched);
        failures.push("MIS not time-invariant".to_string());
    }

    let problem = match exp.problem() {
        Ok(p) => {
            println!("ok    arm table ({} arms, mode {})", p.arms.len(), p.arms.mode());
            p
        }
        Err(e) => {
            println!("FAIL  arm table: {e:#}");
            return Err(ValidationFailed(format!("arm table: {e:#}")).into());
        }
    };
    if problem.arms.is_empty() {
        println!("FAIL  arm table is empty");
        return Err(ValidationFailed("arm table is empty".into()).into());
    }

    let window = exp.config.window;
    let sequence = oracle_sequence(&problem, exp.config.trials, window)?;
    let mut history = Vec::new();
    let mut checked = 0;
    let mut outliers = Vec::new();
    for (i, table) in sequence.tables.iter().enumerate() {
        let results = with_pool(exp.config.jobs, || {
            use rayon::prelude::*;
            problem
                .arms
                .arms()
                .par_iter()
                .map(|arm| {
                    let mut rng = stream(exp.config.seed, arm.id as u32, Purpose::MonteCarlo, i as u16);
                    monte_carlo_mean(&problem.scm, &arm.intervention, &history, window, VALIDATE_MC_SAMPLES, &mut rng)
                })
                .collect::<ccb_core::Result<Vec<_>>>()
        })??;
        for (arm, est) in problem.arms.arms().iter().zip(results) {
            checked += 1;
            let exact = table.means[arm.id];
            let tol = 4.0 * est.se.max(1.0 / VALIDATE_MC_SAMPLES as f64);
            if (est.mean - exact).abs() > tol {
                outliers.push(format!(
                    "trial {i} {}: mc {} vs exact {exact}",
                    arm.intervention.describe(&exp.template),
                    est.mean
                ));
            }
        }
        history.push(problem.arms.arms()[sequence.argmax[i]].intervention.clone());
    }
    if outliers.is_empty() {
        println!("ok    Monte Carlo within 4 SE of exact for {checked} arm-trial cells");
    } else {
        for o in &outliers {
            println!("FAIL  {o}");
        }
        failures.push(format!("{} Monte Carlo outliers", outliers.len()));
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(ValidationFailed(failures.join("; ")).into())
    }
}

pub fn cmd_arms(exp: &Experiment) -> Result<()> {
    let arms = exp.arm_table()?;
    prepare_out(&exp.out)?;
    let path = exp.out.join("arms.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    arms.write_csv(&exp.template, file)?;
    exp.write_manifest(&exp.out, "arms")?;
    println!("{} arms ({}) -> {}", arms.len(), arms.mode(), path.display());
    Ok(())
}

pub fn cmd_rewards(exp: &Experiment) -> Result<()> {
    let problem = exp.problem()?;
    let report = oracle_sequence(&problem, exp.config.trials, exp.config.window)?;
    prepare_out(&exp.out)?;
    output::write_rewards(&exp.out, &exp.template, &problem.arms, &report)?;
    exp.write_manifest(&exp.out, "rewards")?;
    for (i, (&a, table)) in report.argmax.iter().zip(&report.tables).enumerate() {
        println!(
            "trial {i}: {} mu={}",
            problem.arms.arms()[a].intervention.describe(&exp.template),
            table.means[a]
        );
    }
    Ok(())
}

pub fn cmd_run(exp: &Experiment) -> Result<()> {
    let problem = exp.problem()?;
    let run_config = exp.config.run_config()?;
    let agents: &[Agent] = match exp.config.mode {
        RunMode::Ccb => &[Agent::Ccb],
        RunMode::ScmMab => &[Agent::ScmMab],
        RunMode::Both => &[Agent::Ccb, Agent::ScmMab],
    };
    let mut results = Vec::new();
    for &agent in agents {
        let runs = with_pool(exp.config.jobs, || {
            run_replicates(&problem, &run_config, agent, exp.config.replicates)
        })??;
        results.push((agent, runs));
    }
    prepare_out(&exp.out)?;
    output::write_run(&exp.out, exp, &problem, &results)?;
    exp.write_manifest(&exp.out, "run")?;
    for (agent, runs) in &results {
        for s in ccb_core::engine::summarize(runs) {
            println!(
                "{} trial {}: final cumulative regret {:.3} ± {:.3} (se), optimal-arm share at last round {:.3}",
                agent.name(),
                s.trial,
                s.final_mean(),
                s.final_se(),
                s.optimal_prob.last().copied().unwrap_or(0.0)
            );
        }
    }
    Ok(())
}
