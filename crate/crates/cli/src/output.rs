//! CSV and text artefacts written by `rewards` and `run`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ccb_core::engine::{summarize, transfer_model, Agent, OscillationReport, TransferModel};
use ccb_core::inference::estimation_report;
use ccb_core::{ArmTable, ChronologicalRun, Intervention, Problem, ScmTemplate};

use crate::config::{EstimationKind, Experiment};

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_rewards(
    out: &Path,
    template: &ScmTemplate,
    arms: &ArmTable,
    report: &OscillationReport,
) -> Result<()> {
    let mut w = writer(&out.join("rewards.csv"))?;
    w.write_record(["trial", "arm_id", "arm", "mean", "argmax"])?;
    for (trial, table) in report.tables.iter().enumerate() {
        for arm in arms.arms() {
            w.write_record([
                trial.to_string(),
                arm.id.to_string(),
                arm.intervention.describe(template),
                table.means[arm.id].to_string(),
                u8::from(report.argmax[trial] == arm.id).to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(&out.join("sequence.csv"))?;
    w.write_record(["trial", "arm_id", "arm", "variables", "values"])?;
    for (trial, &a) in report.argmax.iter().enumerate() {
        let arm = &arms.arms()[a];
        let (vars, values) = arms.columns(arm);
        let names: Vec<&str> = vars.iter().map(|&v| template.name(v)).collect();
        w.write_record([
            trial.to_string(),
            a.to_string(),
            arm.intervention.describe(template),
            names.join(";"),
            join(&values),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run(
    out: &Path,
    exp: &Experiment,
    problem: &Problem,
    results: &[(Agent, Vec<ChronologicalRun>)],
) -> Result<()> {
    let template = &exp.template;

    let mut curves = writer(&out.join("regret_curves.csv"))?;
    curves.write_record(["agent", "trial", "round", "mean_cum_regret", "sd_cum_regret"])?;
    let mut optimal = writer(&out.join("optimal_arm_prob.csv"))?;
    optimal.write_record(["agent", "trial", "round", "prob"])?;
    let mut summary = String::new();
    for (agent, runs) in results {
        for s in summarize(runs) {
            for (round, (m, sd)) in s.mean_regret.iter().zip(&s.sd_regret).enumerate() {
                curves.write_record([
                    agent.name().to_string(),
                    s.trial.to_string(),
                    (round + 1).to_string(),
                    m.to_string(),
                    sd.to_string(),
                ])?;
            }
            for (round, p) in s.optimal_prob.iter().enumerate() {
                optimal.write_record([
                    agent.name().to_string(),
                    s.trial.to_string(),
                    (round + 1).to_string(),
                    p.to_string(),
                ])?;
            }
            summary.push_str(&format!(
                "{} trial {}: replicates {} final_mean_regret {} final_se {}\n",
                agent.name(),
                s.trial,
                s.replicates,
                s.final_mean(),
                s.final_se()
            ));
        }
    }
    curves.flush()?;
    optimal.flush()?;

    let mut trials = writer(&out.join("trials.csv"))?;
    trials.write_record([
        "agent",
        "replicate",
        "trial",
        "implemented_arm",
        "implemented",
        "final_regret",
        "decomposed_regret",
        "counts",
    ])?;
    let mut tables = writer(&out.join("reward_tables.csv"))?;
    tables.write_record(["agent", "replicate", "trial", "arm_id", "arm", "true_mean", "agent_mean"])?;
    for (agent, runs) in results {
        for run in runs {
            for t in &run.trials {
                trials.write_record([
                    agent.name().to_string(),
                    run.replicate.to_string(),
                    t.index.to_string(),
                    t.implemented.to_string(),
                    problem.arms.arms()[t.implemented].intervention.describe(template),
                    t.final_regret().to_string(),
                    t.decomposed_regret().to_string(),
                    join(&t.counts),
                ])?;
                for arm in problem.arms.arms() {
                    tables.write_record([
                        agent.name().to_string(),
                        run.replicate.to_string(),
                        t.index.to_string(),
                        arm.id.to_string(),
                        arm.intervention.describe(template),
                        t.true_table.means[arm.id].to_string(),
                        t.agent_table.means[arm.id].to_string(),
                    ])?;
                }
                if exp.config.traces {
                    let dir = out.join("traces");
                    fs::create_dir_all(&dir)?;
                    let path = dir.join(format!("{}_r{}_t{}.csv", agent.name(), run.replicate, t.index));
                    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    t.trace.write_csv(&t.true_table.means, file)?;
                }
            }
        }
    }
    trials.flush()?;
    tables.flush()?;

    if exp.config.estimation.kind == EstimationKind::Observational {
        write_estimation(out, problem, results)?;
    }

    fs::write(out.join("summary.txt"), summary).context("writing summary.txt")?;
    Ok(())
}

/// Fitted-versus-true comparison for replicate 0, along the history the first
/// agent implemented.
fn write_estimation(
    out: &Path,
    problem: &Problem,
    results: &[(Agent, Vec<ChronologicalRun>)],
) -> Result<()> {
    let Some(run) = results.first().and_then(|(_, runs)| runs.first()) else {
        return Ok(());
    };
    let TransferModel::Fitted(fhat) = transfer_model(problem, &run.config, run.replicate)? else {
        return Ok(());
    };
    let mut w = writer(&out.join("estimation_report.csv"))?;
    w.write_record(["trial", "arm_id", "arm", "exact", "fitted", "bias", "confounded"])?;
    let mut history: Vec<Intervention> = Vec::new();
    for t in &run.trials {
        for row in estimation_report(&problem.scm, &fhat, &problem.arms, &history, run.config.window)? {
            w.write_record([
                t.index.to_string(),
                row.arm_id.to_string(),
                row.arm,
                row.exact.to_string(),
                row.fitted.to_string(),
                row.bias.to_string(),
                u8::from(row.confounded).to_string(),
            ])?;
        }
        history.push(problem.arms.arms()[t.implemented].intervention.clone());
    }
    w.flush()?;
    fs::write(out.join("fitted_model.txt"), fhat.to_text()).context("writing fitted_model.txt")?;
    Ok(())
}
