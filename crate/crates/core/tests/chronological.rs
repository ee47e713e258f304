use ccb_core::engine::{oracle_sequence, run_ccb, run_scm_mab_baseline};
use ccb_core::{toy, PolicyKind, Problem, RunConfig, Scm, Window};

fn problem() -> Problem {
    let template = toy::template();
    Problem {
        arms: toy::pomis_arms(&template).unwrap(),
        scm: Scm::compile(template).unwrap(),
    }
}

#[test]
fn trial_one_conditions_on_the_implemented_trial_zero_arm() {
    let p = problem();
    let report = oracle_sequence(&p, 2, Window::Lag1).unwrap();
    let t1 = &report.tables[1];
    // do(Z_0=0) carried into slice 1; do(X_1=1) is best by a small margin.
    assert_eq!(p.arms.arms()[report.argmax[0]].intervention.describe(p.scm.template()), "do(Z=0)");
    assert_eq!(p.arms.arms()[report.argmax[1]].intervention.describe(p.scm.template()), "do(X=1)");
    assert!((t1.means[report.argmax[1]] - 0.503822).abs() < 1e-9);
    assert!(t1.max_gap() < 0.02);
}

#[test]
fn same_seed_same_run() {
    let p = problem();
    let config = RunConfig::new(3, 500, PolicyKind::klucb(), 11);
    let a = run_ccb(&p, &config, 4).unwrap();
    let b = run_ccb(&p, &config, 4).unwrap();
    for (x, y) in a.trials.iter().zip(&b.trials) {
        assert_eq!(x.trace, y.trace);
    }
    assert_eq!(a.implemented(), b.implemented());
}

#[test]
fn baseline_keeps_trial_zero_beliefs() {
    let p = problem();
    let config = RunConfig::new(3, 200, PolicyKind::Thompson, 5);
    let run = run_scm_mab_baseline(&p, &config, 0).unwrap();
    let first = &run.trials[0].agent_table;
    for t in &run.trials {
        assert_eq!(t.agent_table.means, first.means);
        assert!(t.final_regret() >= 0.0);
    }
    // Regret is measured against the shifting true tables.
    assert_ne!(run.trials[1].true_table.means, first.means);
}
