use std::hint::black_box;

use ccb_core::engine::{oracle_sequence, run_ccb, Problem, RunConfig};
use ccb_core::inference::{exact_reward_table, Window};
use ccb_core::policies::{klucb_index, play_trial, Environment, PolicyKind, PolicyState};
use ccb_core::{toy, Intervention, Scm};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_problem() -> Problem {
    let t = toy::template();
    Problem {
        scm: Scm::compile(t.clone()).unwrap(),
        arms: toy::pomis_arms(&t).unwrap(),
    }
}

fn exact(c: &mut Criterion) {
    let p = toy_problem();
    let t = p.scm.template();
    let history: Vec<Intervention> = ["Z", "X", "Z", "X"]
        .iter()
        .map(|v| Intervention::named(t, &[(v, 1)]).unwrap())
        .collect();
    c.bench_function("exact_reward_table/trial4/full", |b| {
        b.iter(|| exact_reward_table(&p.scm, &p.arms, black_box(&history), Window::Full).unwrap())
    });
    c.bench_function("oracle_sequence/5", |b| {
        b.iter(|| oracle_sequence(&p, black_box(5), Window::Lag1).unwrap())
    });
}

fn klucb(c: &mut Criterion) {
    c.bench_function("klucb_index", |b| {
        b.iter(|| klucb_index(black_box(40), black_box(0.31), black_box(5000), 1e-6).unwrap())
    });
}

fn play(c: &mut Criterion) {
    let means = vec![0.493, 0.507, 0.773, 0.227];
    for kind in [PolicyKind::Thompson, PolicyKind::klucb()] {
        c.bench_function(&format!("play_trial/{kind}/10000"), |b| {
            b.iter(|| {
                let mut env = Environment::table(means.clone());
                let mut state = PolicyState::new(kind, means.len()).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                play_trial(&mut env, &mut state, 10_000, &mut rng).unwrap()
            })
        });
    }
    let p = toy_problem();
    let config = RunConfig::new(5, 10_000, PolicyKind::Thompson, 2021);
    c.bench_function("run_ccb/toy/5x10000", |b| b.iter(|| run_ccb(&p, &config, 0).unwrap()));
}

criterion_group!(benches, exact, klucb, play);
criterion_main!(benches);
