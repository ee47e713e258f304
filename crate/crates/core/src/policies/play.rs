use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::argmax_lowest;
use crate::policies::PolicyState;
use crate::scm::{SampleScratch, UnrolledScm};

/// Where a pulled arm's reward comes from.
pub enum RewardSampler {
    /// Bernoulli draw with the tabulated mean.
    Table(Vec<f64>),
    /// One full run of each arm's mutilated model per pull.
    Scm {
        arms: Vec<UnrolledScm>,
        scratch: SampleScratch,
    },
}

impl RewardSampler {
    pub fn scm(arms: Vec<UnrolledScm>) -> Self {
        RewardSampler::Scm {
            arms,
            scratch: SampleScratch::default(),
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            RewardSampler::Table(means) => means.len(),
            RewardSampler::Scm { arms, .. } => arms.len(),
        }
    }

    pub fn pull<R: Rng + ?Sized>(&mut self, arm: usize, rng: &mut R) -> i64 {
        match self {
            RewardSampler::Table(means) => i64::from(rng.random::<f64>() < means[arm]),
            RewardSampler::Scm { arms, scratch } => arms[arm].sample_final_reward(rng, scratch),
        }
    }
}

/// One trial's bandit: rewards come from `sampler`, regret is measured
/// against `means`.
pub struct Environment {
    pub sampler: RewardSampler,
    pub means: Vec<f64>,
}

impl Environment {
    pub fn table(means: Vec<f64>) -> Self {
        Self {
            sampler: RewardSampler::Table(means.clone()),
            means,
        }
    }
}

/// Arms pulled and rewards observed, one entry per round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlayTrace {
    pub arms: Vec<u32>,
    pub rewards: Vec<u8>,
}

impl PlayTrace {
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn counts(&self, arms: usize) -> Vec<u64> {
        let mut c = vec![0; arms];
        for &a in &self.arms {
            c[a as usize] += 1;
        }
        c
    }

    /// Reconstructs the policy state by replaying every round.
    pub fn replay(&self, mut state: PolicyState) -> Result<PolicyState> {
        for (&a, &y) in self.arms.iter().zip(&self.rewards) {
            state.update(a as usize, i64::from(y))?;
        }
        Ok(state)
    }

    /// CSV `round,arm_id,reward,inst_regret,cum_regret,optimal_flag`, rounds from 1.
    pub fn write_csv<W: Write>(&self, means: &[f64], w: W) -> Result<()> {
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "arm_id", "reward", "inst_regret", "cum_regret", "optimal_flag"])?;
        let cum = cumulative_regret(self, means);
        for (n, (&a, &y)) in self.arms.iter().zip(&self.rewards).enumerate() {
            let gap = best - means[a as usize];
            out.write_record([
                (n + 1).to_string(),
                a.to_string(),
                y.to_string(),
                gap.to_string(),
                cum[n].to_string(),
                u8::from(gap == 0.0).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Pseudo-regret `R_n = sum_{k <= n} (mu* - mu_{A_k})`.
pub fn cumulative_regret(trace: &PlayTrace, means: &[f64]) -> Vec<f64> {
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    trace
        .arms
        .iter()
        .map(|&a| {
            total += best - means[a as usize];
            total
        })
        .collect()
}

/// `sum_a Delta_a #_a`.
pub fn decomposed_regret(counts: &[u64], means: &[f64]) -> f64 {
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    counts
        .iter()
        .zip(means)
        .map(|(&n, &m)| (best - m) * n as f64)
        .sum()
}

/// Runs `horizon` rounds of select, pull, update.
pub fn play_trial<R: Rng + ?Sized>(
    env: &mut Environment,
    policy: &mut PolicyState,
    horizon: usize,
    rng: &mut R,
) -> Result<PlayTrace> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    if env.sampler.arms() != policy.arms() || env.means.len() != policy.arms() {
        return Err(Error::ArmCountMismatch {
            env: env.sampler.arms(),
            policy: policy.arms(),
        });
    }
    debug_assert!(argmax_lowest(&env.means).is_some());
    let mut trace = PlayTrace {
        arms: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let arm = policy.select(rng)?;
        let y = env.sampler.pull(arm, rng);
        policy.update(arm, y)?;
        trace.arms.push(arm as u32);
        trace.rewards.push(y as u8);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::policies::PolicyKind;

    fn run(kind: PolicyKind, means: &[f64], horizon: usize, seed: u64) -> (PlayTrace, PolicyState) {
        let mut env = Environment::table(means.to_vec());
        let mut state = PolicyState::new(kind, means.len()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = play_trial(&mut env, &mut state, horizon, &mut rng).unwrap();
        (trace, state)
    }

    #[test]
    fn single_arm_has_no_regret() {
        let (trace, _) = run(PolicyKind::Thompson, &[0.3], 500, 1);
        assert!(cumulative_regret(&trace, &[0.3]).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn deterministic_gap_is_learned() {
        let mut optimal_last = 0;
        for seed in 0..100 {
            let (trace, _) = run(PolicyKind::Thompson, &[1.0, 0.0], 1000, seed);
            optimal_last += usize::from(trace.arms[999] == 0);
        }
        assert!(optimal_last >= 99, "{optimal_last}");
    }

    #[test]
    fn regret_series_examples() {
        let means = [0.7730, 0.2270];
        let all_optimal = PlayTrace {
            arms: vec![0; 10],
            rewards: vec![1; 10],
        };
        assert!(cumulative_regret(&all_optimal, &means).iter().all(|&r| r == 0.0));
        let alternating = PlayTrace {
            arms: (0..11).map(|k| u32::from(k % 2 == 0)).collect(),
            rewards: vec![0; 11],
        };
        for (n, r) in cumulative_regret(&alternating, &means).iter().enumerate() {
            let rounds = n + 1;
            assert_abs_diff_eq!(*r, 0.546 * rounds.div_ceil(2) as f64, epsilon = 1e-12);
        }
        assert!(cumulative_regret(&PlayTrace::default(), &means).is_empty());
    }

    #[test]
    fn both_policies_concentrate_with_a_large_gap() {
        let means = [0.3, 0.5, 0.8, 0.55];
        for kind in [PolicyKind::Thompson, PolicyKind::klucb()] {
            let mut share = 0.0;
            for seed in 0..100 {
                let (trace, _) = run(kind, &means, 10_000, seed);
                let tail = &trace.arms[9_000..];
                share += tail.iter().filter(|&&a| a == 2).count() as f64 / tail.len() as f64;
            }
            assert!(share / 100.0 > 0.9, "{kind}: {}", share / 100.0);
        }
    }

    #[test]
    fn replay_and_decomposition() {
        let means = [0.45, 0.5, 0.2];
        for kind in [PolicyKind::Thompson, PolicyKind::klucb()] {
            let (trace, state) = run(kind, &means, 3000, 4);
            let fresh = PolicyState::new(kind, 3).unwrap();
            assert_eq!(trace.replay(fresh).unwrap(), state);
            assert_eq!(trace.counts(3), state.counts());
            let cum = cumulative_regret(&trace, &means);
            assert!(cum.windows(2).all(|w| w[1] >= w[0]));
            assert_abs_diff_eq!(*cum.last().unwrap(), decomposed_regret(state.counts(), &means), epsilon = 1e-9);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let means = [0.4, 0.6];
        assert_eq!(run(PolicyKind::Thompson, &means, 200, 8).0, run(PolicyKind::Thompson, &means, 200, 8).0);
    }

    #[test]
    fn preconditions() {
        let mut env = Environment::table(vec![0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = PolicyState::new(PolicyKind::Thompson, 3).unwrap();
        assert!(matches!(
            play_trial(&mut env, &mut state, 10, &mut rng),
            Err(Error::ArmCountMismatch { env: 2, policy: 3 })
        ));
        let mut state = PolicyState::new(PolicyKind::Thompson, 2).unwrap();
        assert!(matches!(play_trial(&mut env, &mut state, 0, &mut rng), Err(Error::ZeroHorizon)));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = PlayTrace {
            arms: vec![1, 0],
            rewards: vec![0, 1],
        };
        let mut buf = Vec::new();
        trace.write_csv(&[0.75, 0.25], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,arm_id,reward,inst_regret,cum_regret,optimal_flag\n1,1,0,0.5,0.5,0\n2,0,1,0,0.5,1\n"
        );
    }
}
