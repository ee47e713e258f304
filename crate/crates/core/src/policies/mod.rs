//! Bernoulli bandit policies, the per-trial play loop and regret accounting.

mod kl;
mod play;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

pub use kl::{bernoulli_kl, exploration, klucb_index};
pub use play::{
    cumulative_regret, decomposed_regret, play_trial, Environment, PlayTrace, RewardSampler,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyKind {
    /// Thompson sampling with Beta(1, 1) priors.
    Thompson,
    KlUcb { tolerance: f64 },
}

impl PolicyKind {
    pub fn klucb() -> Self {
        PolicyKind::KlUcb {
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Thompson => "ts",
            PolicyKind::KlUcb { .. } => "klucb",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ts" => Ok(PolicyKind::Thompson),
            "klucb" => Ok(PolicyKind::klucb()),
            _ => Err(Error::Config(format!("unknown policy `{s}` (ts|klucb)"))),
        }
    }
}

/// Per-arm pull and success counts; both policies derive their statistics
/// from these.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    kind: PolicyKind,
    pulls: Vec<u64>,
    successes: Vec<u64>,
    rounds: u64,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, arms: usize) -> Result<Self> {
        Self::from_counts(kind, vec![0; arms], vec![0; arms])
    }

    pub fn from_counts(kind: PolicyKind, pulls: Vec<u64>, successes: Vec<u64>) -> Result<Self> {
        if pulls.is_empty() {
            return Err(Error::NoArms);
        }
        if let PolicyKind::KlUcb { tolerance } = kind {
            if !(tolerance > 0.0) {
                return Err(Error::InvalidTolerance(tolerance));
            }
        }
        assert_eq!(pulls.len(), successes.len(), "one success count per arm");
        assert!(successes.iter().zip(&pulls).all(|(s, p)| s <= p));
        Ok(Self {
            kind,
            rounds: pulls.iter().sum(),
            pulls,
            successes,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn arms(&self) -> usize {
        self.pulls.len()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn counts(&self) -> &[u64] {
        &self.pulls
    }

    pub fn successes(&self) -> &[u64] {
        &self.successes
    }

    /// Beta posterior parameters of an arm.
    pub fn alpha(&self, arm: usize) -> f64 {
        (self.successes[arm] + 1) as f64
    }

    pub fn beta(&self, arm: usize) -> f64 {
        (self.pulls[arm] - self.successes[arm] + 1) as f64
    }

    /// Empirical mean, 0 for an unexplored arm.
    pub fn mean(&self, arm: usize) -> f64 {
        match self.pulls[arm] {
            0 => 0.0,
            n => self.successes[arm] as f64 / n as f64,
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match self.kind {
            PolicyKind::Thompson => Ok(ts_select(self, rng)),
            PolicyKind::KlUcb { tolerance } => klucb_select(self, tolerance),
        }
    }

    pub fn update(&mut self, arm: usize, reward: i64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                arms: self.arms(),
            });
        }
        let success = match reward {
            0 => 0,
            1 => 1,
            r => return Err(Error::NonBinaryReward(r)),
        };
        self.pulls[arm] += 1;
        self.successes[arm] += success;
        self.rounds += 1;
        Ok(())
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Draws one posterior sample per arm and returns the largest, lowest id on ties.
pub fn ts_select<R: Rng + ?Sized>(state: &PolicyState, rng: &mut R) -> usize {
    if state.arms() == 1 {
        return 0;
    }
    argmax((0..state.arms()).map(|a| {
        Beta::new(state.alpha(a), state.beta(a))
            .expect("Beta parameters are at least 1")
            .sample(rng)
    }))
}

/// Conjugate Beta update.
pub fn ts_update(state: &mut PolicyState, arm: usize, reward: i64) -> Result<()> {
    state.update(arm, reward)
}

/// Arm with the largest KL-UCB index at round `rounds + 1`; unexplored arms
/// have index 1 and win in id order.
pub fn klucb_select(state: &PolicyState, tolerance: f64) -> Result<usize> {
    let round = state.rounds() + 1;
    if let Some(a) = state.pulls.iter().position(|&n| n == 0) {
        return Ok(a);
    }
    let indices = (0..state.arms())
        .map(|a| klucb_index(state.pulls[a], state.mean(a), round, tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax(indices.into_iter()))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fresh_thompson_state_is_uniform() {
        let state = PolicyState::new(PolicyKind::Thompson, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut freq = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            freq[ts_select(&state, &mut rng)] += 1;
        }
        for f in freq {
            let share = f as f64 / n as f64;
            assert!((share - 0.25).abs() <= 0.05, "{freq:?}");
        }
    }

    #[test]
    fn concentrated_posterior_dominates() {
        let state =
            PolicyState::from_counts(PolicyKind::Thompson, vec![999, 999, 999], vec![0, 999, 0])
                .unwrap();
        assert_eq!((state.alpha(1), state.beta(1)), (1000.0, 1.0));
        assert_eq!((state.alpha(0), state.beta(0)), (1.0, 1000.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..10_000).filter(|_| ts_select(&state, &mut rng) == 1).count();
        assert!(hits >= 9_900, "{hits}");
    }

    #[test]
    fn single_arm_is_always_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [PolicyKind::Thompson, PolicyKind::klucb()] {
            let state = PolicyState::new(kind, 1).unwrap();
            assert_eq!(state.select(&mut rng).unwrap(), 0);
        }
        assert!(matches!(PolicyState::new(PolicyKind::Thompson, 0), Err(Error::NoArms)));
    }

    #[test]
    fn conjugate_updates() {
        let mut s = PolicyState::new(PolicyKind::Thompson, 2).unwrap();
        ts_update(&mut s, 0, 1).unwrap();
        assert_eq!((s.alpha(0), s.beta(0)), (2.0, 1.0));
        let mut s = PolicyState::from_counts(PolicyKind::Thompson, vec![3, 0], vec![2, 0]).unwrap();
        assert_eq!((s.alpha(0), s.beta(0)), (3.0, 2.0));
        ts_update(&mut s, 0, 0).unwrap();
        assert_eq!((s.alpha(0), s.beta(0)), (3.0, 3.0));
        assert_eq!(s.rounds(), 4);
        assert!(matches!(ts_update(&mut s, 0, 2), Err(Error::NonBinaryReward(2))));
        assert!(matches!(ts_update(&mut s, 5, 1), Err(Error::ArmOutOfRange { .. })));
    }

    #[test]
    fn klucb_selection_order() {
        let tol = DEFAULT_TOLERANCE;
        let fresh = PolicyState::new(PolicyKind::klucb(), 3).unwrap();
        assert_eq!(klucb_select(&fresh, tol).unwrap(), 0);
        let one_left =
            PolicyState::from_counts(PolicyKind::klucb(), vec![50, 0, 40], vec![40, 0, 10]).unwrap();
        assert_eq!(klucb_select(&one_left, tol).unwrap(), 1);
        let explored =
            PolicyState::from_counts(PolicyKind::klucb(), vec![5000, 40, 40], vec![4000, 8, 10])
                .unwrap();
        let round = explored.rounds() + 1;
        // Grid oracle for each index confirms the ordering.
        let grid = |n: u64, m: f64| {
            let f = exploration(round);
            let mut q = m;
            while q + 1e-4 <= 1.0 && n as f64 * bernoulli_kl(m, q + 1e-4) <= f {
                q += 1e-4;
            }
            q
        };
        let oracle: Vec<f64> = (0..3).map(|a| grid(explored.counts()[a], explored.mean(a))).collect();
        assert!(oracle[0] > oracle[1] && oracle[0] > oracle[2], "{oracle:?}");
        assert_eq!(klucb_select(&explored, tol).unwrap(), 0);
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("ts".parse::<PolicyKind>().unwrap(), PolicyKind::Thompson);
        assert_eq!("klucb".parse::<PolicyKind>().unwrap().to_string(), "klucb");
        assert!("ucb1".parse::<PolicyKind>().is_err());
    }
}
