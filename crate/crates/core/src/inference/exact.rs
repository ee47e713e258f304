use std::sync::Arc;

use crate::arms::ArmTable;
use crate::error::Result;
use crate::inference::{conditioned_scm, RewardTable, Window};
use crate::scm::{Intervention, Scm, UnrolledScm};

/// Mixed-radix codec for joint endogenous states of one slice.
struct StateCodec {
    sizes: Vec<usize>,
    count: usize,
}

impl StateCodec {
    fn new(scm: &Scm) -> Self {
        let sizes: Vec<usize> = (0..scm.num_vars()).map(|v| scm.domain_size(v)).collect();
        let count = sizes.iter().product();
        Self { sizes, count }
    }

    fn encode(&self, state: &[usize]) -> usize {
        state
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&k, &n)| acc * n + k)
    }

    fn decode(&self, mut code: usize, out: &mut [usize]) {
        for (slot, &n) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = code % n;
            code /= n;
        }
    }
}

/// Exact distribution of the joint endogenous state at the last slice.
///
/// With lag-1 mechanisms and exogenous noise drawn independently per slice,
/// the slice states form a Markov chain, so summing over every exogenous
/// assignment of every slice reduces to pushing the state distribution
/// forward one slice at a time.
fn final_state_distribution(unrolled: &UnrolledScm) -> (StateCodec, Vec<f64>) {
    let scm = unrolled.scm();
    let codec = StateCodec::new(scm);
    let n = scm.num_vars();
    let mut prev_state = vec![0usize; n];
    let mut cur = vec![0usize; n];
    let mut dist = vec![0.0; codec.count];
    for (q, exo) in scm.exo_support() {
        scm.eval_slice(0, None, exo, unrolled.pinned(0), &mut cur);
        dist[codec.encode(&cur)] += q;
    }
    for s in 1..unrolled.slices() {
        let mut next = vec![0.0; codec.count];
        for (code, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            codec.decode(code, &mut prev_state);
            for (q, exo) in scm.exo_support() {
                scm.eval_slice(s, Some(&prev_state), exo, unrolled.pinned(s), &mut cur);
                next[codec.encode(&cur)] += p * q;
            }
        }
        dist = next;
    }
    (codec, dist)
}

/// Exact expected reward at the last slice of an unrolled, mutilated model.
pub fn unrolled_mean(unrolled: &UnrolledScm) -> f64 {
    let scm = unrolled.scm();
    let y = scm.template().reward.0;
    let (codec, dist) = final_state_distribution(unrolled);
    let mut state = vec![0usize; scm.num_vars()];
    dist.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(code, &p)| {
            codec.decode(code, &mut state);
            p * scm.reward_value(state[y]) as f64
        })
        .sum()
}

/// `E[Y_t | do(arm at t), implemented history]`, where `t = history.len()`.
pub fn exact_interventional_mean(
    scm: &Arc<Scm>,
    arm: &Intervention,
    history: &[Intervention],
    window: Window,
) -> Result<f64> {
    Ok(unrolled_mean(&conditioned_scm(scm, arm, history, window)?))
}

pub fn exact_reward_table(
    scm: &Arc<Scm>,
    arms: &ArmTable,
    history: &[Intervention],
    window: Window,
) -> Result<RewardTable> {
    let means = arms
        .arms()
        .iter()
        .map(|a| exact_interventional_mean(scm, &a.intervention, history, window))
        .collect::<Result<_>>()?;
    Ok(RewardTable {
        slice: history.len(),
        context: history.to_vec(),
        means,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::arms::{enumerate_all_arms, Arm};
    use crate::oracle::{self, ToyDo};
    use crate::scm::{Regime, ScmTemplate};
    use crate::toy;

    fn setup() -> (ScmTemplate, Arc<Scm>) {
        let t = toy::template();
        let scm = Scm::compile(t.clone()).unwrap();
        (t, scm)
    }

    fn iv(t: &ScmTemplate, pairs: &[(&str, i64)]) -> Intervention {
        Intervention::named(t, pairs).unwrap()
    }

    #[test]
    fn trial_zero_values_match_enumeration() {
        let (t, scm) = setup();
        let cases: [(&[(&str, i64)], f64); 5] = [
            (&[("Z", 0)], 0.7730),
            (&[("Z", 1)], 0.2270),
            (&[("X", 0)], 0.4930),
            (&[("X", 1)], 0.5070),
            (&[], 0.4454),
        ];
        for (pairs, frozen) in cases {
            let mu = exact_interventional_mean(&scm, &iv(&t, pairs), &[], Window::Lag1).unwrap();
            let brute = oracle::toy_mean(&[ToyDo::from_pairs(pairs)]);
            assert_abs_diff_eq!(mu, brute, epsilon = 1e-12);
            assert_abs_diff_eq!(mu, frozen, epsilon = 1e-12);
        }
        // Parity identity for do(Z=0): Y = 1 ^ U_Y ^ U_X.
        let parity = (1.0 + (1.0 - 2.0 * 0.15) * (1.0 - 2.0 * 0.11)) / 2.0;
        let mu = exact_interventional_mean(&scm, &iv(&t, &[("Z", 0)]), &[], Window::Lag1).unwrap();
        assert_abs_diff_eq!(mu, parity, epsilon = 1e-12);
    }

    #[test]
    fn trial_one_after_z0() {
        let (t, scm) = setup();
        let history = [iv(&t, &[("Z", 0)])];
        let mu = exact_interventional_mean(&scm, &iv(&t, &[("X", 1)]), &history, Window::Lag1)
            .unwrap();
        let brute = oracle::toy_mean(&[ToyDo::from_pairs(&[("Z", 0)]), ToyDo::from_pairs(&[("X", 1)])]);
        assert_abs_diff_eq!(mu, brute, epsilon = 1e-12);
        assert_abs_diff_eq!(mu, 0.503822, epsilon = 1e-9);
    }

    #[test]
    fn every_arm_and_window_matches_brute_force_up_to_slice_three() {
        let (t, scm) = setup();
        let arms = enumerate_all_arms(&t, &toy::arm_order(&t)).unwrap();
        let histories: Vec<Vec<Intervention>> = vec![
            vec![],
            vec![iv(&t, &[("Z", 1)])],
            vec![iv(&t, &[("Z", 0)]), iv(&t, &[("X", 1)])],
            vec![iv(&t, &[("X", 0), ("Z", 1)]), iv(&t, &[]), iv(&t, &[("Z", 0)])],
        ];
        for h in &histories {
            for window in [Window::Lag1, Window::Full] {
                let slices = crate::inference::windowed_interventions(&Intervention::empty(), h, window);
                for Arm { intervention, .. } in arms.arms() {
                    let mu = exact_interventional_mean(&scm, intervention, h, window).unwrap();
                    let mut per_slice: Vec<ToyDo> =
                        slices[..h.len()].iter().map(|i| ToyDo::from_intervention(&t, i)).collect();
                    per_slice.push(ToyDo::from_intervention(&t, intervention));
                    let brute = oracle::toy_mean(&per_slice);
                    assert_abs_diff_eq!(mu, brute, epsilon = 1e-12);
                    assert!((0.0..=1.0).contains(&mu));
                }
            }
        }
    }

    #[test]
    fn full_and_lag1_agree_for_the_first_two_trials() {
        let (t, scm) = setup();
        let arms = toy::pomis_arms(&t).unwrap();
        for history in [vec![], vec![iv(&t, &[("Z", 0)])], vec![iv(&t, &[("X", 1)])]] {
            let a = exact_reward_table(&scm, &arms, &history, Window::Lag1).unwrap();
            let b = exact_reward_table(&scm, &arms, &history, Window::Full).unwrap();
            for (x, y) in a.means.iter().zip(&b.means) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn reward_table_for_trial_zero() {
        let (t, scm) = setup();
        let arms = toy::pomis_arms(&t).unwrap();
        let table = exact_reward_table(&scm, &arms, &[], Window::Lag1).unwrap();
        let frozen = [0.4930, 0.5070, 0.7730, 0.2270];
        for (m, f) in table.means.iter().zip(frozen) {
            assert_abs_diff_eq!(*m, f, epsilon = 1e-12);
        }
        assert_eq!(table.argmax(), Some(2));

        let all = enumerate_all_arms(&t, &toy::arm_order(&t)).unwrap();
        let table = exact_reward_table(&scm, &all, &[], Window::Lag1).unwrap();
        // do(X=1, Z=0): Z is cut off from Y once X is fixed.
        assert_abs_diff_eq!(table.means[7], table.means[2], epsilon = 1e-15);

        let empty = ArmTable::empty(crate::arms::ArmMode::Pomis, toy::arm_order(&t));
        let table = exact_reward_table(&scm, &empty, &[], Window::Lag1).unwrap();
        assert!(table.is_empty());
        assert_eq!(table.argmax(), None);
    }

    #[test]
    fn deterministic_sem_gives_zero_one_rewards() {
        let mut t = toy::template();
        for u in &mut t.exogenous {
            u.pmf = vec![0.0, 1.0];
        }
        let scm = Scm::compile(t.clone()).unwrap();
        let arms = enumerate_all_arms(&t, &toy::arm_order(&t)).unwrap();
        for h in [vec![], vec![iv(&t, &[("Z", 0)])]] {
            for m in exact_reward_table(&scm, &arms, &h, Window::Full).unwrap().means {
                assert!(m == 0.0 || m == 1.0, "{m}");
            }
        }
        assert!(t.function(Regime::Initial, t.reward).is_some());
    }

    #[test]
    fn history_and_arm_errors_propagate() {
        let (t, scm) = setup();
        let bad = Intervention::new([(t.reward, 1)]).unwrap();
        assert!(exact_interventional_mean(&scm, &bad, &[], Window::Lag1).is_err());
    }
}
