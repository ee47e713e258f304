//! Reward computation for interventions on a time-propagated model: exact
//! enumeration, Monte Carlo estimates, and a transfer model fitted from
//! observational data.

mod estimate;
mod exact;
mod monte_carlo;
mod observational;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{Intervention, Scm, UnrolledScm};

pub use estimate::{
    estimation_report, fit_structural_pmfs, fitted_interventional_mean, fitted_reward_table,
    simulate_from_fitted, BiasRow, ConditionalPmf, EstimatedSem, ExogenousEstimate,
};
pub use exact::{exact_interventional_mean, exact_reward_table, unrolled_mean};
pub use monte_carlo::{monte_carlo_mean, Estimate};
pub use observational::{generate_observational, ObservationalDataset};

/// Span of past implemented interventions that condition the current trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Only the previous slice's implemented intervention; earlier slices evolve
    /// un-intervened.
    #[default]
    Lag1,
    /// Every implemented intervention since slice 0.
    Full,
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Lag1 => "lag1",
            Window::Full => "full",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lag1" => Ok(Window::Lag1),
            "full" => Ok(Window::Full),
            _ => Err(Error::Config(format!("unknown window `{s}` (lag1|full)"))),
        }
    }
}

/// Interventions in effect at each slice `0..=history.len()` once the window is applied.
pub fn windowed_interventions(
    arm: &Intervention,
    history: &[Intervention],
    window: Window,
) -> Vec<Intervention> {
    let slice = history.len();
    let mut out: Vec<Intervention> = history
        .iter()
        .enumerate()
        .map(|(s, iv)| match window {
            Window::Full => iv.clone(),
            Window::Lag1 if s + 1 == slice => iv.clone(),
            Window::Lag1 => Intervention::empty(),
        })
        .collect();
    out.push(arm.clone());
    out
}

/// Unrolls `scm` up to slice `history.len()` and applies the windowed history
/// and the arm.
pub fn conditioned_scm(
    scm: &Arc<Scm>,
    arm: &Intervention,
    history: &[Intervention],
    window: Window,
) -> Result<UnrolledScm> {
    let per_slice = windowed_interventions(arm, history, window);
    let mut unrolled = UnrolledScm::new(Arc::clone(scm), per_slice.len())?;
    for (s, iv) in per_slice.iter().enumerate() {
        if !iv.is_empty() {
            unrolled = unrolled.mutilate(s, iv)?;
        }
    }
    Ok(unrolled)
}

/// Mean reward of each arm at one trial, given the implemented history.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable {
    pub slice: usize,
    pub context: Vec<Intervention>,
    pub means: Vec<f64>,
}

impl RewardTable {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Best arm, lowest id on ties.
    pub fn argmax(&self) -> Option<usize> {
        argmax_lowest(&self.means)
    }

    pub fn best(&self) -> Option<f64> {
        self.argmax().map(|a| self.means[a])
    }

    /// Suboptimality gap of every arm.
    pub fn gaps(&self) -> Vec<f64> {
        let best = self.best().unwrap_or(0.0);
        self.means.iter().map(|m| best - m).collect()
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps().into_iter().fold(0.0, f64::max)
    }
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if xs[b] >= x => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_toward_lowest_id() {
        assert_eq!(argmax_lowest(&[]), None);
        assert_eq!(argmax_lowest(&[0.2, 0.5, 0.5]), Some(1));
        assert_eq!(argmax_lowest(&[0.7, 0.5, 0.7]), Some(0));
    }

    #[test]
    fn lag1_window_drops_older_history() {
        let a = Intervention::new([(crate::scm::VarId(0), 0)]).unwrap();
        let b = Intervention::new([(crate::scm::VarId(1), 1)]).unwrap();
        let arm = Intervention::new([(crate::scm::VarId(0), 1)]).unwrap();
        let h = [a.clone(), b.clone()];
        assert_eq!(
            windowed_interventions(&arm, &h, Window::Lag1),
            vec![Intervention::empty(), b.clone(), arm.clone()]
        );
        assert_eq!(windowed_interventions(&arm, &h, Window::Full), vec![a, b, arm]);
    }

    #[test]
    fn window_parses() {
        assert_eq!("full".parse::<Window>().unwrap(), Window::Full);
        assert!("lag2".parse::<Window>().is_err());
    }
}
