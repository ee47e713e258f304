use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{conditioned_scm, Window};
use crate::scm::{Intervention, SampleScratch, Scm};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Bernoulli plug-in standard error `sqrt(mean (1 - mean) / n)`.
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_sum(sum: f64, n: usize) -> Self {
        let mean = sum / n as f64;
        let se = (mean * (1.0 - mean) / n as f64).max(0.0).sqrt();
        Self { mean, se, n }
    }
}

/// Sample mean of the reward over `n` independent runs of the mutilated model.
pub fn monte_carlo_mean<R: Rng + ?Sized>(
    scm: &Arc<Scm>,
    arm: &Intervention,
    history: &[Intervention],
    window: Window,
    n: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let unrolled = conditioned_scm(scm, arm, history, window)?;
    let mut scratch = SampleScratch::default();
    let sum: f64 = (0..n)
        .map(|_| unrolled.sample_final_reward(rng, &mut scratch) as f64)
        .sum();
    Ok(Estimate::from_sum(sum, n))
}
