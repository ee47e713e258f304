//! Counter-based random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream keyed by the master seed
//! and addressed by (replicate, purpose, trial). Adding replicates or trials
//! never reshuffles the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// Arm selection and reward draws within a trial.
    Play = 1,
    /// Observational data for the fitted transfer model.
    Observational = 2,
    /// Monte Carlo cross-checks.
    MonteCarlo = 3,
}

pub fn stream(seed: u64, replicate: u32, purpose: Purpose, trial: u16) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(replicate) << 24) | (u64::from(purpose as u8) << 16) | u64::from(trial));
    rng
}
