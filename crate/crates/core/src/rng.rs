//! Seeded noise streams.
//!
//! Each Monte Carlo trial draws from its own ChaCha stream, keyed by the master
//! seed and the trial index, so results do not depend on scheduling.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `n` iid `N(0, sigma^2)` draws.
pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        sigma * z
    })
}
