use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::Bet;

/// Seeded positive-edge bets with probabilities spread over `(0.1, 0.9)`.
pub fn random_bets(n: usize, seed: u64) -> Vec<Bet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let q: f64 = rng.random_range(0.1..0.9);
            let edge: f64 = rng.random_range(0.005..0.08);
            let p = (q + edge).min(0.97);
            Bet { p, b: (1.0 - q) / q }
        })
        .collect()
}
