use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AuctionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo revenue of the optimal single-item auction for `n_bidders`
/// i.i.d. `U[0, 1]` bidders.
///
/// With virtual value `2v - 1` the optimal auction is a second-price auction
/// with reserve 0.5: the highest bidder wins if above the reserve and pays
/// `max(0.5, second-highest bid)`.
pub fn myerson_oracle(
    n_bidders: usize,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate, AuctionError> {
    const RESERVE: f64 = 0.5;
    if n_bidders == 0 {
        return Err(AuctionError::Invalid("the oracle needs at least one bidder".into()));
    }
    if samples < 10_000 {
        return Err(AuctionError::Invalid(format!(
            "{samples} samples is too few for an oracle (need >= 10000)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let (mut first, mut second) = (0.0f64, 0.0f64);
        for _ in 0..n_bidders {
            let v: f64 = rng.gen();
            if v > first {
                second = first;
                first = v;
            } else if v > second {
                second = v;
            }
        }
        let revenue = if first >= RESERVE { second.max(RESERVE) } else { 0.0 };
        sum += revenue;
        sum_sq += revenue * revenue;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}
