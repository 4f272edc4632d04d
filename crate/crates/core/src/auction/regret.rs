use super::{AuctionError, BidProfile, Mechanism, ProfileBatch, RegretEstimate, ReputationVector};

/// Projected gradient ascent over one bidder's report, started at the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretSearch {
    pub steps: usize,
    pub learning_rate: f64,
    /// Misreports are clamped to `[0, upper]`, the support of the values.
    pub upper: f64,
}

impl RegretSearch {
    pub fn new(steps: usize, learning_rate: f64) -> Result<Self, AuctionError> {
        if steps == 0 {
            return Err(AuctionError::Invalid("misreport steps must be >= 1".into()));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(AuctionError::Invalid(format!(
                "misreport learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            steps,
            learning_rate,
            upper: 1.0,
        })
    }
}

/// Regret of every bidder on every profile of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRegret {
    /// `B x N`
    pub per_sample: Vec<f64>,
    /// For each bidder, the best misreport found per profile (`B x M`).
    pub best_misreports: Vec<Vec<f64>>,
    pub n_buyers: usize,
}

impl BatchRegret {
    /// Mean over profiles, per bidder.
    pub fn mean_per_bidder(&self) -> RegretEstimate {
        let n = self.n_buyers;
        let len = self.per_sample.len() / n.max(1);
        let mut per_bidder = vec![0.0; n];
        for row in self.per_sample.chunks_exact(n) {
            for (acc, r) in per_bidder.iter_mut().zip(row) {
                *acc += r;
            }
        }
        for r in &mut per_bidder {
            *r /= len.max(1) as f64;
        }
        RegretEstimate { per_bidder }
    }
}

/// Runs the misreport search for each bidder on each profile. Others report
/// truthfully; the estimate is `max(0, best misreport utility - truthful
/// utility)` and so never exceeds the true regret.
pub fn estimate_regret_batch<M: Mechanism + ?Sized>(
    mechanism: &M,
    truth: &ProfileBatch,
    search: &RegretSearch,
) -> Result<BatchRegret, AuctionError> {
    if search.steps == 0 {
        return Err(AuctionError::Invalid("misreport steps must be >= 1".into()));
    }
    let (n, m) = (truth.shape.n_buyers, truth.shape.n_items);
    let len = truth.len;
    let mut per_sample = vec![0.0; len * n];
    let mut best_misreports = Vec::with_capacity(n);
    for bidder in 0..n {
        let mut mis: Vec<f64> = (0..len)
            .flat_map(|b| truth.profile_bids(b)[bidder * m..(bidder + 1) * m].to_vec())
            .collect();
        let mut best = mis.clone();
        let mut best_gain = vec![0.0; len];
        let mut truthful = Vec::new();
        for step in 0..=search.steps {
            let (utilities, grads) = mechanism.misreport_utilities(bidder, truth, &mis)?;
            if utilities.iter().any(|u| !u.is_finite()) || grads.iter().any(|g| !g.is_finite()) {
                return Err(AuctionError::NonFiniteUtility { bidder, step });
            }
            if step == 0 {
                truthful = utilities;
            } else {
                for b in 0..len {
                    let gain = utilities[b] - truthful[b];
                    if gain > best_gain[b] {
                        best_gain[b] = gain;
                        best[b * m..(b + 1) * m].copy_from_slice(&mis[b * m..(b + 1) * m]);
                    }
                }
            }
            if step == search.steps {
                break;
            }
            for (x, g) in mis.iter_mut().zip(&grads) {
                *x = (*x + search.learning_rate * g).clamp(0.0, search.upper);
            }
        }
        for b in 0..len {
            per_sample[b * n + bidder] = best_gain[b];
        }
        best_misreports.push(best);
    }
    Ok(BatchRegret {
        per_sample,
        best_misreports,
        n_buyers: n,
    })
}

/// Regret of each bidder on a single value profile.
pub fn estimate_regret<M: Mechanism + ?Sized>(
    mechanism: &M,
    true_values: &BidProfile,
    rep: &ReputationVector,
    search: &RegretSearch,
) -> Result<RegretEstimate, AuctionError> {
    let batch = ProfileBatch::single(true_values, rep)?;
    Ok(estimate_regret_batch(mechanism, &batch, search)?.mean_per_bidder())
}
