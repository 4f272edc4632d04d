use rand::Rng;

use super::{AuctionError, MarketShape, ProfileBatch};

/// Where sellers' reputations come from when sampling training profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReputationSource {
    Constant(f64),
    Uniform { low: f64, high: f64 },
    /// Each seller independently falls in the low band with probability
    /// `low_probability`, else in the high band. Bands are `[low, high)`.
    Mixture {
        low_probability: f64,
        low_band: (f64, f64),
        high_band: (f64, f64),
    },
}

impl ReputationSource {
    pub fn validate(&self) -> Result<(), AuctionError> {
        let band_ok = |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        let ok = match *self {
            ReputationSource::Constant(r) => (0.0..=1.0).contains(&r),
            ReputationSource::Uniform { low, high } => band_ok(low, high),
            ReputationSource::Mixture {
                low_probability,
                low_band,
                high_band,
            } => {
                (0.0..=1.0).contains(&low_probability)
                    && band_ok(low_band.0, low_band.1)
                    && band_ok(high_band.0, high_band.1)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(AuctionError::Invalid(format!("bad reputation source {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let draw = |rng: &mut R, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        };
        match *self {
            ReputationSource::Constant(r) => r,
            ReputationSource::Uniform { low, high } => draw(rng, (low, high)),
            ReputationSource::Mixture {
                low_probability,
                low_band,
                high_band,
            } => {
                if rng.gen::<f64>() < low_probability {
                    draw(rng, low_band)
                } else {
                    draw(rng, high_band)
                }
            }
        }
    }
}

/// Draws i.i.d. bid profiles for training and testing.
pub trait ProfileSampler {
    fn shape(&self) -> MarketShape;

    fn sample_batch(&self, rng: &mut dyn rand::RngCore, len: usize) -> ProfileBatch;
}

/// Base values `u_ij ~ U[0, 1]`; when `scale_by_reputation` is set, buyer
/// `i`'s value for item `j` is `u_ij * r_j`, i.e. the seller's reputation acts
/// as the expected quality of its model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketDistribution {
    pub shape: MarketShape,
    pub reputation: ReputationSource,
    pub scale_by_reputation: bool,
}

impl MarketDistribution {
    /// Plain i.i.d. `U[0, 1]` values with every reputation fixed at 1.
    pub fn uniform(shape: MarketShape) -> Self {
        Self {
            shape,
            reputation: ReputationSource::Constant(1.0),
            scale_by_reputation: false,
        }
    }
}

impl ProfileSampler for MarketDistribution {
    fn shape(&self) -> MarketShape {
        self.shape
    }

    /// All base values of the batch are drawn before any reputation, so two
    /// distributions differing only in `reputation` see the same `u_ij`.
    fn sample_batch(&self, rng: &mut dyn rand::RngCore, len: usize) -> ProfileBatch {
        let (n, m) = (self.shape.n_buyers, self.shape.n_items);
        let mut bids: Vec<f64> = (0..len * n * m).map(|_| rng.gen()).collect();
        let reputations: Vec<f64> = (0..len * m).map(|_| self.reputation.sample(rng)).collect();
        if self.scale_by_reputation {
            for (k, v) in bids.iter_mut().enumerate() {
                let (b, j) = (k / (n * m), k % m);
                *v *= reputations[b * m + j];
            }
        }
        ProfileBatch {
            shape: self.shape,
            len,
            bids,
            reputations,
        }
    }
}
