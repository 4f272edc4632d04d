//! Learned auctions for pricing and allocating models among buyers.
//!
//! The deep-learning auction maps a bid matrix and the sellers' reputations to
//! per-item allocation probabilities (softmax over buyers plus an "unsold"
//! slot) and per-buyer payments `p_i = alpha_i * sum_j z_ij * b_ij` with
//! `alpha_i` in (0, 1), which keeps every outcome individually rational with
//! respect to the reported bids. Incentive compatibility is enforced softly
//! during training through an augmented Lagrangian on the empirical ex-post
//! regret.

mod checkpoint;
mod dla;
mod myerson;
mod regret;
mod sampler;
mod spa;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use dla::DlaNet;
pub use myerson::{myerson_oracle, MonteCarloEstimate};
pub use regret::{estimate_regret, estimate_regret_batch, BatchRegret, RegretSearch};
pub use sampler::{MarketDistribution, ProfileSampler, ReputationSource};
pub use spa::{spa_run, SecondPrice};
pub use train::{lagrangian_loss, train_dla, EpochMetrics, TrainConfig, TrainedAuction};

use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuctionError {
    #[error("market shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite utility for bidder {bidder} at misreport step {step}")]
    NonFiniteUtility { bidder: usize, step: usize },
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// `N` buyers bidding on `M` items (one listed model per seller).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MarketShape {
    pub n_buyers: usize,
    pub n_items: usize,
}

impl MarketShape {
    pub fn new(n_buyers: usize, n_items: usize) -> Result<Self, AuctionError> {
        if n_buyers == 0 || n_items == 0 {
            return Err(AuctionError::Shape(format!(
                "need at least one buyer and one item, got {n_buyers}x{n_items}"
            )));
        }
        Ok(Self { n_buyers, n_items })
    }

    pub fn bid_count(&self) -> usize {
        self.n_buyers * self.n_items
    }
}

/// Row-major `N x M` matrix of nonnegative bids (or true values).
#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    shape: MarketShape,
    bids: Vec<f64>,
}

impl BidProfile {
    pub fn new(shape: MarketShape, bids: Vec<f64>) -> Result<Self, AuctionError> {
        if bids.len() != shape.bid_count() {
            return Err(AuctionError::Shape(format!(
                "{}x{} market needs {} bids, got {}",
                shape.n_buyers,
                shape.n_items,
                shape.bid_count(),
                bids.len()
            )));
        }
        if let Some(b) = bids.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(AuctionError::Invalid(format!(
                "bids must be finite and nonnegative, got {b}"
            )));
        }
        Ok(Self { shape, bids })
    }

    pub fn shape(&self) -> MarketShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.bids
    }

    pub fn get(&self, buyer: usize, item: usize) -> f64 {
        self.bids[buyer * self.shape.n_items + item]
    }

    pub fn buyer_row(&self, buyer: usize) -> &[f64] {
        let m = self.shape.n_items;
        &self.bids[buyer * m..(buyer + 1) * m]
    }

    /// Bids on one item across all buyers.
    pub fn item_column(&self, item: usize) -> Vec<f64> {
        (0..self.shape.n_buyers).map(|i| self.get(i, item)).collect()
    }
}

/// Seller reputations in `[0, 1]`, one per item.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationVector(Vec<f64>);

impl ReputationVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AuctionError> {
        if let Some(r) = values.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(AuctionError::Invalid(format!(
                "reputations must lie in [0, 1], got {r}"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(n_items: usize, value: f64) -> Result<Self, AuctionError> {
        Self::new(vec![value; n_items])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Allocation probabilities (row-major `N x M`) and per-buyer payments.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub shape: MarketShape,
    pub allocation: Vec<f64>,
    pub payments: Vec<f64>,
}

impl AuctionOutcome {
    pub fn alloc(&self, buyer: usize, item: usize) -> f64 {
        self.allocation[buyer * self.shape.n_items + item]
    }

    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }

    /// Additive utility of `buyer` with true values `values` (a buyer row).
    pub fn buyer_utility(&self, buyer: usize, values: &[f64]) -> f64 {
        let m = self.shape.n_items;
        let alloc_value: f64 = self.allocation[buyer * m..(buyer + 1) * m]
            .iter()
            .zip(values)
            .map(|(z, v)| z * v)
            .sum();
        alloc_value - self.payments[buyer]
    }
}

/// Per-bidder ex-post regret, in the units of the bids.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretEstimate {
    pub per_bidder: Vec<f64>,
}

impl RegretEstimate {
    pub fn mean(&self) -> f64 {
        self.per_bidder.iter().sum::<f64>() / self.per_bidder.len().max(1) as f64
    }

    pub fn max(&self) -> f64 {
        self.per_bidder.iter().copied().fold(0.0, f64::max)
    }
}

/// Valuation times allocation, minus payment.
pub fn utility(value: f64, allocation: f64, payment: f64) -> f64 {
    value * allocation - payment
}

/// A batch of `B` profiles: values/bids laid out `B x N x M`, reputations `B x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBatch {
    pub shape: MarketShape,
    pub len: usize,
    pub bids: Vec<f64>,
    pub reputations: Vec<f64>,
}

impl ProfileBatch {
    pub fn profile_bids(&self, b: usize) -> &[f64] {
        let nm = self.shape.bid_count();
        &self.bids[b * nm..(b + 1) * nm]
    }

    pub fn profile_reputations(&self, b: usize) -> &[f64] {
        let m = self.shape.n_items;
        &self.reputations[b * m..(b + 1) * m]
    }

    pub fn single(bids: &BidProfile, rep: &ReputationVector) -> Result<Self, AuctionError> {
        if rep.len() != bids.shape().n_items {
            return Err(AuctionError::Shape(format!(
                "{} reputations for {} items",
                rep.len(),
                bids.shape().n_items
            )));
        }
        Ok(Self {
            shape: bids.shape(),
            len: 1,
            bids: bids.values().to_vec(),
            reputations: rep.values().to_vec(),
        })
    }
}

/// A mechanism whose bidders can search over misreports by gradient ascent.
pub trait Mechanism {
    fn shape(&self) -> MarketShape;

    fn run(&self, bids: &BidProfile, rep: &ReputationVector) -> Result<AuctionOutcome, AuctionError>;

    /// For every profile in `truth`, replaces `bidder`'s bid row with the
    /// corresponding row of `misreports` (`B x M`) and returns the bidder's
    /// utility under its true values together with the gradient of that
    /// utility with respect to the misreported row.
    fn misreport_utilities(
        &self,
        bidder: usize,
        truth: &ProfileBatch,
        misreports: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), AuctionError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_arithmetic() {
        assert!((utility(0.8, 1.0, 0.3) - 0.5).abs() < 1e-15);
        assert_eq!(utility(0.7, 0.0, 0.0), 0.0);
        assert!((utility(0.9, 1.0, 0.4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn profile_validation() {
        let shape = MarketShape::new(2, 2).unwrap();
        assert!(BidProfile::new(shape, vec![0.1, 0.2, 0.3]).is_err());
        assert!(BidProfile::new(shape, vec![0.1, -0.2, 0.3, 0.0]).is_err());
        assert!(BidProfile::new(shape, vec![0.1, f64::NAN, 0.3, 0.0]).is_err());
        let p = BidProfile::new(shape, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p.item_column(1), vec![0.2, 0.4]);
        assert!(MarketShape::new(0, 3).is_err());
        assert!(ReputationVector::new(vec![0.5, 1.2]).is_err());
    }
}
