use super::dla::splice_misreports;
use super::{
    AuctionError, AuctionOutcome, BidProfile, MarketShape, Mechanism, ProfileBatch,
    ReputationVector,
};

/// Single-item second-price auction: the highest bid wins (lowest index on
/// ties) and pays the second-highest bid, or nothing when alone.
pub fn spa_run(bids: &[f64]) -> Result<(usize, f64), AuctionError> {
    if bids.is_empty() {
        return Err(AuctionError::Invalid("second-price auction needs a bid".into()));
    }
    let mut winner = 0;
    for (i, &b) in bids.iter().enumerate().skip(1) {
        if b > bids[winner] {
            winner = i;
        }
    }
    let price = bids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != winner)
        .map(|(_, &b)| b)
        .fold(0.0, f64::max);
    Ok((winner, price))
}

/// Independent second-price auction on each item of an `N x M` market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondPrice {
    pub shape: MarketShape,
}

impl SecondPrice {
    pub fn new(shape: MarketShape) -> Self {
        Self { shape }
    }

    fn outcome_for(&self, bids: &[f64]) -> Result<AuctionOutcome, AuctionError> {
        let (n, m) = (self.shape.n_buyers, self.shape.n_items);
        let mut allocation = vec![0.0; n * m];
        let mut payments = vec![0.0; n];
        for j in 0..m {
            let column: Vec<f64> = (0..n).map(|i| bids[i * m + j]).collect();
            let (winner, price) = spa_run(&column)?;
            allocation[winner * m + j] = 1.0;
            payments[winner] += price;
        }
        Ok(AuctionOutcome {
            shape: self.shape,
            allocation,
            payments,
        })
    }

    pub fn run_batch(&self, batch: &ProfileBatch) -> Result<Vec<AuctionOutcome>, AuctionError> {
        (0..batch.len)
            .map(|b| self.outcome_for(batch.profile_bids(b)))
            .collect()
    }

    pub fn mean_revenue(&self, batch: &ProfileBatch) -> Result<f64, AuctionError> {
        let total: f64 = self
            .run_batch(batch)?
            .iter()
            .map(AuctionOutcome::revenue)
            .sum();
        Ok(total / batch.len.max(1) as f64)
    }
}

impl Mechanism for SecondPrice {
    fn shape(&self) -> MarketShape {
        self.shape
    }

    fn run(&self, bids: &BidProfile, _rep: &ReputationVector) -> Result<AuctionOutcome, AuctionError> {
        if bids.shape() != self.shape {
            return Err(AuctionError::Shape("bid profile does not match market".into()));
        }
        self.outcome_for(bids.values())
    }

    /// Utility is piecewise constant in the bidder's own report, so the
    /// gradient is zero wherever it exists.
    fn misreport_utilities(
        &self,
        bidder: usize,
        truth: &ProfileBatch,
        misreports: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), AuctionError> {
        let m = self.shape.n_items;
        let bids = splice_misreports(truth, bidder, misreports);
        let nm = self.shape.bid_count();
        let mut utilities = Vec::with_capacity(truth.len);
        for b in 0..truth.len {
            let out = self.outcome_for(&bids[b * nm..(b + 1) * nm])?;
            let values = &truth.profile_bids(b)[bidder * m..(bidder + 1) * m];
            utilities.push(out.buyer_utility(bidder, values));
        }
        Ok((utilities, vec![0.0; truth.len * m]))
    }
}
