use rand::Rng;

use super::{
    AuctionError, AuctionOutcome, BidProfile, MarketShape, Mechanism, ProfileBatch,
    ReputationVector,
};
use crate::nn::{sigmoid, softmax_in_place, Activation, DenseNet, Tensor, Trace};

/// Allocation/payment network for an `N x M` market.
///
/// Input row: the flattened bid matrix followed by the `M` reputations.
/// Output row: `M` blocks of `N + 1` allocation logits (last slot = unsold),
/// then `N` payment logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DlaNet {
    shape: MarketShape,
    net: DenseNet,
}

/// Everything the reverse pass needs from one batched forward pass.
pub(crate) struct DlaPass {
    pub batch: usize,
    trace: Trace,
    /// `B x M x (N + 1)` softmax outputs, unsold slot last.
    probs: Vec<f64>,
    /// `B x N`
    alpha: Vec<f64>,
    /// `B x N`, `sum_j z_ij * b_ij`
    alloc_bid: Vec<f64>,
}

impl DlaPass {
    /// `z_ij` for profile `b`.
    pub fn alloc(&self, shape: MarketShape, b: usize, buyer: usize, item: usize) -> f64 {
        let (n, m) = (shape.n_buyers, shape.n_items);
        self.probs[(b * m + item) * (n + 1) + buyer]
    }

    pub fn payment(&self, shape: MarketShape, b: usize, buyer: usize) -> f64 {
        let k = b * shape.n_buyers + buyer;
        self.alpha[k] * self.alloc_bid[k]
    }
}

impl DlaNet {
    pub fn input_dim(shape: MarketShape) -> usize {
        shape.bid_count() + shape.n_items
    }

    pub fn output_dim(shape: MarketShape) -> usize {
        (shape.n_buyers + 1) * shape.n_items + shape.n_buyers
    }

    /// Fresh net with tanh hidden layers of the given widths.
    pub fn new<R: Rng + ?Sized>(
        shape: MarketShape,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, AuctionError> {
        let mut layers: Vec<(usize, Activation)> =
            hidden.iter().map(|&w| (w, Activation::Tanh)).collect();
        layers.push((Self::output_dim(shape), Activation::Identity));
        let net = DenseNet::glorot(Self::input_dim(shape), &layers, rng)?;
        Ok(Self { shape, net })
    }

    pub fn from_net(shape: MarketShape, net: DenseNet) -> Result<Self, AuctionError> {
        if net.input_dim() != Self::input_dim(shape) || net.output_dim() != Self::output_dim(shape)
        {
            return Err(AuctionError::Shape(format!(
                "net maps {} -> {}, a {}x{} market needs {} -> {}",
                net.input_dim(),
                net.output_dim(),
                shape.n_buyers,
                shape.n_items,
                Self::input_dim(shape),
                Self::output_dim(shape)
            )));
        }
        Ok(Self { shape, net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn market(&self) -> MarketShape {
        self.shape
    }

    fn check_batch(&self, batch: &ProfileBatch) -> Result<(), AuctionError> {
        if batch.shape != self.shape {
            return Err(AuctionError::Shape(format!(
                "profiles are {}x{}, net expects {}x{}",
                batch.shape.n_buyers, batch.shape.n_items, self.shape.n_buyers, self.shape.n_items
            )));
        }
        Ok(())
    }

    /// Batched forward pass over `bids` (`B x N x M`) and `reps` (`B x M`).
    pub(crate) fn forward_pass(
        &self,
        bids: &[f64],
        reps: &[f64],
        batch: usize,
    ) -> Result<DlaPass, AuctionError> {
        let (n, m) = (self.shape.n_buyers, self.shape.n_items);
        let nm = n * m;
        let in_dim = Self::input_dim(self.shape);
        if bids.len() != batch * nm || reps.len() != batch * m {
            return Err(AuctionError::Shape(format!(
                "batch of {batch} needs {} bids and {} reputations, got {} and {}",
                batch * nm,
                batch * m,
                bids.len(),
                reps.len()
            )));
        }
        let mut input = Vec::with_capacity(batch * in_dim);
        for b in 0..batch {
            input.extend_from_slice(&bids[b * nm..(b + 1) * nm]);
            input.extend_from_slice(&reps[b * m..(b + 1) * m]);
        }
        let trace = self
            .net
            .forward_trace(&Tensor::matrix(batch, in_dim, input)?)?;
        let out = trace.output();
        let out_dim = Self::output_dim(self.shape);
        let mut probs = Vec::with_capacity(batch * m * (n + 1));
        let mut alpha = Vec::with_capacity(batch * n);
        let mut alloc_bid = vec![0.0; batch * n];
        for b in 0..batch {
            let row = &out[b * out_dim..(b + 1) * out_dim];
            let start = probs.len();
            probs.extend_from_slice(&row[..m * (n + 1)]);
            for block in probs[start..].chunks_exact_mut(n + 1) {
                softmax_in_place(block);
            }
            alpha.extend(row[m * (n + 1)..].iter().map(|&x| sigmoid(x)));
            let pb = &probs[start..];
            for i in 0..n {
                alloc_bid[b * n + i] = (0..m)
                    .map(|j| pb[j * (n + 1) + i] * bids[b * nm + i * m + j])
                    .sum();
            }
        }
        Ok(DlaPass {
            batch,
            trace,
            probs,
            alpha,
            alloc_bid,
        })
    }

    /// Reverse pass. `grad_alloc` is dL/dz (`B x N x M`, row-major per
    /// profile), `grad_pay` is dL/dp (`B x N`). Returns parameter gradients
    /// and the gradient with respect to the bids (`B x N x M`), which
    /// includes the bids' direct appearance in the payment rule.
    pub(crate) fn backward_pass(
        &self,
        pass: &DlaPass,
        bids: &[f64],
        grad_alloc: &[f64],
        grad_pay: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), AuctionError> {
        let (n, m) = (self.shape.n_buyers, self.shape.n_items);
        let nm = n * m;
        let batch = pass.batch;
        let out_dim = Self::output_dim(self.shape);
        let mut upstream = vec![0.0; batch * out_dim];
        let mut bid_grads = vec![0.0; batch * nm];
        let mut gq = vec![0.0; n + 1];
        for b in 0..batch {
            let up = &mut upstream[b * out_dim..(b + 1) * out_dim];
            for i in 0..n {
                let k = b * n + i;
                let gp = grad_pay[k];
                let a = pass.alpha[k];
                up[m * (n + 1) + i] = gp * pass.alloc_bid[k] * a * (1.0 - a);
                for j in 0..m {
                    let z = pass.probs[(b * m + j) * (n + 1) + i];
                    bid_grads[b * nm + i * m + j] = gp * a * z;
                }
            }
            for j in 0..m {
                let q = &pass.probs[(b * m + j) * (n + 1)..(b * m + j + 1) * (n + 1)];
                for i in 0..n {
                    gq[i] = grad_alloc[b * nm + i * m + j]
                        + grad_pay[b * n + i] * pass.alpha[b * n + i] * bids[b * nm + i * m + j];
                }
                gq[n] = 0.0;
                let dot: f64 = q.iter().zip(&gq).map(|(a, g)| a * g).sum();
                for k in 0..=n {
                    up[j * (n + 1) + k] = q[k] * (gq[k] - dot);
                }
            }
        }
        let grads = self
            .net
            .backward(&pass.trace, &Tensor::matrix(batch, out_dim, upstream)?)?;
        let in_dim = Self::input_dim(self.shape);
        let input_grads = grads.input.values();
        for b in 0..batch {
            for k in 0..nm {
                bid_grads[b * nm + k] += input_grads[b * in_dim + k];
            }
        }
        Ok((grads.params, bid_grads))
    }

    pub(crate) fn outcome_from_pass(&self, pass: &DlaPass, b: usize) -> AuctionOutcome {
        let (n, m) = (self.shape.n_buyers, self.shape.n_items);
        let mut allocation = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                allocation[i * m + j] = pass.alloc(self.shape, b, i, j);
            }
        }
        AuctionOutcome {
            shape: self.shape,
            allocation,
            payments: (0..n).map(|i| pass.payment(self.shape, b, i)).collect(),
        }
    }

    /// Outcomes for every profile of a batch.
    pub fn run_batch(&self, batch: &ProfileBatch) -> Result<Vec<AuctionOutcome>, AuctionError> {
        self.check_batch(batch)?;
        let pass = self.forward_pass(&batch.bids, &batch.reputations, batch.len)?;
        Ok((0..batch.len)
            .map(|b| self.outcome_from_pass(&pass, b))
            .collect())
    }

    /// Mean revenue over a batch.
    pub fn mean_revenue(&self, batch: &ProfileBatch) -> Result<f64, AuctionError> {
        self.check_batch(batch)?;
        let pass = self.forward_pass(&batch.bids, &batch.reputations, batch.len)?;
        let total: f64 = (0..batch.len)
            .flat_map(|b| (0..self.shape.n_buyers).map(move |i| (b, i)))
            .map(|(b, i)| pass.payment(self.shape, b, i))
            .sum();
        Ok(total / batch.len.max(1) as f64)
    }
}

/// Copies `truth.bids` with `bidder`'s rows replaced by `misreports` (`B x M`).
pub(crate) fn splice_misreports(truth: &ProfileBatch, bidder: usize, misreports: &[f64]) -> Vec<f64> {
    let (n, m) = (truth.shape.n_buyers, truth.shape.n_items);
    let mut bids = truth.bids.clone();
    for b in 0..truth.len {
        let dst = b * n * m + bidder * m;
        bids[dst..dst + m].copy_from_slice(&misreports[b * m..(b + 1) * m]);
    }
    bids
}

impl Mechanism for DlaNet {
    fn shape(&self) -> MarketShape {
        self.shape
    }

    fn run(&self, bids: &BidProfile, rep: &ReputationVector) -> Result<AuctionOutcome, AuctionError> {
        let batch = ProfileBatch::single(bids, rep)?;
        self.check_batch(&batch)?;
        let pass = self.forward_pass(&batch.bids, &batch.reputations, 1)?;
        Ok(self.outcome_from_pass(&pass, 0))
    }

    fn misreport_utilities(
        &self,
        bidder: usize,
        truth: &ProfileBatch,
        misreports: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), AuctionError> {
        self.check_batch(truth)?;
        let (n, m) = (self.shape.n_buyers, self.shape.n_items);
        if bidder >= n || misreports.len() != truth.len * m {
            return Err(AuctionError::Shape(format!(
                "misreports for bidder {bidder} must be {} x {m}",
                truth.len
            )));
        }
        let bids = splice_misreports(truth, bidder, misreports);
        let pass = self.forward_pass(&bids, &truth.reputations, truth.len)?;
        let mut utilities = Vec::with_capacity(truth.len);
        let mut grad_alloc = vec![0.0; truth.len * n * m];
        let mut grad_pay = vec![0.0; truth.len * n];
        for b in 0..truth.len {
            let values = &truth.profile_bids(b)[bidder * m..(bidder + 1) * m];
            let gained: f64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| pass.alloc(self.shape, b, bidder, j) * v)
                .sum();
            utilities.push(gained - pass.payment(self.shape, b, bidder));
            grad_alloc[b * n * m + bidder * m..b * n * m + (bidder + 1) * m]
                .copy_from_slice(values);
            grad_pay[b * n + bidder] = -1.0;
        }
        let (_, bid_grads) = self.backward_pass(&pass, &bids, &grad_alloc, &grad_pay)?;
        let mut row_grads = Vec::with_capacity(truth.len * m);
        for b in 0..truth.len {
            let start = b * n * m + bidder * m;
            row_grads.extend_from_slice(&bid_grads[start..start + m]);
        }
        Ok((utilities, row_grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(n: usize, m: usize) -> MarketShape {
        MarketShape::new(n, m).unwrap()
    }

    #[test]
    fn zero_bids_pay_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DlaNet::new(shape(3, 2), &[16, 16], &mut rng).unwrap();
        let bids = BidProfile::new(shape(3, 2), vec![0.0; 6]).unwrap();
        let rep = ReputationVector::new(vec![0.3, 0.9]).unwrap();
        let out = net.run(&bids, &rep).unwrap();
        assert!(out.payments.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DlaNet::new(shape(2, 2), &[8], &mut rng).unwrap();
        let bids = BidProfile::new(shape(3, 2), vec![0.1; 6]).unwrap();
        let rep = ReputationVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(net.run(&bids, &rep), Err(AuctionError::Shape(_))));
        let other = DenseNet::zeros(5, &[(3, Activation::Identity)]).unwrap();
        assert!(DlaNet::from_net(shape(2, 2), other).is_err());
    }

    #[test]
    fn misreport_gradient_matches_finite_differences() {
        let sh = shape(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = DlaNet::new(sh, &[12, 12], &mut rng).unwrap();
        let truth = ProfileBatch {
            shape: sh,
            len: 1,
            bids: vec![0.3, 0.6, 0.2, 0.8, 0.1, 0.5],
            reputations: vec![0.9, 0.4, 0.7],
        };
        let mis = vec![0.45, 0.2, 0.7];
        let (u, g) = net.misreport_utilities(1, &truth, &mis).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut up = mis.clone();
            up[j] += h;
            let mut dn = mis.clone();
            dn[j] -= h;
            let fd = (net.misreport_utilities(1, &truth, &up).unwrap().0[0]
                - net.misreport_utilities(1, &truth, &dn).unwrap().0[0])
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "item {j}: {fd} vs {}", g[j]);
        }
        let mut bids = truth.bids.clone();
        bids[3..6].copy_from_slice(&mis);
        let out = net
            .run(
                &BidProfile::new(sh, bids).unwrap(),
                &ReputationVector::new(truth.reputations.clone()).unwrap(),
            )
            .unwrap();
        assert!((out.buyer_utility(1, &truth.bids[3..6]) - u[0]).abs() < 1e-12);
    }
}
