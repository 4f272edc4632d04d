use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dla::splice_misreports;
use super::{
    estimate_regret_batch, AuctionError, DlaNet, ProfileBatch, ProfileSampler, RegretEstimate,
    RegretSearch,
};
use crate::nn::OptimState;

/// Hyperparameters of the augmented-Lagrangian training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Minibatch steps per epoch; every minibatch is freshly sampled.
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    pub misreport_steps: usize,
    pub misreport_lr: f64,
    /// Starting value of every bidder's Lagrange multiplier.
    pub initial_multiplier: f64,
    /// Quadratic penalty weight.
    pub rho: f64,
    /// Added to `rho` at every multiplier update; 0 keeps it fixed.
    pub rho_increment: f64,
    pub multiplier_update_period: usize,
    pub test_samples: usize,
    pub test_misreport_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            batch_size: 128,
            epochs: 40,
            steps_per_epoch: 100,
            learning_rate: 1e-3,
            misreport_steps: 25,
            misreport_lr: 0.1,
            initial_multiplier: 1.0,
            rho: 1.0,
            rho_increment: 0.0,
            multiplier_update_period: 2,
            test_samples: 1000,
            test_misreport_steps: 25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AuctionError> {
        let fail = |msg: &str| Err(AuctionError::Invalid(msg.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 || self.test_samples == 0 {
            return fail("batch size, steps per epoch and test samples must be positive");
        }
        if !(self.rho > 0.0) || !(self.rho_increment >= 0.0) {
            return fail("rho must be positive and its increment nonnegative");
        }
        if !(self.initial_multiplier >= 0.0) {
            return fail("Lagrange multipliers must be nonnegative");
        }
        if self.multiplier_update_period == 0 {
            return fail("multiplier update period must be >= 1 epoch");
        }
        RegretSearch::new(self.misreport_steps, self.misreport_lr)?;
        RegretSearch::new(self.test_misreport_steps, self.misreport_lr)?;
        Ok(())
    }

    pub fn train_search(&self) -> RegretSearch {
        RegretSearch {
            steps: self.misreport_steps,
            learning_rate: self.misreport_lr,
            upper: 1.0,
        }
    }

    pub fn test_search(&self) -> RegretSearch {
        RegretSearch {
            steps: self.test_misreport_steps,
            learning_rate: self.misreport_lr,
            upper: 1.0,
        }
    }

    /// The held-out profiles used for per-epoch metrics. Drawn from their own
    /// stream, so other mechanisms can be scored on identical draws.
    pub fn test_batch(&self, sampler: &dyn ProfileSampler) -> ProfileBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        sampler.sample_batch(&mut rng, self.test_samples)
    }
}

/// `-revenue + sum_i lambda_i * rgt_i + rho / 2 * sum_i rgt_i^2`
pub fn lagrangian_loss(revenue: f64, regrets: &RegretEstimate, multipliers: &[f64], rho: f64) -> f64 {
    assert_eq!(
        regrets.per_bidder.len(),
        multipliers.len(),
        "one multiplier per bidder"
    );
    let linear: f64 = regrets
        .per_bidder
        .iter()
        .zip(multipliers)
        .map(|(r, l)| l * r)
        .sum();
    let quadratic: f64 = regrets.per_bidder.iter().map(|r| r * r).sum();
    -revenue + linear + 0.5 * rho * quadratic
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean revenue on the test profiles.
    pub revenue: f64,
    /// Test regret averaged over bidders.
    pub mean_regret: f64,
    /// Largest per-bidder test regret.
    pub max_regret: f64,
    /// Mean training loss over the epoch's minibatches.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedAuction {
    pub net: DlaNet,
    pub metrics: Vec<EpochMetrics>,
    pub multipliers: Vec<f64>,
    pub rho: f64,
}

struct StepResult {
    loss: f64,
    regrets: Vec<f64>,
}

fn train_step(
    net: &mut DlaNet,
    optim: &mut OptimState,
    batch: &ProfileBatch,
    multipliers: &[f64],
    rho: f64,
    search: &RegretSearch,
) -> Result<StepResult, AuctionError> {
    let shape = net.market();
    let (n, m) = (shape.n_buyers, shape.n_items);
    let nm = n * m;
    let len = batch.len;
    let scale = 1.0 / len as f64;

    let regret = estimate_regret_batch(&*net, batch, search)?;
    let rgt = regret.mean_per_bidder();

    // Truthful rows first, then one block of misreported rows per bidder.
    let rows = (n + 1) * len;
    let mut bids = Vec::with_capacity(rows * nm);
    bids.extend_from_slice(&batch.bids);
    let mut reps = Vec::with_capacity(rows * m);
    reps.extend_from_slice(&batch.reputations);
    for (bidder, mis) in regret.best_misreports.iter().enumerate() {
        bids.extend(splice_misreports(batch, bidder, mis));
        reps.extend_from_slice(&batch.reputations);
    }
    let pass = net.forward_pass(&bids, &reps, rows)?;

    let mut revenue = 0.0;
    for b in 0..len {
        for i in 0..n {
            revenue += pass.payment(shape, b, i);
        }
    }
    revenue *= scale;
    let loss = lagrangian_loss(revenue, &rgt, multipliers, rho);
    if !loss.is_finite() {
        return Err(AuctionError::Diverged {
            epoch: 0,
            reason: "non-finite loss".into(),
        });
    }

    let coef: Vec<f64> = (0..n)
        .map(|i| (multipliers[i] + rho * rgt.per_bidder[i]) * scale)
        .collect();
    let mut grad_alloc = vec![0.0; rows * nm];
    let mut grad_pay = vec![0.0; rows * n];
    for b in 0..len {
        let values = batch.profile_bids(b);
        for i in 0..n {
            grad_pay[b * n + i] = -scale;
            if regret.per_sample[b * n + i] <= 0.0 {
                continue;
            }
            let c = coef[i];
            grad_pay[b * n + i] += c;
            let mis_row = (i + 1) * len + b;
            grad_pay[mis_row * n + i] = -c;
            for j in 0..m {
                let v = values[i * m + j];
                grad_alloc[b * nm + i * m + j] = -c * v;
                grad_alloc[mis_row * nm + i * m + j] = c * v;
            }
        }
    }
    let (grads, _) = net.backward_pass(&pass, &bids, &grad_alloc, &grad_pay)?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(AuctionError::Diverged {
            epoch: 0,
            reason: "non-finite gradient".into(),
        });
    }
    optim.step(net.net_mut().params_mut(), &grads)?;
    Ok(StepResult {
        loss,
        regrets: rgt.per_bidder,
    })
}

/// Test-set revenue and regret of a net.
pub(crate) fn evaluate(
    net: &DlaNet,
    test: &ProfileBatch,
    search: &RegretSearch,
) -> Result<(f64, RegretEstimate), AuctionError> {
    let revenue = net.mean_revenue(test)?;
    let regret = estimate_regret_batch(net, test, search)?.mean_per_bidder();
    Ok((revenue, regret))
}

/// Trains a DLA net by minimising negated revenue under an augmented
/// Lagrangian on per-bidder regret. Every `multiplier_update_period` epochs
/// the multipliers move by `lambda_i += rho * rgt_i`, using the bidder's mean
/// training regret over the last epoch.
pub fn train_dla(
    sampler: &dyn ProfileSampler,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainedAuction, AuctionError> {
    config.validate()?;
    let shape = sampler.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = DlaNet::new(shape, &config.hidden, &mut rng)?;
    let mut optim = OptimState::adam(config.learning_rate, net.net().param_count())?;
    let test = config.test_batch(sampler);
    let (search, test_search) = (config.train_search(), config.test_search());
    let mut multipliers = vec![config.initial_multiplier; shape.n_buyers];
    let mut rho = config.rho;
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut regret_sum = vec![0.0; shape.n_buyers];
        for _ in 0..config.steps_per_epoch {
            let batch = sampler.sample_batch(&mut rng, config.batch_size);
            let step = train_step(&mut net, &mut optim, &batch, &multipliers, rho, &search)
                .map_err(|e| match e {
                    AuctionError::Diverged { reason, .. } => AuctionError::Diverged { epoch, reason },
                    other => other,
                })?;
            loss_sum += step.loss;
            for (acc, r) in regret_sum.iter_mut().zip(&step.regrets) {
                *acc += r;
            }
        }
        if (epoch + 1) % config.multiplier_update_period == 0 {
            for (lambda, r) in multipliers.iter_mut().zip(&regret_sum) {
                *lambda += rho * r / config.steps_per_epoch as f64;
            }
            rho += config.rho_increment;
        }
        let (revenue, regret) = evaluate(&net, &test, &test_search)?;
        let record = EpochMetrics {
            epoch,
            revenue,
            mean_regret: regret.mean(),
            max_regret: regret.max(),
            loss: loss_sum / config.steps_per_epoch as f64,
        };
        if !record.loss.is_finite() || !record.revenue.is_finite() {
            return Err(AuctionError::Diverged {
                epoch,
                reason: "non-finite metrics".into(),
            });
        }
        on_epoch(&record);
        metrics.push(record);
    }
    Ok(TrainedAuction {
        net,
        metrics,
        multipliers,
        rho,
    })
}
