use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, MarketError, MechanismKind, ScenarioConfig};
use crate::auction::{spa_run, BidProfile, DlaNet, Mechanism, ReputationVector};
use crate::ledger::{
    ChainParams, CommitResult, Ledger, ModelListing, Payload, ReputationRating, TradeRecord,
    Transaction,
};
use crate::reputation::{InteractionEvent, Outcome, ReputationBook};
use crate::tltask::{
    evaluate, fine_tune, gen_target, gen_task, pretrain, rate_outcome, Classifier, EvalReport,
};

/// Prices the eligible models each round.
#[derive(Debug, Clone)]
pub enum Auctioneer {
    SecondPrice,
    Learned(DlaNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub buyer: usize,
    pub seller: usize,
    pub price: f64,
    pub report: EvalReport,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    pub warmup: bool,
    /// Market reputation of every seller at the start of the round.
    pub reputations: Vec<f64>,
    pub eligible: Vec<usize>,
    /// Submitted bids, `N x M` row-major; zero for ineligible sellers.
    pub bids: Vec<f64>,
    pub trades: Vec<Trade>,
    pub revenue: f64,
    pub block_height: Option<u64>,
}

impl RoundOutcome {
    pub fn skipped(&self) -> bool {
        self.eligible.is_empty()
    }
}

/// One market: sellers' pretrained models, the chain, and the reputation
/// book rebuilt from committed ratings.
#[derive(Debug, Clone)]
pub struct MarketState {
    config: ScenarioConfig,
    auctioneer: Auctioneer,
    ledger: Ledger,
    book: ReputationBook,
    ratings_seen: usize,
    models: Vec<Classifier>,
    nonces: BTreeMap<String, u64>,
    buyers: Vec<String>,
    sellers: Vec<String>,
    history: Vec<RoundOutcome>,
}

impl MarketState {
    /// Pretrains every seller's model and commits their listings at round 0.
    pub fn new(config: ScenarioConfig, auctioneer: Auctioneer) -> Result<Self, MarketError> {
        config.validate()?;
        match (&auctioneer, config.mechanism) {
            (Auctioneer::SecondPrice, MechanismKind::Spa) => {}
            (Auctioneer::Learned(net), MechanismKind::Dla | MechanismKind::DlaLr) => {
                if net.market() != config.shape {
                    return Err(MarketError::Config(format!(
                        "auction net is {}x{}, market is {}x{}",
                        net.market().n_buyers,
                        net.market().n_items,
                        config.shape.n_buyers,
                        config.shape.n_items
                    )));
                }
            }
            (_, m) => {
                return Err(MarketError::Config(format!(
                    "auctioneer does not match mechanism {}",
                    m.name()
                )))
            }
        }
        let ledger = Ledger::new(ChainParams::new(config.delegates, config.key_seed))?;
        let mut state = Self {
            buyers: config.buyer_ids(),
            sellers: config.seller_ids(),
            config,
            auctioneer,
            ledger,
            book: ReputationBook::new(),
            ratings_seen: 0,
            models: Vec::new(),
            nonces: BTreeMap::new(),
            history: Vec::new(),
        };
        let master = state.config.master_seed;
        for (j, attack) in state.config.attack_strengths.clone().into_iter().enumerate() {
            let data = gen_task(&state.config.task, derive_seed(master, "source", &[j as u64]))?;
            let model = pretrain(
                &data.source,
                attack,
                &state.config.classifier,
                derive_seed(master, "pretrain", &[j as u64]),
            )?;
            let holdout = state
                .config
                .task
                .source_holdout(state.config.task.target_test_samples, derive_seed(master, "holdout", &[j as u64]));
            let claimed = evaluate(&model, &holdout)?.accuracy;
            let size_kb = (model.net.param_count() as u64 * 8).div_ceil(1024).max(1);
            let listing = ModelListing::signed(
                state.ledger.signer(),
                &state.sellers[j],
                &state.config.task_tag,
                claimed,
                size_kb,
                0.0,
                0,
            );
            state.submit(&state.sellers[j].clone(), Payload::ModelInfo(listing), 0)?;
            state.models.push(model);
        }
        state.ledger.propose_and_commit(0)?;
        Ok(state)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn book(&self) -> &ReputationBook {
        &self.book
    }

    pub fn history(&self) -> &[RoundOutcome] {
        &self.history
    }

    pub fn buyers(&self) -> &[String] {
        &self.buyers
    }

    pub fn sellers(&self) -> &[String] {
        &self.sellers
    }

    fn submit(&mut self, author: &str, payload: Payload, round: u64) -> Result<(), MarketError> {
        let nonce = self.nonces.entry(author.to_string()).or_insert(0);
        let tx = Transaction::signed(self.ledger.signer(), author, *nonce, payload);
        *nonce += 1;
        self.ledger.submit(tx).map_err(|e| MarketError::Round {
            round,
            reason: format!("transaction refused: {e}"),
        })
    }

    /// Pulls newly committed ratings into the reputation book.
    fn sync_book(&mut self) {
        let ratings = &self.ledger.contracts().ratings;
        for r in &ratings[self.ratings_seen..] {
            self.book.record(r.event());
        }
        self.ratings_seen = ratings.len();
    }

    pub fn market_reputation(&self, seller: usize, now: u64) -> f64 {
        self.book
            .market_reputation(&self.sellers[seller], &self.buyers, &self.config.reputation, now)
    }

    /// Listing, filtering, auction, fine-tuning, rating and commit for the
    /// next round.
    pub fn run_round(&mut self) -> Result<RoundOutcome, MarketError> {
        let round = self.history.len() as u64 + 1;
        if round > self.config.rounds {
            return Err(MarketError::Round {
                round,
                reason: format!("scenario has only {} rounds", self.config.rounds),
            });
        }
        let (n, m) = (self.config.shape.n_buyers, self.config.shape.n_items);
        let master = self.config.master_seed;
        let warmup = round <= self.config.warmup_rounds;
        let filtering = self.config.mechanism.filters() && !warmup;

        let listed: Vec<bool> = {
            let listings = self.ledger.query_model_listings(Some(&self.config.task_tag));
            self.sellers
                .iter()
                .map(|s| listings.iter().any(|l| &l.owner == s))
                .collect()
        };
        let reputations: Vec<f64> = (0..m).map(|j| self.market_reputation(j, round)).collect();
        let eligible: Vec<usize> = (0..m)
            .filter(|&j| listed[j] && (!filtering || reputations[j] >= self.config.permitted_reputation))
            .collect();

        let mut value_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "values", &[round]));
        let base: Vec<f64> = (0..n * m).map(|_| value_rng.gen()).collect();
        let mut outcome = RoundOutcome {
            round,
            warmup,
            reputations: reputations.clone(),
            eligible: eligible.clone(),
            bids: vec![0.0; n * m],
            trades: Vec::new(),
            revenue: 0.0,
            block_height: None,
        };
        if eligible.is_empty() {
            self.history.push(outcome.clone());
            return Ok(outcome);
        }

        let mut bids = vec![0.0; n * m];
        let mut auction_reps = vec![0.0; m];
        for &j in &eligible {
            auction_reps[j] = reputations[j];
            for i in 0..n {
                bids[i * m + j] = base[i * m + j] * reputations[j];
            }
        }
        let sales = self.allocate(round, &bids, &auction_reps, &eligible)?;
        outcome.bids = bids;

        let mut staged = self.book.clone();
        let mut trades = Vec::with_capacity(sales.len());
        for (buyer, seller, price) in sales {
            let trade_seed = derive_seed(master, "trade", &[round, seller as u64]);
            let (train, test) = gen_target(&self.config.task, trade_seed)?;
            let tuned = fine_tune(
                &self.models[seller],
                &train,
                self.config.classifier.fine_tune_epochs,
                &self.config.classifier,
                derive_seed(master, "fine-tune", &[round, seller as u64]),
            )?;
            let report = evaluate(&tuned, &test)?;
            let rating = rate_outcome(&report, self.config.rating_threshold);
            staged.record(InteractionEvent {
                buyer: self.buyers[buyer].clone(),
                seller: self.sellers[seller].clone(),
                round,
                outcome: rating,
            });
            trades.push(Trade {
                buyer,
                seller,
                price,
                report,
                outcome: rating,
            });
        }
        for t in &trades {
            let (b, s) = (self.buyers[t.buyer].clone(), self.sellers[t.seller].clone());
            let reputation = staged
                .integrated(&b, &s, &self.buyers, &self.config.reputation, round)
                .value;
            let record = TradeRecord {
                round,
                buyer: b.clone(),
                seller: s.clone(),
                price: t.price,
                accuracy: t.report.accuracy,
            };
            self.submit(&b, Payload::TradeRecord(record), round)?;
            let rating = ReputationRating {
                round,
                buyer: b.clone(),
                seller: s,
                outcome: t.outcome,
                reputation,
            };
            self.submit(&b, Payload::ReputationRating(rating), round)?;
        }
        if let CommitResult::Committed { height } = self.ledger.propose_and_commit(round)? {
            outcome.block_height = Some(height);
        }
        self.sync_book();

        outcome.revenue = trades.iter().map(|t| t.price).sum();
        outcome.trades = trades;
        self.history.push(outcome.clone());
        Ok(outcome)
    }

    /// Returns `(buyer, seller, price)` for every model sold this round.
    fn allocate(
        &self,
        round: u64,
        bids: &[f64],
        reps: &[f64],
        eligible: &[usize],
    ) -> Result<Vec<(usize, usize, f64)>, MarketError> {
        let (n, m) = (self.config.shape.n_buyers, self.config.shape.n_items);
        let mut sales = Vec::new();
        match &self.auctioneer {
            Auctioneer::SecondPrice => {
                for &j in eligible {
                    let column: Vec<f64> = (0..n).map(|i| bids[i * m + j]).collect();
                    let (winner, price) = spa_run(&column)?;
                    sales.push((winner, j, price));
                }
            }
            Auctioneer::Learned(net) => {
                let profile = BidProfile::new(self.config.shape, bids.to_vec())?;
                let out = net.run(&profile, &ReputationVector::new(reps.to_vec())?)?;
                // Each buyer pays the same share alpha_i of every bid it wins,
                // so expected charges equal the mechanism's payment.
                let alpha: Vec<f64> = (0..n)
                    .map(|i| {
                        let owed: f64 = (0..m).map(|j| out.alloc(i, j) * bids[i * m + j]).sum();
                        if owed > 0.0 {
                            (out.payments[i] / owed).clamp(0.0, 1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.master_seed, "allocate", &[round]));
                for &j in eligible {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += out.alloc(i, j);
                        if u < acc {
                            sales.push((i, j, alpha[i] * bids[i * m + j]));
                            break;
                        }
                    }
                }
            }
        }
        Ok(sales)
    }

    /// Runs every remaining round.
    pub fn run_all(&mut self) -> Result<&[RoundOutcome], MarketError> {
        while (self.history.len() as u64) < self.config.rounds {
            self.run_round()?;
        }
        Ok(&self.history)
    }

    /// Trades outside warmup.
    pub fn scored_trades(&self) -> impl Iterator<Item = &Trade> + '_ {
        self.history.iter().filter(|r| !r.warmup).flat_map(|r| &r.trades)
    }

    /// Mean target accuracy over scored trades, `None` when there were none.
    pub fn mean_accuracy(&self) -> Option<f64> {
        let accs: Vec<f64> = self.scored_trades().map(|t| t.report.accuracy).collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }
}
