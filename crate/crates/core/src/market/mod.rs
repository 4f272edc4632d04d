//! The simulated model market: reputation-filtered auctions, transfer and
//! fine-tuning by the winners, ratings committed to the ledger, and the two
//! experiments built on top.

mod experiment;
mod round;

pub use experiment::{
    reputation_table, run_reliability_cell, run_reliability_experiment, run_revenue_experiment,
    CellResult, ReliabilityGrid, RevenueConfig, RevenueMechanism, RevenueReport, RevenueRow,
    ReputationRow,
};
pub use round::{Auctioneer, MarketState, RoundOutcome, Trade};

use sha2::{Digest, Sha256};

use crate::auction::{AuctionError, MarketShape};
use crate::ledger::LedgerError;
use crate::reputation::{ReputationError, ReputationParams};
use crate::tltask::{ClassifierConfig, TaskError, TaskSpec};

#[derive(Debug, thiserror::Error)]
pub enum MarketError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Reputation(#[from] ReputationError),
    #[error("round {round}: {reason}")]
    Round { round: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MechanismKind {
    Dla,
    /// The learned auction without reputation filtering.
    DlaLr,
    Spa,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Dla => "DLA",
            MechanismKind::DlaLr => "DLA-LR",
            MechanismKind::Spa => "SPA",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DLA" => Some(MechanismKind::Dla),
            "DLA-LR" => Some(MechanismKind::DlaLr),
            "SPA" => Some(MechanismKind::Spa),
            _ => None,
        }
    }

    pub fn filters(self) -> bool {
        self != MechanismKind::DlaLr
    }
}

/// Everything one simulated market run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub shape: MarketShape,
    /// Trading rounds, numbered `1..=rounds`; round 0 commits the listings.
    pub rounds: u64,
    /// Leading rounds that skip filtering so reputations can form; their
    /// trades are excluded from accuracy metrics.
    pub warmup_rounds: u64,
    pub mechanism: MechanismKind,
    pub permitted_reputation: f64,
    /// One entry per seller.
    pub attack_strengths: Vec<f64>,
    pub reputation: ReputationParams,
    pub rating_threshold: f64,
    pub master_seed: u64,
    pub task: TaskSpec,
    pub classifier: ClassifierConfig,
    pub delegates: usize,
    pub key_seed: u64,
    pub task_tag: String,
}

impl ScenarioConfig {
    pub fn new(shape: MarketShape) -> Self {
        Self {
            shape,
            rounds: 30,
            warmup_rounds: 5,
            mechanism: MechanismKind::Spa,
            permitted_reputation: 0.5,
            attack_strengths: vec![0.0; shape.n_items],
            reputation: ReputationParams::default(),
            rating_threshold: 0.75,
            master_seed: 0,
            task: TaskSpec::default(),
            classifier: ClassifierConfig::default(),
            delegates: 3,
            key_seed: 0,
            task_tag: "traffic-signs".into(),
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let fail = |m: String| Err(MarketError::Config(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.attack_strengths.len() != self.shape.n_items {
            return fail(format!(
                "{} attack strengths for {} sellers",
                self.attack_strengths.len(),
                self.shape.n_items
            ));
        }
        if let Some(a) = self.attack_strengths.iter().find(|a| !unit(**a)) {
            return fail(format!("attack strength {a} outside [0, 1]"));
        }
        if !unit(self.permitted_reputation) || !unit(self.rating_threshold) {
            return fail("permitted reputation and rating threshold must lie in [0, 1]".into());
        }
        if self.warmup_rounds > self.rounds {
            return fail("warmup longer than the run".into());
        }
        if self.delegates == 0 {
            return fail("at least one delegate is required".into());
        }
        if self.task_tag.is_empty() {
            return fail("empty task tag".into());
        }
        if self.classifier.batch_size == 0 || self.classifier.hidden == 0 || !(self.classifier.learning_rate > 0.0) {
            return fail("classifier needs positive batch size, width and learning rate".into());
        }
        self.task.validate()?;
        Ok(())
    }

    pub fn buyer_ids(&self) -> Vec<String> {
        (0..self.shape.n_buyers).map(|i| format!("buyer-{i}")).collect()
    }

    pub fn seller_ids(&self) -> Vec<String> {
        (0..self.shape.n_items).map(|j| format!("seller-{j}")).collect()
    }
}

/// Child seed for the stream named `label` at position `path` under
/// `master`. Streams never share draws, so adding one leaves others intact.
pub fn derive_seed(master: u64, label: &str, path: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
