use super::round::{Auctioneer, MarketState};
use super::{MarketError, ScenarioConfig};
use crate::auction::{
    train_dla, EpochMetrics, MarketDistribution, MarketShape, ReputationSource,
    SecondPrice, TrainConfig, TrainedAuction,
};
use crate::reputation::{ReputationBook, ReputationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RevenueMechanism {
    Dla,
    DlaLr,
    /// Second price on the filtered market's draws.
    Spa,
    /// Second price on the unfiltered market's draws.
    SpaUnfiltered,
}

impl RevenueMechanism {
    pub const ALL: [RevenueMechanism; 4] = [
        RevenueMechanism::Dla,
        RevenueMechanism::DlaLr,
        RevenueMechanism::Spa,
        RevenueMechanism::SpaUnfiltered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RevenueMechanism::Dla => "DLA",
            RevenueMechanism::DlaLr => "DLA-LR",
            RevenueMechanism::Spa => "SPA",
            RevenueMechanism::SpaUnfiltered => "SPA-unfiltered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Offline training of the learned auction on a filtered market (sellers'
/// reputations uniform on `[permitted, 1]`) and on an unfiltered one where a
/// `low_reputation_share` of sellers fall below the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueConfig {
    pub shape: MarketShape,
    pub permitted_reputation: f64,
    pub low_reputation_share: f64,
    pub train: TrainConfig,
    pub mechanisms: Vec<RevenueMechanism>,
}

impl RevenueConfig {
    pub fn filtered_market(&self) -> MarketDistribution {
        MarketDistribution {
            shape: self.shape,
            reputation: ReputationSource::Uniform {
                low: self.permitted_reputation,
                high: 1.0,
            },
            scale_by_reputation: true,
        }
    }

    pub fn unfiltered_market(&self) -> MarketDistribution {
        MarketDistribution {
            shape: self.shape,
            reputation: ReputationSource::Mixture {
                low_probability: self.low_reputation_share,
                low_band: (0.0, self.permitted_reputation),
                high_band: (self.permitted_reputation, 1.0),
            },
            scale_by_reputation: true,
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.mechanisms.is_empty() {
            return Err(MarketError::Config("no mechanisms requested".into()));
        }
        if !(0.0..=1.0).contains(&self.low_reputation_share) {
            return Err(MarketError::Config("low reputation share outside [0, 1]".into()));
        }
        self.filtered_market().reputation.validate()?;
        self.unfiltered_market().reputation.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevenueRow {
    pub epoch: usize,
    pub mechanism: RevenueMechanism,
    pub revenue: f64,
    pub mean_regret: f64,
}

#[derive(Debug, Clone)]
pub struct RevenueReport {
    /// Epoch-major, mechanisms in the configured order.
    pub rows: Vec<RevenueRow>,
    pub dla: Option<TrainedAuction>,
    pub dla_lr: Option<TrainedAuction>,
}

/// Trains the requested learned auctions and scores the second-price
/// baselines on the same test profiles. Both markets draw identical base
/// values; they differ only in sellers' reputations.
pub fn run_revenue_experiment(
    config: &RevenueConfig,
    mut progress: impl FnMut(RevenueMechanism, &EpochMetrics),
) -> Result<RevenueReport, MarketError> {
    config.validate()?;
    let (filtered, unfiltered) = (config.filtered_market(), config.unfiltered_market());
    let wants = |m| config.mechanisms.contains(&m);
    let train = |dist: &MarketDistribution, m: RevenueMechanism, progress: &mut dyn FnMut(RevenueMechanism, &EpochMetrics)| {
        train_dla(dist, &config.train, |e| progress(m, e))
    };
    let dla = if wants(RevenueMechanism::Dla) {
        Some(train(&filtered, RevenueMechanism::Dla, &mut progress)?)
    } else {
        None
    };
    let dla_lr = if wants(RevenueMechanism::DlaLr) {
        Some(train(&unfiltered, RevenueMechanism::DlaLr, &mut progress)?)
    } else {
        None
    };
    let spa = SecondPrice::new(config.shape);
    let spa_filtered = spa.mean_revenue(&config.train.test_batch(&filtered))?;
    let spa_unfiltered = spa.mean_revenue(&config.train.test_batch(&unfiltered))?;

    let mut rows = Vec::with_capacity(config.train.epochs * config.mechanisms.len());
    for epoch in 0..config.train.epochs {
        for &m in &config.mechanisms {
            let (revenue, mean_regret) = match m {
                RevenueMechanism::Dla | RevenueMechanism::DlaLr => {
                    let trained = if m == RevenueMechanism::Dla { &dla } else { &dla_lr };
                    let e = &trained.as_ref().expect("trained above").metrics[epoch];
                    (e.revenue, e.mean_regret)
                }
                RevenueMechanism::Spa => (spa_filtered, 0.0),
                RevenueMechanism::SpaUnfiltered => (spa_unfiltered, 0.0),
            };
            rows.push(RevenueRow {
                epoch,
                mechanism: m,
                revenue,
                mean_regret,
            });
        }
    }
    Ok(RevenueReport { rows, dla, dla_lr })
}

/// The reliability grid: every combination of attack strength, permitted
/// reputation and seed is one independent market run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityGrid {
    pub attack_strengths: Vec<f64>,
    pub permitted_reputations: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Sellers `0..malicious_sellers` poison their models; the rest are honest.
    pub malicious_sellers: usize,
}

impl ReliabilityGrid {
    /// Cells in output order: attack strength, then threshold, then seed.
    pub fn cells(&self) -> Vec<(f64, f64, u64)> {
        let mut out = Vec::new();
        for &a in &self.attack_strengths {
            for &p in &self.permitted_reputations {
                for &s in &self.seeds {
                    out.push((a, p, s));
                }
            }
        }
        out
    }

    pub fn scenario(&self, base: &ScenarioConfig, attack: f64, permitted: f64, seed: u64) -> ScenarioConfig {
        let mut config = base.clone();
        config.permitted_reputation = permitted;
        config.master_seed = seed;
        config.attack_strengths = (0..base.shape.n_items)
            .map(|j| if j < self.malicious_sellers { attack } else { 0.0 })
            .collect();
        config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub attack_strength: f64,
    pub permitted_reputation: f64,
    pub seed: u64,
    pub mean_accuracy: Option<f64>,
    pub trades_executed: usize,
}

/// Runs one grid cell with second-price (or the supplied) pricing and
/// returns the finished market alongside its summary.
pub fn run_reliability_cell(
    base: &ScenarioConfig,
    grid: &ReliabilityGrid,
    auctioneer: &Auctioneer,
    cell: (f64, f64, u64),
) -> Result<(CellResult, MarketState), MarketError> {
    let (attack, permitted, seed) = cell;
    if grid.malicious_sellers > base.shape.n_items {
        return Err(MarketError::Config(format!(
            "{} malicious sellers in a market of {}",
            grid.malicious_sellers, base.shape.n_items
        )));
    }
    let mut market = MarketState::new(grid.scenario(base, attack, permitted, seed), auctioneer.clone())?;
    market.run_all()?;
    let result = CellResult {
        attack_strength: attack,
        permitted_reputation: permitted,
        seed,
        mean_accuracy: market.mean_accuracy(),
        trades_executed: market.scored_trades().count(),
    };
    Ok((result, market))
}

/// Every cell in grid order, run sequentially.
pub fn run_reliability_experiment(
    base: &ScenarioConfig,
    grid: &ReliabilityGrid,
    auctioneer: &Auctioneer,
) -> Result<Vec<CellResult>, MarketError> {
    grid.cells()
        .into_iter()
        .map(|cell| run_reliability_cell(base, grid, auctioneer, cell).map(|(r, _)| r))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReputationRow {
    pub buyer: String,
    pub seller: String,
    pub direct: Option<f64>,
    pub recommended: Option<f64>,
    pub referenced: Option<f64>,
    pub integrated: f64,
}

/// Every buyer's integrated view of every seller at round `now`.
pub fn reputation_table(
    book: &ReputationBook,
    buyers: &[String],
    sellers: &[String],
    params: &ReputationParams,
    now: u64,
) -> Vec<ReputationRow> {
    let mut rows = Vec::with_capacity(buyers.len() * sellers.len());
    for b in buyers {
        for s in sellers {
            let r = book.integrated(b, s, buyers, params, now);
            rows.push(ReputationRow {
                buyer: b.clone(),
                seller: s.clone(),
                direct: r.direct,
                recommended: r.recommended,
                referenced: r.referenced,
                integrated: r.value,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mechanism_names() {
        for m in RevenueMechanism::ALL {
            assert_eq!(RevenueMechanism::parse(m.name()), Some(m));
        }
        assert_eq!(RevenueMechanism::parse("spa"), None);
    }

    #[test]
    fn grid_order_and_size() {
        let grid = ReliabilityGrid {
            attack_strengths: vec![0.0, 0.5],
            permitted_reputations: vec![0.0, 0.4, 0.8],
            seeds: vec![1, 2],
            malicious_sellers: 1,
        };
        let cells = grid.cells();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[0], (0.0, 0.0, 1));
        assert_eq!(cells[1], (0.0, 0.0, 2));
        assert_eq!(cells[2], (0.0, 0.4, 1));
        let base = ScenarioConfig::new(MarketShape::new(3, 3).unwrap());
        let s = grid.scenario(&base, 0.5, 0.8, 2);
        assert_eq!(s.attack_strengths, vec![0.5, 0.0, 0.0]);
        assert_eq!(s.master_seed, 2);
    }
}
