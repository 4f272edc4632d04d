use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlmarket::auction::{spa_run, DlaNet, MarketShape, TrainConfig};
use tlmarket::ledger::{dump_chain, Ledger, Payload};
use tlmarket::market::*;
use tlmarket::reputation::ReputationBook;

fn shape() -> MarketShape {
    MarketShape::new(3, 3).unwrap()
}

fn scenario(attack: f64, permitted: f64, seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(shape());
    c.rounds = 12;
    c.warmup_rounds = 3;
    c.permitted_reputation = permitted;
    c.attack_strengths = vec![attack, 0.0, 0.0];
    c.master_seed = seed;
    c
}

fn run(config: ScenarioConfig, auctioneer: Auctioneer) -> MarketState {
    let mut market = MarketState::new(config, auctioneer).unwrap();
    market.run_all().unwrap();
    market
}

#[test]
fn everyone_filtered_means_skipped_rounds() {
    let mut c = scenario(0.0, 1.0, 0);
    c.warmup_rounds = 0;
    let market = run(c, Auctioneer::SecondPrice);
    for r in market.history() {
        assert!(r.skipped());
        assert_eq!(r.revenue, 0.0);
        assert!(r.trades.is_empty());
        assert_eq!(r.block_height, None);
    }
    assert_eq!(market.mean_accuracy(), None);
    assert_eq!(market.ledger().chain().len(), 1, "only the listing block");
}

#[test]
fn spa_revenue_is_sum_of_second_prices() {
    let market = run(scenario(0.5, 0.5, 1), Auctioneer::SecondPrice);
    let m = 3;
    for r in market.history().iter().filter(|r| !r.skipped()) {
        let mut expected = 0.0;
        for &j in &r.eligible {
            let column: Vec<f64> = (0..3).map(|i| r.bids[i * m + j]).collect();
            expected += spa_run(&column).unwrap().1;
        }
        assert!((r.revenue - expected).abs() < 1e-12, "round {}", r.round);
        assert_eq!(r.trades.len(), r.eligible.len());
    }
}

#[test]
fn reruns_are_identical() {
    let a = run(scenario(0.5, 0.4, 7), Auctioneer::SecondPrice);
    let b = run(scenario(0.5, 0.4, 7), Auctioneer::SecondPrice);
    assert_eq!(a.history(), b.history());
    assert_eq!(dump_chain(a.ledger().chain()), dump_chain(b.ledger().chain()));
    let c = run(scenario(0.5, 0.4, 8), Auctioneer::SecondPrice);
    assert_ne!(a.history(), c.history());
}

#[test]
fn money_and_records_are_conserved() {
    let market = run(scenario(0.8, 0.5, 3), Auctioneer::SecondPrice);
    for r in market.history() {
        let paid: f64 = r.trades.iter().map(|t| t.price).sum();
        assert_eq!(paid, r.revenue);
        let Some(h) = r.block_height else {
            assert!(r.trades.is_empty());
            continue;
        };
        let block = &market.ledger().chain()[h as usize];
        assert_eq!(block.round, r.round);
        let trades = block.transactions.iter().filter(|t| matches!(t.payload, Payload::TradeRecord(_)));
        let ratings = block.transactions.iter().filter(|t| matches!(t.payload, Payload::ReputationRating(_)));
        assert_eq!(trades.count(), r.trades.len());
        assert_eq!(ratings.count(), r.trades.len());
        for (t, tx) in r.trades.iter().zip(block.transactions.iter().step_by(2)) {
            let Payload::TradeRecord(rec) = &tx.payload else {
                panic!("expected trade record first");
            };
            assert_eq!(rec.price, t.price);
            assert_eq!(rec.accuracy, t.report.accuracy);
        }
    }
}

#[test]
fn filtered_mechanisms_never_admit_low_reputation_sellers() {
    for permitted in [0.4, 0.6, 0.8] {
        let market = run(scenario(0.8, permitted, 5), Auctioneer::SecondPrice);
        for r in market.history().iter().filter(|r| !r.warmup) {
            for &j in &r.eligible {
                assert!(r.reputations[j] >= permitted);
            }
            for t in &r.trades {
                assert!(r.eligible.contains(&t.seller));
            }
        }
    }
}

#[test]
fn replay_rebuilds_the_reputation_table() {
    let market = run(scenario(0.5, 0.6, 9), Auctioneer::SecondPrice);
    let c = market.config();
    let live = reputation_table(market.book(), market.buyers(), market.sellers(), &c.reputation, c.rounds);

    let dump = dump_chain(market.ledger().chain());
    let chain = tlmarket::ledger::verify_dump(&dump, market.ledger().params()).unwrap();
    let ledger = Ledger::replay(market.ledger().params().clone(), chain).unwrap();
    let book = ReputationBook::from_events(&ledger.contracts().all_events());
    let replayed = reputation_table(&book, market.buyers(), market.sellers(), &c.reputation, c.rounds);
    assert_eq!(live, replayed);
    assert_eq!(ledger.contracts(), market.ledger().contracts());
}

#[test]
fn poisoned_seller_loses_reputation() {
    let market = run(scenario(1.0, 0.0, 2), Auctioneer::SecondPrice);
    let now = market.config().rounds;
    assert!(market.market_reputation(0, now) < 0.3);
    assert!(market.market_reputation(1, now) > 0.7);
}

#[test]
fn honest_markets_ignore_the_threshold() {
    let accs: Vec<_> = [0.0, 0.4, 0.8]
        .iter()
        .map(|&p| run(scenario(0.0, p, 4), Auctioneer::SecondPrice).mean_accuracy())
        .collect();
    assert!(accs.iter().all(|a| *a == accs[0]), "{accs:?}");
}

#[test]
fn learned_auctioneer_runs_and_unfiltered_variant_skips_filtering() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DlaNet::new(shape(), &[16], &mut rng).unwrap();
    let mut c = scenario(1.0, 0.9, 6);
    c.mechanism = MechanismKind::DlaLr;
    let market = run(c.clone(), Auctioneer::Learned(net.clone()));
    for r in market.history() {
        assert_eq!(r.eligible, vec![0, 1, 2]);
        let paid: f64 = r.trades.iter().map(|t| t.price).sum();
        assert_eq!(paid, r.revenue);
        for t in &r.trades {
            assert!(t.price >= 0.0 && t.price <= r.bids[t.buyer * 3 + t.seller] + 1e-12);
        }
    }
    c.mechanism = MechanismKind::Dla;
    let filtered = run(c, Auctioneer::Learned(net));
    assert!(filtered.history().iter().any(|r| !r.warmup && r.eligible.len() < 3));
}

#[test]
fn mismatched_auctioneer_is_rejected() {
    let mut c = scenario(0.0, 0.5, 0);
    c.mechanism = MechanismKind::Dla;
    assert!(matches!(
        MarketState::new(c, Auctioneer::SecondPrice),
        Err(MarketError::Config(_))
    ));
}

#[test]
fn three_by_five_revenue_run_completes_feasibly() {
    let config = RevenueConfig {
        shape: MarketShape::new(3, 5).unwrap(),
        permitted_reputation: 0.5,
        low_reputation_share: 0.4,
        train: TrainConfig {
            hidden: vec![32, 32],
            batch_size: 32,
            epochs: 2,
            steps_per_epoch: 5,
            test_samples: 200,
            misreport_steps: 5,
            test_misreport_steps: 5,
            ..TrainConfig::default()
        },
        mechanisms: RevenueMechanism::ALL.to_vec(),
    };
    let report = run_revenue_experiment(&config, |_, _| {}).unwrap();
    assert_eq!(report.rows.len(), 2 * 4);
    for net in [&report.dla, &report.dla_lr] {
        let net = &net.as_ref().unwrap().net;
        for dist in [config.filtered_market(), config.unfiltered_market()] {
            for out in net.run_batch(&config.train.test_batch(&dist)).unwrap() {
                for j in 0..5 {
                    let col: f64 = (0..3).map(|i| out.alloc(i, j)).sum();
                    assert!(col <= 1.0 + 1e-9);
                }
            }
        }
    }
    let spa: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.mechanism == RevenueMechanism::Spa)
        .map(|r| r.revenue)
        .collect();
    assert_eq!(spa[0], spa[1]);
}
