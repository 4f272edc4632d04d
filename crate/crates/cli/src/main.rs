mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{ConfigError, RunConfig};
use output::{fmt_float, fmt_opt, write_atomic, Csv, Manifest};
use tlmarket::auction::{read_checkpoint, train_dla, write_checkpoint, EpochMetrics, TrainedAuction};
use tlmarket::ledger::{dump_chain, verify_dump, ChainParams, Ledger};
use tlmarket::market::{
    reputation_table, run_reliability_cell, run_revenue_experiment, Auctioneer, CellResult, MechanismKind,
    ReputationRow,
};
use tlmarket::reputation::ReputationBook;

/// Simulator for a reputation-filtered, auction-priced market of
/// pre-trained models.
#[derive(Parser)]
#[command(name = "tlmarket", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for independent grid cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learned auction and write its checkpoint and training curve.
    TrainAuction(RunArgs),
    /// Revenue per epoch of the learned auctions against second price.
    Revenue(RunArgs),
    /// Buyer accuracy over the attack strength x permitted reputation grid.
    Reliability(RunArgs),
    /// Check a chain dump's links, roots, signatures and quorums.
    VerifyChain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chain: PathBuf,
    },
    /// Rebuild the reputation table from a chain dump.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Io(String),
    Runtime(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Runtime(_) => 4,
            Failure::Verify(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Runtime(m) | Failure::Verify(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(io_err(path))
}

fn start(command: &str, args: &RunArgs) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(&args.common.config, args.common.seed)?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    Manifest::new(command, &cfg, &args.out)
        .write(&args.out)
        .map_err(io_err(&args.out))?;
    Ok(cfg)
}

fn train_csv(trained: &TrainedAuction) -> Vec<u8> {
    let mut csv = Csv::new(&["epoch", "revenue", "mean_regret", "max_regret", "loss"]);
    for m in &trained.metrics {
        csv.row([
            m.epoch.to_string(),
            fmt_float(m.revenue),
            fmt_float(m.mean_regret),
            fmt_float(m.max_regret),
            fmt_float(m.loss),
        ]);
    }
    csv.into_bytes()
}

fn log_epoch(label: &str, m: &EpochMetrics) {
    eprintln!(
        "[{label}] epoch {:>3}  revenue {:.4}  regret {:.5} (max {:.5})  loss {:.4}",
        m.epoch, m.revenue, m.mean_regret, m.max_regret, m.loss
    );
}

fn cmd_train_auction(args: &RunArgs) -> Result<(), Failure> {
    let cfg = start("train-auction", args)?;
    let trained = train_dla(&cfg.train_distribution, &cfg.train, |m| log_epoch("train", m)).map_err(runtime)?;
    write(&args.out.join("train.csv"), &train_csv(&trained))?;
    write(&args.out.join("auction.ckpt"), write_checkpoint(&trained.net).as_bytes())?;
    Ok(())
}

fn cmd_revenue(args: &RunArgs) -> Result<(), Failure> {
    let cfg = start("revenue", args)?;
    let report = run_revenue_experiment(&cfg.revenue, |m, e| log_epoch(m.name(), e)).map_err(runtime)?;
    let mut csv = Csv::new(&["epoch", "mechanism", "revenue", "mean_regret"]);
    for r in &report.rows {
        csv.row([
            r.epoch.to_string(),
            r.mechanism.name().to_string(),
            fmt_float(r.revenue),
            fmt_float(r.mean_regret),
        ]);
    }
    write(&args.out.join("revenue.csv"), &csv.into_bytes())?;
    for (name, trained) in [("dla", &report.dla), ("dla-lr", &report.dla_lr)] {
        if let Some(t) = trained {
            write(&args.out.join(format!("{name}.ckpt")), write_checkpoint(&t.net).as_bytes())?;
        }
    }
    Ok(())
}

fn reputation_csv(rows: &[ReputationRow]) -> Vec<u8> {
    let mut csv = Csv::new(&["buyer", "seller", "direct", "recommended", "referenced", "integrated"]);
    for r in rows {
        csv.row([
            r.buyer.clone(),
            r.seller.clone(),
            fmt_opt(r.direct),
            fmt_opt(r.recommended),
            fmt_opt(r.referenced),
            fmt_float(r.integrated),
        ]);
    }
    csv.into_bytes()
}

fn auctioneer(cfg: &RunConfig) -> Result<Auctioneer, Failure> {
    match cfg.scenario.mechanism {
        MechanismKind::Spa => Ok(Auctioneer::SecondPrice),
        MechanismKind::Dla | MechanismKind::DlaLr => {
            let path = cfg.auction_checkpoint.as_ref().ok_or_else(|| {
                Failure::Config("key `scenario.auction_checkpoint` is required for learned mechanisms".into())
            })?;
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let net = read_checkpoint(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Ok(Auctioneer::Learned(net))
        }
    }
}

/// File stem identifying one reliability cell.
fn cell_name(a: f64, p: f64, seed: u64) -> String {
    format!("a{}_p{}_s{seed}", fmt_float(a), fmt_float(p))
}

struct CellArtifacts {
    result: CellResult,
    /// File stem, chain dump and reputation table.
    dump: Option<(String, String, Vec<u8>)>,
}

fn cmd_reliability(args: &RunArgs) -> Result<(), Failure> {
    let cfg = start("reliability", args)?;
    let auctioneer = auctioneer(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(runtime)?;
    let cells = cfg.grid.cells();
    let results: Vec<Result<CellArtifacts, Failure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let (result, market) =
                    run_reliability_cell(&cfg.scenario, &cfg.grid, &auctioneer, cell).map_err(runtime)?;
                let dump = cfg.dump_chains.then(|| {
                    let c = market.config();
                    let table = reputation_table(market.book(), market.buyers(), market.sellers(), &c.reputation, c.rounds);
                    (
                        cell_name(cell.0, cell.1, cell.2),
                        dump_chain(market.ledger().chain()),
                        reputation_csv(&table),
                    )
                });
                Ok(CellArtifacts { result, dump })
            })
            .collect()
    });
    let mut csv = Csv::new(&["attack_strength", "permitted_reputation", "seed", "mean_accuracy", "trades_executed"]);
    for cell in results {
        let cell = cell?;
        let r = &cell.result;
        csv.row([
            fmt_float(r.attack_strength),
            fmt_float(r.permitted_reputation),
            r.seed.to_string(),
            fmt_opt(r.mean_accuracy),
            r.trades_executed.to_string(),
        ]);
        if let Some((name, chain, table)) = cell.dump {
            let dir = args.out.join("chains");
            write(&dir.join(format!("{name}.ndjson")), chain.as_bytes())?;
            write(&dir.join(format!("{name}.reputation.csv")), &table)?;
        }
    }
    write(&args.out.join("reliability.csv"), &csv.into_bytes())?;
    Ok(())
}

fn chain_params(cfg: &RunConfig) -> ChainParams {
    ChainParams::new(cfg.scenario.delegates, cfg.scenario.key_seed)
}

fn read_chain(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    String::from_utf8(bytes).map_err(|_| Failure::Verify(format!("{}: not valid UTF-8", path.display())))
}

fn cmd_verify_chain(common: &Common, chain: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(&common.config, common.seed)?;
    let text = read_chain(chain)?;
    match verify_dump(&text, &chain_params(&cfg)) {
        Ok(blocks) => {
            println!("valid: {} blocks", blocks.len());
            Ok(())
        }
        Err(fault) => Err(Failure::Verify(format!(
            "invalid at height {}: {}",
            fault.height, fault.reason
        ))),
    }
}

fn cmd_replay(common: &Common, chain: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(&common.config, common.seed)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    Manifest::new("replay", &cfg, out).write(out).map_err(io_err(out))?;
    let text = read_chain(chain)?;
    let params = chain_params(&cfg);
    let blocks = verify_dump(&text, &params)
        .map_err(|f| Failure::Verify(format!("invalid at height {}: {}", f.height, f.reason)))?;
    let ledger = Ledger::replay(params, blocks).map_err(runtime)?;
    let book = ReputationBook::from_events(&ledger.contracts().all_events());
    let s = &cfg.scenario;
    let table = reputation_table(&book, &s.buyer_ids(), &s.seller_ids(), &s.reputation, s.rounds);
    write(&out.join("reputation.csv"), &reputation_csv(&table))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainAuction(a) => cmd_train_auction(a),
        Command::Revenue(a) => cmd_revenue(a),
        Command::Reliability(a) => cmd_reliability(a),
        Command::VerifyChain { common, chain } => cmd_verify_chain(common, chain),
        Command::Replay { common, chain, out } => cmd_replay(common, chain, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tlmarket: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
