//! Run configuration: a TOML file read as a flat map of dotted keys.
//!
//! Every key has a type and usually a default; `market.n_buyers` and
//! `market.n_items` are required. Keys the schema does not know are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tlmarket::auction::{MarketDistribution, MarketShape, TrainConfig};
use tlmarket::market::{MechanismKind, ReliabilityGrid, RevenueConfig, RevenueMechanism, ScenarioConfig};
use tlmarket::reputation::{AggregationWeights, ReputationParams};
use tlmarket::tltask::{ClassifierConfig, TaskSpec};
use toml::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key{} {}", if .0.len() > 1 { "s" } else { "" }, .0.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", "))]
    Unknown(Vec<String>),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Dotted keys that have not been consumed yet.
struct Keys {
    map: BTreeMap<String, Value>,
}

impl Keys {
    fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => Self::flatten(&key, t, out),
                other => {
                    out.insert(key, other);
                }
            }
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn float(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Float(x)) => Ok(x),
            Some(Value::Integer(i)) => Ok(i as f64),
            Some(_) => Err(invalid(key, "expected a number")),
        }
    }

    fn unit(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.float(key, default)?;
        if (0.0..=1.0).contains(&x) {
            Ok(x)
        } else {
            Err(invalid(key, format!("{x} is outside [0, 1]")))
        }
    }

    fn uint(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if i >= 0 => Ok(i as u64),
            Some(_) => Err(invalid(key, "expected a nonnegative integer")),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.uint(key, default as u64)? as usize)
    }

    fn required_usize(&mut self, key: &str) -> Result<usize, ConfigError> {
        if !self.map.contains_key(key) {
            return Err(ConfigError::Missing(key.to_string()));
        }
        self.usize(key, 0)
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(invalid(key, "expected true or false")),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.take(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(invalid(key, "expected a string")),
        }
    }

    fn opt_string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(invalid(key, "expected a string")),
        }
    }

    fn array(&mut self, key: &str) -> Result<Option<Vec<Value>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(_) => Err(invalid(key, "expected an array")),
        }
    }

    fn floats(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        let Some(items) = self.array(key)? else {
            return Ok(default.to_vec());
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::Float(x) => Ok(x),
                Value::Integer(i) => Ok(i as f64),
                _ => Err(invalid(key, "expected an array of numbers")),
            })
            .collect()
    }

    fn usizes(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>, ConfigError> {
        let Some(items) = self.array(key)? else {
            return Ok(default.to_vec());
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::Integer(i) if i >= 0 => Ok(i as usize),
                _ => Err(invalid(key, "expected an array of nonnegative integers")),
            })
            .collect()
    }

    fn strings(&mut self, key: &str, default: &[&str]) -> Result<Vec<String>, ConfigError> {
        let Some(items) = self.array(key)? else {
            return Ok(default.iter().map(|s| s.to_string()).collect());
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(invalid(key, "expected an array of strings")),
            })
            .collect()
    }
}

/// The fully resolved configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
    pub master_seed: u64,
    pub train: TrainConfig,
    /// Value distribution `train-auction` samples from.
    pub train_distribution: MarketDistribution,
    pub revenue: RevenueConfig,
    pub scenario: ScenarioConfig,
    pub grid: ReliabilityGrid,
    /// Checkpoint used by learned-auction scenarios, resolved against the
    /// config file's directory.
    pub auction_checkpoint: Option<PathBuf>,
    pub dump_chains: bool,
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let text = std::str::from_utf8(&bytes).map_err(|_| ConfigError::Syntax("config is not UTF-8".into()))?;
        let mut cfg = Self::parse(text, seed_override)?;
        cfg.path = path.to_path_buf();
        cfg.bytes = bytes;
        if let Some(ckpt) = &cfg.auction_checkpoint {
            if ckpt.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.auction_checkpoint = Some(base.join(ckpt));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut map = BTreeMap::new();
        Keys::flatten("", table, &mut map);
        let mut k = Keys { map };

        let master_seed = match seed_override {
            Some(s) => {
                k.take("run.seed");
                s
            }
            None => k.uint("run.seed", 0)?,
        };
        let n_buyers = k.required_usize("market.n_buyers")?;
        let n_items = k.required_usize("market.n_items")?;
        let shape = MarketShape::new(n_buyers, n_items).map_err(|e| invalid("market", e.to_string()))?;

        let d = TrainConfig::default();
        let train = TrainConfig {
            hidden: k.usizes("train.hidden", &d.hidden)?,
            batch_size: k.usize("train.batch_size", d.batch_size)?,
            epochs: k.usize("train.epochs", d.epochs)?,
            steps_per_epoch: k.usize("train.steps_per_epoch", d.steps_per_epoch)?,
            learning_rate: k.float("train.learning_rate", d.learning_rate)?,
            misreport_steps: k.usize("train.misreport_steps", d.misreport_steps)?,
            misreport_lr: k.float("train.misreport_lr", d.misreport_lr)?,
            initial_multiplier: k.float("train.initial_multiplier", d.initial_multiplier)?,
            rho: k.float("train.rho", d.rho)?,
            rho_increment: k.float("train.rho_increment", d.rho_increment)?,
            multiplier_update_period: k.usize("train.multiplier_update_period", d.multiplier_update_period)?,
            test_samples: k.usize("train.test_samples", d.test_samples)?,
            test_misreport_steps: k.usize("train.test_misreport_steps", d.test_misreport_steps)?,
            seed: master_seed,
        };
        train.validate().map_err(|e| invalid("train", e.to_string()))?;
        let distribution = k.string("train.distribution", "uniform")?;

        let mechanisms = k
            .strings("revenue.mechanisms", &["DLA", "DLA-LR", "SPA", "SPA-unfiltered"])?
            .iter()
            .map(|s| {
                RevenueMechanism::parse(s).ok_or_else(|| invalid("revenue.mechanisms", format!("unknown mechanism {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let revenue = RevenueConfig {
            shape,
            permitted_reputation: k.unit("revenue.permitted_reputation", 0.5)?,
            low_reputation_share: k.unit("revenue.low_reputation_share", 0.5)?,
            train: train.clone(),
            mechanisms,
        };
        revenue.validate().map_err(|e| invalid("revenue", e.to_string()))?;
        let train_distribution = match distribution.as_str() {
            "uniform" => MarketDistribution::uniform(shape),
            "filtered" => revenue.filtered_market(),
            "unfiltered" => revenue.unfiltered_market(),
            other => {
                return Err(invalid(
                    "train.distribution",
                    format!("{other:?} is not one of uniform, filtered, unfiltered"),
                ))
            }
        };

        let mut scenario = ScenarioConfig::new(shape);
        scenario.master_seed = master_seed;
        scenario.rounds = k.uint("scenario.rounds", scenario.rounds)?;
        scenario.warmup_rounds = k.uint("scenario.warmup_rounds", scenario.warmup_rounds)?;
        let mech = k.string("scenario.mechanism", scenario.mechanism.name())?;
        scenario.mechanism = MechanismKind::parse(&mech)
            .ok_or_else(|| invalid("scenario.mechanism", format!("unknown mechanism {mech:?}")))?;
        scenario.permitted_reputation = k.unit("scenario.permitted_reputation", scenario.permitted_reputation)?;
        scenario.attack_strengths = k.floats("scenario.attack_strengths", &scenario.attack_strengths)?;
        scenario.rating_threshold = k.unit("scenario.rating_threshold", scenario.rating_threshold)?;
        scenario.task_tag = k.string("scenario.task_tag", &scenario.task_tag)?;
        let auction_checkpoint = k.opt_string("scenario.auction_checkpoint")?.map(PathBuf::from);

        let rd = ReputationParams::default();
        let weights = AggregationWeights::new(
            k.unit("reputation.w_direct", rd.weights.direct)?,
            k.unit("reputation.w_recommended", rd.weights.recommended)?,
            k.unit("reputation.w_referenced", rd.weights.referenced)?,
        )
        .map_err(|e| invalid("reputation", e.to_string()))?;
        scenario.reputation = ReputationParams::new(
            weights,
            k.uint("reputation.window", rd.window)?,
            k.unit("reputation.prior", rd.prior)?,
        )
        .map_err(|e| invalid("reputation", e.to_string()))?;

        let td = TaskSpec::default();
        scenario.task = TaskSpec {
            feature_dim: k.usize("task.feature_dim", td.feature_dim)?,
            class_separation: k.float("task.class_separation", td.class_separation)?,
            noise: k.float("task.noise", td.noise)?,
            domain_shift: k.float("task.domain_shift", td.domain_shift)?,
            source_samples: k.usize("task.source_samples", td.source_samples)?,
            target_train_samples: k.usize("task.target_train_samples", td.target_train_samples)?,
            target_test_samples: k.usize("task.target_test_samples", td.target_test_samples)?,
        };
        let cd = ClassifierConfig::default();
        scenario.classifier = ClassifierConfig {
            hidden: k.usize("classifier.hidden", cd.hidden)?,
            learning_rate: k.float("classifier.learning_rate", cd.learning_rate)?,
            batch_size: k.usize("classifier.batch_size", cd.batch_size)?,
            pretrain_epochs: k.usize("classifier.pretrain_epochs", cd.pretrain_epochs)?,
            fine_tune_epochs: k.usize("classifier.fine_tune_epochs", cd.fine_tune_epochs)?,
        };
        scenario.delegates = k.usize("ledger.delegates", scenario.delegates)?;
        scenario.key_seed = k.uint("ledger.key_seed", scenario.key_seed)?;
        scenario.validate().map_err(|e| invalid("scenario", e.to_string()))?;

        let seed_count = k.uint("reliability.seeds", 20)?;
        let grid = ReliabilityGrid {
            attack_strengths: k.floats("reliability.attack_strengths", &[0.0, 0.25, 0.5])?,
            permitted_reputations: k.floats("reliability.permitted_reputations", &[0.0, 0.4, 0.8])?,
            seeds: (0..seed_count).map(|s| master_seed.wrapping_add(s)).collect(),
            malicious_sellers: k.usize("reliability.malicious_sellers", 1)?,
        };
        for (key, values) in [
            ("reliability.attack_strengths", &grid.attack_strengths),
            ("reliability.permitted_reputations", &grid.permitted_reputations),
        ] {
            if values.is_empty() || values.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(invalid(key, "needs at least one value, all in [0, 1]"));
            }
        }
        if grid.seeds.is_empty() {
            return Err(invalid("reliability.seeds", "must be at least 1"));
        }
        if grid.malicious_sellers > n_items {
            return Err(invalid("reliability.malicious_sellers", format!("exceeds the {n_items} sellers")));
        }

        let dump_chains = k.bool("output.dump_chains", false)?;

        if !k.map.is_empty() {
            return Err(ConfigError::Unknown(k.map.into_keys().collect()));
        }
        Ok(Self {
            path: PathBuf::new(),
            bytes: text.as_bytes().to_vec(),
            master_seed,
            train,
            train_distribution,
            revenue,
            scenario,
            grid,
            auction_checkpoint,
            dump_chains,
        })
    }
}
