//! Run configuration: one TOML file, validated and defaulted, with the
//! global flags layered on top.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ftsmoe_core::data::MissingTextPolicy;
use ftsmoe_core::eval::{PortfolioConfig, VOLATILITY_PERIODS};
use ftsmoe_core::loss::LossConfig;
use ftsmoe_core::model::ModelConfig;
use ftsmoe_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Sector assigned to symbols missing from `[sectors]`.
pub const DEFAULT_SECTOR: &str = "Unassigned";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of `<SYMBOL>.csv` price files.
    pub prices_dir: Option<PathBuf>,
    /// Directory of `<SYMBOL>.jsonl` embedding files; symbols without one
    /// are price-only.
    pub embeddings_dir: Option<PathBuf>,
    /// Symbols to load; empty means every CSV in `prices_dir`.
    pub symbols: Vec<String>,
    pub missing_text: MissingTextPolicy,
    /// Worker threads for per-symbol work.
    pub workers: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            prices_dir: None,
            embeddings_dir: None,
            symbols: Vec::new(),
            missing_text: MissingTextPolicy::Bypass,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// Trailing days held out of training and traded in the backtest.
    pub test_days: usize,
    /// Size of the gainer and loser attribution lists.
    pub top_n: usize,
    /// Volatility sampling periods.
    pub periods: Vec<usize>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { test_days: 60, top_n: 5, periods: VOLATILITY_PERIODS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds parameter init and batch sampling; overrides `train.seed`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    /// Symbol to sector name.
    pub sectors: BTreeMap<String, String>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub portfolio: PortfolioConfig,
    pub backtest: BacktestConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            sectors: BTreeMap::new(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            portfolio: PortfolioConfig::default(),
            backtest: BacktestConfig::default(),
        }
    }
}

/// Values from the global flags (or their `FTSMOE_*` environment variables).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::usage(format!("invalid config: {}", e.message())).with("detail", e))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        if let Some(p) = cfg.data.prices_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.embeddings_dir.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    /// Reads `path` if given, otherwise starts from defaults, then applies
    /// the overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config: {e}")).with_path(p))?;
                let base = p.parent().unwrap_or(Path::new("."));
                Self::from_toml(&text, base).map_err(|e| e.with_path(p))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out_dir = out.clone();
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate().map_err(|e| CliError::usage(format!("[model] {e}")))?;
        self.train.validate().map_err(|e| CliError::usage(format!("[train] {e}")))?;
        if !(self.loss.delta > 0.0) || !(self.loss.alpha >= 0.0) {
            return Err(CliError::usage("[loss] delta must be positive and alpha non-negative"));
        }
        if !(self.portfolio.annualization > 0.0) {
            return Err(CliError::usage("[portfolio] annualization must be positive"));
        }
        if self.backtest.periods.contains(&0) {
            return Err(CliError::usage("[backtest] periods must be at least 1"));
        }
        if self.data.workers == 0 {
            return Err(CliError::usage("[data] workers must be at least 1"));
        }
        Ok(())
    }

    /// Prices directory, which must exist.
    pub fn prices_dir(&self) -> CliResult<&Path> {
        let dir = self.data.prices_dir.as_deref().ok_or_else(|| CliError::usage("data.prices_dir is not set"))?;
        if !dir.is_dir() {
            return Err(CliError::data("prices directory does not exist").with_path(dir));
        }
        if let Some(emb) = &self.data.embeddings_dir {
            if !emb.is_dir() {
                return Err(CliError::data("embeddings directory does not exist").with_path(emb));
            }
        }
        Ok(dir)
    }

    pub fn sector_of(&self, symbol: &str) -> String {
        self.sectors.get(symbol).cloned().unwrap_or_else(|| DEFAULT_SECTOR.to_string())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join("model.ckpt")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
