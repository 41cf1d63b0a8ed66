//! Run configuration and the two-period driver.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgorithmSpec, TargetMetric};
use crate::data::{load_dataset, Dataset, SyntheticConfig};
use crate::env::{run_episode, EpisodeOptions, EpisodeTrace, SellerConfig};
use crate::error::{ArenaError, Result};
use crate::metrics::Report;
use crate::tuning::{tune, SearchSpace, TuningData, TuningResult};

/// Where the auctions come from. Exactly one source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// A CSV file; relative paths resolve against the config file.
    Dataset(PathBuf),
    Synthetic(SyntheticConfig),
}

fn default_budget() -> f64 {
    crate::DEFAULT_BUDGET
}
fn default_cpc() -> f64 {
    crate::DEFAULT_CPC
}
fn default_cpa() -> f64 {
    crate::DEFAULT_CPA
}
fn default_timesteps() -> u32 {
    crate::DEFAULT_TIMESTEPS
}
fn default_true() -> bool {
    true
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roster {
    /// Sellers `1..=count`. When absent, every seller present in the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(default = "default_budget")]
    pub initial_budget: f64,
    /// Per-seller budget overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub budgets: BTreeMap<u32, f64>,
    #[serde(default = "default_cpc")]
    pub cpc_bound: f64,
    #[serde(default = "default_cpa")]
    pub cpa_bound: f64,
}

impl Default for Roster {
    fn default() -> Self {
        Self { count: None, initial_budget: default_budget(), budgets: BTreeMap::new(), cpc_bound: default_cpc(), cpa_bound: default_cpa() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    pub data: DataSource,
    #[serde(default)]
    pub sellers: Roster,
    /// Fleet-wide algorithm.
    pub algorithm: AlgorithmSpec,
    /// Per-seller algorithms replacing the fleet-wide one.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<u32, AlgorithmSpec>,
    pub seed: u64,
    #[serde(default = "default_timesteps")]
    pub total_timesteps: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Run sellers on the thread pool. Results do not depend on it.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl ArenaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file, resolving a relative dataset path against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ArenaError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let DataSource::Dataset(p) = &mut config.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// Checks the data source and roster. Algorithm hyperparameters are
    /// checked when an episode starts, so a config used only for tuning may
    /// leave the searched ones out.
    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        let r = &self.sellers;
        let budgets_ok = std::iter::once(&r.initial_budget).chain(r.budgets.values()).all(|b| b.is_finite() && *b >= 0.0);
        if !budgets_ok {
            return Err(ArenaError::config("seller budgets must be finite and >= 0"));
        }
        if !(r.cpc_bound.is_finite() && r.cpc_bound >= 0.0 && r.cpa_bound.is_finite() && r.cpa_bound >= 0.0) {
            return Err(ArenaError::config("cost bounds must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A loaded configuration: data, roster and per-seller settings.
#[derive(Clone, Debug)]
pub struct Arena {
    config: ArenaConfig,
    dataset: Dataset,
    digest: String,
    sellers: Vec<SellerConfig>,
}

/// Both periods of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub traces: [EpisodeTrace; 2],
    pub reports: [Report; 2],
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    seed: u64,
    dataset_digest: &'a str,
    period1: &'a Report,
    period2: &'a Report,
}

impl Arena {
    pub fn new(config: ArenaConfig) -> Result<Self> {
        config.validate()?;
        let dataset = match &config.data {
            DataSource::Dataset(path) => load_dataset(path, config.seed)?,
            DataSource::Synthetic(s) => {
                let mut d = s.generate_logged()?;
                d.decompose(config.seed)?;
                d
            }
        };
        Self::with_dataset(config, dataset)
    }

    /// Uses an already decomposed dataset.
    pub fn with_dataset(config: ArenaConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let ids: Vec<u32> = match config.sellers.count {
            Some(n) => (1..=n).collect(),
            None => {
                let mut ids: Vec<u32> = dataset.rows().iter().map(|r| r.seller_id).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
        };
        if let Some(id) = config.overrides.keys().chain(config.sellers.budgets.keys()).find(|id| !ids.contains(id)) {
            return Err(ArenaError::config(format!("settings given for seller {id}, which is not in the roster")));
        }
        let mut bounds: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for r in dataset.period(1) {
            let e = bounds.entry(r.seller_id).or_insert((r.winning_price, r.winning_price));
            e.0 = e.0.min(r.winning_price);
            e.1 = e.1.max(r.winning_price);
        }
        let sellers = ids
            .iter()
            .map(|&id| SellerConfig {
                seller_id: id,
                initial_budget: config.sellers.budgets.get(&id).copied().unwrap_or(config.sellers.initial_budget),
                cpc_bound: config.sellers.cpc_bound,
                cpa_bound: config.sellers.cpa_bound,
                algorithm: config.overrides.get(&id).unwrap_or(&config.algorithm).clone(),
                history_bounds: bounds.get(&id).copied(),
            })
            .collect::<Vec<_>>();
        let digest = dataset.digest();
        Ok(Self { config, dataset, digest, sellers })
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn dataset_digest(&self) -> &str {
        &self.digest
    }

    pub fn sellers(&self) -> &[SellerConfig] {
        &self.sellers
    }

    pub fn run_period(&self, period: u8) -> Result<EpisodeTrace> {
        let opts =
            EpisodeOptions { parallel: self.config.parallel, ..EpisodeOptions::new(self.config.seed, period, self.config.total_timesteps) };
        run_episode(&self.sellers, self.dataset.period(period), &opts)
    }

    pub fn run(&self) -> Result<RunOutput> {
        let t1 = self.run_period(1)?;
        let t2 = self.run_period(2)?;
        let reports = [Report::from_trace(&t1)?, Report::from_trace(&t2)?];
        Ok(RunOutput { traces: [t1, t2], reports })
    }

    /// Writes `trace_period{1,2}.{csv,json}` and `metrics.json` into `dir`.
    pub fn write_run(&self, output: &RunOutput, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| ArenaError::io(dir, e))?;
        for (i, trace) in output.traces.iter().enumerate() {
            trace.write_files(dir, &format!("trace_period{}", i + 1))?;
        }
        let metrics =
            MetricsFile { seed: self.config.seed, dataset_digest: &self.digest, period1: &output.reports[0], period2: &output.reports[1] };
        let mut text = serde_json::to_string_pretty(&metrics)?;
        text.push('\n');
        let path = dir.join("metrics.json");
        fs::write(&path, text).map_err(|e| ArenaError::io(&path, e))
    }

    pub fn tuning_data(&self) -> TuningData<'_> {
        TuningData {
            sellers: &self.sellers,
            period1: self.dataset.period(1),
            period2: self.dataset.period(2),
            total_timesteps: self.config.total_timesteps,
            seed: self.config.seed,
            dataset_digest: &self.digest,
        }
    }

    /// Tunes the fleet-wide algorithm; per-seller overrides are ignored.
    pub fn tune(&self, target: TargetMetric, space: &SearchSpace) -> Result<TuningResult> {
        tune(&self.config.algorithm, space, &self.tuning_data(), target)
    }
}
