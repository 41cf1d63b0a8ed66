//! Hyperparameter search on period 1, validation on period 2.
//!
//! Every candidate of a [`SearchSpace`] is run as a full period-1 episode
//! under the same seed. The winner is the best value of the target metric
//! (RMSE minimized, everything else maximized), ties going to the lower
//! period-1 cost and then to the lexicographically smaller hyperparameters.
//! Period-2 metrics are recorded for every candidate for the evaluation log
//! but never influence the choice.

mod defaults;
mod space;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgorithmKind, AlgorithmSpec, TargetMetric};
use crate::data::ImpressionOpportunity;
use crate::env::{run_episode, EpisodeOptions, SellerConfig};
use crate::error::{ArenaError, Result};
use crate::metrics::{format_cell, MetricsReport, Report, METRIC_NAMES};

pub use defaults::default_for;
pub use space::{ParamValues, Point, Scale, SearchKind, SearchSpace};

/// Everything a candidate evaluation needs besides the candidate itself.
#[derive(Clone, Copy, Debug)]
pub struct TuningData<'a> {
    /// Seller roster; each seller's algorithm is replaced by the candidate.
    pub sellers: &'a [SellerConfig],
    pub period1: &'a [ImpressionOpportunity],
    pub period2: &'a [ImpressionOpportunity],
    pub total_timesteps: u32,
    pub seed: u64,
    pub dataset_digest: &'a str,
}

impl TuningData<'_> {
    fn run(&self, spec: &AlgorithmSpec, period: u8) -> Result<Report> {
        let configs: Vec<SellerConfig> = self.sellers.iter().map(|s| SellerConfig { algorithm: spec.clone(), ..s.clone() }).collect();
        let rows = if period == 1 { self.period1 } else { self.period2 };
        let trace = run_episode(&configs, rows, &EpisodeOptions::new(self.seed, period, self.total_timesteps))?;
        Report::from_trace(&trace)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub hyperparameters: Point,
    pub period1_target: f64,
    pub period1_cost: f64,
    pub period1: MetricsReport,
    pub period2: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub algorithm: AlgorithmKind,
    pub target: TargetMetric,
    pub seed: u64,
    pub dataset_digest: String,
    /// The selected algorithm, ready to run.
    pub best: AlgorithmSpec,
    pub best_index: usize,
    pub period1_target: f64,
    pub period2: MetricsReport,
    pub evaluations: Vec<Evaluation>,
}

fn is_better(target: TargetMetric, a: &Evaluation, b: &Evaluation) -> bool {
    let by_target =
        if target.minimize() { b.period1_target.total_cmp(&a.period1_target) } else { a.period1_target.total_cmp(&b.period1_target) };
    let order = by_target
        .then_with(|| b.period1_cost.total_cmp(&a.period1_cost))
        .then_with(|| compare_points(&b.hyperparameters, &a.hyperparameters));
    order == Ordering::Greater
}

fn compare_points(a: &Point, b: &Point) -> Ordering {
    for ((ka, va), (kb, vb)) in a.iter().zip(b) {
        let o = ka.cmp(kb).then_with(|| va.total_cmp(vb));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Index of the best evaluation under the selection rule.
pub fn select_best(target: TargetMetric, evaluations: &[Evaluation]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in evaluations.iter().enumerate() {
        if best.is_none_or(|b| is_better(target, e, &evaluations[b])) {
            best = Some(i);
        }
    }
    best
}

/// Tunes `base` for `target`. Hyperparameters fixed in `base` and absent
/// from the space are kept; the space overrides the rest.
pub fn tune(base: &AlgorithmSpec, space: &SearchSpace, data: &TuningData<'_>, target: TargetMetric) -> Result<TuningResult> {
    let candidates = space.candidates(data.seed)?;
    if candidates.is_empty() {
        return Err(ArenaError::config("search space is empty"));
    }
    let specs: Vec<AlgorithmSpec> = candidates
        .iter()
        .map(|point| {
            let mut spec = base.clone();
            spec.target_metric = target;
            spec.hyperparameters.extend(point.iter().map(|(k, &v)| (k.clone(), v)));
            spec.validate().map(|_| spec)
        })
        .collect::<Result<_>>()?;

    let evaluations: Vec<Evaluation> = specs
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let p1 = data.run(spec, 1)?;
            let p2 = data.run(spec, 2)?;
            Ok(Evaluation {
                index,
                hyperparameters: spec.hyperparameters.clone(),
                period1_target: p1.overall.target_value(target),
                period1_cost: p1.totals.cost,
                period1: p1.overall,
                period2: p2.overall,
            })
        })
        .collect::<Result<_>>()?;

    let best_index = select_best(target, &evaluations).expect("non-empty");
    let best = &evaluations[best_index];
    Ok(TuningResult {
        algorithm: base.kind,
        target,
        seed: data.seed,
        dataset_digest: data.dataset_digest.to_string(),
        best: specs[best_index].clone(),
        best_index,
        period1_target: best.period1_target,
        period2: best.period2,
        evaluations,
    })
}

impl TuningResult {
    pub fn best_hyperparameters(&self) -> &BTreeMap<String, f64> {
        &self.best.hyperparameters
    }

    /// One row per candidate: index, hyperparameters, period-1 target and
    /// cost, then the seven period-2 metrics.
    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<()> {
        let names: Vec<String> = self.evaluations.first().map(|e| e.hyperparameters.keys().cloned().collect()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string()];
        header.extend(names.iter().cloned());
        header.push(format!("period1_{}", self.target));
        header.push("period1_cost".into());
        header.extend(METRIC_NAMES.iter().map(|m| format!("period2_{m}")));
        w.write_record(&header)?;
        for e in &self.evaluations {
            let mut row = vec![e.index.to_string()];
            row.extend(names.iter().map(|n| e.hyperparameters.get(n).map_or_else(String::new, f64::to_string)));
            row.push(e.period1_target.to_string());
            row.push(e.period1_cost.to_string());
            row.extend(e.period2.values().into_iter().map(format_cell));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| ArenaError::Trace(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMetricRow {
    pub algorithm: AlgorithmKind,
    pub hyperparameters: Point,
    pub metrics: MetricsReport,
}

/// Period-2 metrics of tuned algorithms, one table per target metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMetricTable {
    pub seed: u64,
    pub dataset_digest: String,
    pub tables: BTreeMap<TargetMetric, Vec<CrossMetricRow>>,
}

pub fn cross_metric_table(results: &[TuningResult]) -> Result<CrossMetricTable> {
    let first = results.first().ok_or_else(|| ArenaError::config("no tuning results to tabulate"))?;
    let mut tables: BTreeMap<TargetMetric, Vec<CrossMetricRow>> = BTreeMap::new();
    for r in results {
        if r.seed != first.seed || r.dataset_digest != first.dataset_digest {
            return Err(ArenaError::config(format!(
                "cannot merge results from different runs: {} (seed {}, data {}) vs seed {}, data {}",
                r.algorithm, r.seed, r.dataset_digest, first.seed, first.dataset_digest
            )));
        }
        tables.entry(r.target).or_default().push(CrossMetricRow {
            algorithm: r.algorithm,
            hyperparameters: r.best.hyperparameters.clone(),
            metrics: r.period2,
        });
    }
    Ok(CrossMetricTable { seed: first.seed, dataset_digest: first.dataset_digest.clone(), tables })
}

impl CrossMetricTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["target".to_string(), "algorithm".to_string()];
        header.extend(METRIC_NAMES.iter().map(|m| m.to_string()));
        w.write_record(&header)?;
        for (target, rows) in &self.tables {
            for row in rows {
                let mut rec = vec![target.to_string(), row.algorithm.to_string()];
                rec.extend(row.metrics.values().into_iter().map(format_cell));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| ArenaError::Trace(e.to_string()))?;
        Ok(())
    }
}
