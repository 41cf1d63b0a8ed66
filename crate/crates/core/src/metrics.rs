//! The seven benchmark metrics.
//!
//! Counts and costs are pooled over all sellers before any ratio is taken.
//! Cost ratios with a zero denominator are `None` (`null` in JSON). The
//! pacing RMSE is the sum over sellers of each seller's RMSE against the
//! linear balance trajectory `B*(t) = B (T − t) / T`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::algorithms::TargetMetric;
use crate::env::{EpisodeTrace, SellerTrace};
use crate::error::{ArenaError, Result};

pub const METRIC_NAMES: [&str; 7] = ["awr", "ecpm", "clicks", "ecpc", "cnv", "ecpa", "rmse"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub auctions: u64,
    pub wins: u64,
    pub cost: f64,
    pub clicks: u64,
    pub conversions: u64,
}

impl Totals {
    pub fn of_seller(seller: &SellerTrace) -> Self {
        let mut t = Totals::default();
        for r in &seller.steps {
            t.auctions += u64::from(r.auctions);
            t.wins += u64::from(r.wins);
            t.cost += r.cost;
            t.clicks += u64::from(r.clicks);
            t.conversions += u64::from(r.conversions);
        }
        t
    }

    pub fn add(&mut self, other: &Totals) {
        self.auctions += other.auctions;
        self.wins += other.wins;
        self.cost += other.cost;
        self.clicks += other.clicks;
        self.conversions += other.conversions;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub awr: f64,
    pub ecpm: Option<f64>,
    pub clicks: u64,
    pub ecpc: Option<f64>,
    pub cnv: u64,
    pub ecpa: Option<f64>,
    pub rmse: f64,
}

fn ratio(num: f64, den: u64) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

impl MetricsReport {
    pub fn from_totals(t: &Totals, rmse: f64) -> Self {
        Self {
            awr: if t.auctions == 0 { 0.0 } else { t.wins as f64 / t.auctions as f64 },
            ecpm: ratio(t.cost, t.wins).map(|x| x * 1000.0),
            clicks: t.clicks,
            ecpc: ratio(t.cost, t.clicks),
            cnv: t.conversions,
            ecpa: ratio(t.cost, t.conversions),
            rmse,
        }
    }

    /// Value of a tunable metric.
    pub fn target_value(&self, metric: TargetMetric) -> f64 {
        match metric {
            TargetMetric::Awr => self.awr,
            TargetMetric::Clicks => self.clicks as f64,
            TargetMetric::Cnv => self.cnv as f64,
            TargetMetric::Rmse => self.rmse,
        }
    }

    /// The seven values in [`METRIC_NAMES`] order; `None` for null ratios.
    pub fn values(&self) -> [Option<f64>; 7] {
        [Some(self.awr), self.ecpm, Some(self.clicks as f64), self.ecpc, Some(self.cnv as f64), self.ecpa, Some(self.rmse)]
    }

    /// One `metric,value` row per metric; null ratios are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "value"])?;
        for (name, v) in METRIC_NAMES.iter().zip(self.values()) {
            w.write_record([name.to_string(), format_cell(v)])?;
        }
        w.flush().map_err(|e| ArenaError::Trace(e.to_string()))?;
        Ok(())
    }
}

/// Target balance at the end of timestep `t` under linear spending.
pub fn target_balance(initial_budget: f64, timestep: u32, total_timesteps: u32) -> f64 {
    if total_timesteps == 0 {
        return 0.0;
    }
    let remaining = f64::from(total_timesteps.saturating_sub(timestep));
    initial_budget * remaining / f64::from(total_timesteps)
}

pub(crate) fn format_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One seller's pacing RMSE. `balances[t-1]` is the balance at the end of
/// timestep `t`; exactly `total_timesteps` entries are required.
pub fn seller_rmse(initial_budget: f64, balances: &[f64], total_timesteps: u32) -> Result<f64> {
    if balances.len() != total_timesteps as usize {
        return Err(ArenaError::Trace(format!("expected {total_timesteps} balance entries, found {}", balances.len())));
    }
    if total_timesteps == 0 {
        return Ok(0.0);
    }
    let sum_sq: f64 = balances
        .iter()
        .zip(1..=total_timesteps)
        .map(|(&b, t)| {
            let d = target_balance(initial_budget, t, total_timesteps) - b;
            d * d
        })
        .sum();
    Ok((sum_sq / f64::from(total_timesteps)).sqrt())
}

fn rmse_of(seller: &SellerTrace, total_timesteps: u32) -> Result<f64> {
    let balances: Vec<f64> = seller.steps.iter().map(|r| r.balance).collect();
    seller_rmse(seller.initial_budget, &balances, total_timesteps)
        .map_err(|e| ArenaError::Trace(format!("seller {}: {e}", seller.seller_id)))
}

pub fn rmse_pacing(trace: &EpisodeTrace) -> Result<f64> {
    trace.sellers.iter().map(|s| rmse_of(s, trace.header.total_timesteps)).sum()
}

pub fn compute_metrics(trace: &EpisodeTrace) -> Result<MetricsReport> {
    Ok(Report::from_trace(trace)?.overall)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerMetrics {
    pub seller_id: u32,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// Pooled metrics, pooled totals and the per-seller breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overall: MetricsReport,
    pub totals: Totals,
    pub sellers: Vec<SellerMetrics>,
}

impl Report {
    pub fn from_trace(trace: &EpisodeTrace) -> Result<Self> {
        let t = trace.header.total_timesteps;
        let mut totals = Totals::default();
        let mut rmse = 0.0;
        let mut sellers = Vec::with_capacity(trace.sellers.len());
        for s in &trace.sellers {
            let st = Totals::of_seller(s);
            let r = rmse_of(s, t)?;
            totals.add(&st);
            rmse += r;
            sellers.push(SellerMetrics { seller_id: s.seller_id, metrics: MetricsReport::from_totals(&st, r) });
        }
        Ok(Self { overall: MetricsReport::from_totals(&totals, rmse), totals, sellers })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EpisodeHeader, TimestepRecord};

    fn header(t: u32, n: u32) -> EpisodeHeader {
        EpisodeHeader { period: 1, seed: 0, total_timesteps: t, n_sellers: n, config_digest: String::new() }
    }

    fn seller(id: u32, budget: f64, steps: Vec<TimestepRecord>) -> SellerTrace {
        let total_cost = steps.iter().map(|r| r.cost).sum();
        SellerTrace { seller_id: id, initial_budget: budget, total_cost, steps, nan_bids: 0, protocol_incidents: 0 }
    }

    fn rec(t: u32, auctions: u32, wins: u32, cost: f64, clicks: u32, conversions: u32, balance: f64) -> TimestepRecord {
        TimestepRecord { timestep: t, auctions, wins, cost, clicks, conversions, balance, outcomes: Vec::new() }
    }

    #[test]
    fn hand_counted_example() {
        let trace = EpisodeTrace {
            header: header(1, 2),
            sellers: vec![seller(1, 10.0, vec![rec(1, 3, 2, 0.3 + 0.2, 1, 0, 9.5)]), seller(2, 10.0, vec![rec(1, 1, 1, 0.5, 1, 1, 9.5)])],
        };
        let m = compute_metrics(&trace).unwrap();
        assert_eq!(m.awr, 0.75);
        assert!((m.ecpm.unwrap() - 1000.0 / 3.0).abs() < 1e-9);
        assert_eq!((m.clicks, m.cnv), (2, 1));
        assert!((m.ecpc.unwrap() - 0.5).abs() < 1e-12);
        assert!((m.ecpa.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_lost_gives_nulls() {
        let trace = EpisodeTrace { header: header(1, 1), sellers: vec![seller(1, 1.0, vec![rec(1, 5, 0, 0.0, 0, 0, 1.0)])] };
        let m = compute_metrics(&trace).unwrap();
        assert_eq!((m.awr, m.ecpm, m.ecpc, m.ecpa, m.clicks, m.cnv), (0.0, None, None, None, 0, 0));
        let json = serde_json::to_value(m).unwrap();
        assert!(json["ecpc"].is_null());
    }

    #[test]
    fn all_won_ratios_collapse() {
        let trace = EpisodeTrace { header: header(1, 1), sellers: vec![seller(1, 10.0, vec![rec(1, 4, 4, 1.2, 4, 4, 8.8)])] };
        let m = compute_metrics(&trace).unwrap();
        assert_eq!(m.awr, 1.0);
        assert!((m.ecpc.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(m.ecpc, m.ecpa);
        assert!((m.ecpm.unwrap() / 1000.0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rmse_closed_forms() {
        let (b, t) = (10_000.0, 48u32);
        let tf = f64::from(t);
        let none = seller_rmse(b, &vec![b; 48], t).unwrap();
        assert!((none - b / tf * ((tf + 1.0) * (2.0 * tf + 1.0) / 6.0).sqrt()).abs() < 1e-6);
        assert!((none - 5863.6).abs() < 0.05);
        let all = seller_rmse(b, &vec![0.0; 48], t).unwrap();
        assert!((all - b / tf * ((tf - 1.0) * (2.0 * tf - 1.0) / 6.0).sqrt()).abs() < 1e-6);
        assert!((all - 5683.21).abs() < 0.005);
        let linear: Vec<f64> = (1..=t).map(|s| b * f64::from(t - s) / tf).collect();
        assert_eq!(seller_rmse(b, &linear, t).unwrap(), 0.0);
        assert_eq!(seller_rmse(b, &[], 0).unwrap(), 0.0);
        assert!(matches!(seller_rmse(b, &[1.0], 2), Err(ArenaError::Trace(_))));
    }

    #[test]
    fn rmse_scales_with_deviation() {
        let (b, t) = (100.0, 4u32);
        let target: Vec<f64> = (1..=t).map(|s| b * f64::from(t - s) / 4.0).collect();
        let dev = [3.0, -1.0, 2.0, 0.5];
        let with = |k: f64| -> Vec<f64> { target.iter().zip(dev).map(|(x, d)| x + k * d).collect() };
        let r1 = seller_rmse(b, &with(1.0), t).unwrap();
        let r3 = seller_rmse(b, &with(3.0), t).unwrap();
        assert!((r3 - 3.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn pooling_sums_then_divides() {
        let a = seller(1, 10.0, vec![rec(1, 10, 1, 1.0, 1, 1, 9.0)]);
        let b = seller(2, 10.0, vec![rec(1, 10, 9, 1.0, 3, 1, 9.0)]);
        let union = EpisodeTrace { header: header(1, 2), sellers: vec![a, b] };
        let m = compute_metrics(&union).unwrap();
        assert_eq!(m.awr, 0.5);
        assert_eq!(m.ecpc, Some(0.5));
        assert_eq!(m.ecpm, Some(200.0));
        let report = Report::from_trace(&union).unwrap();
        assert_eq!(report.sellers[0].metrics.awr, 0.1);
        assert_eq!(report.overall.rmse, report.sellers.iter().map(|s| s.metrics.rmse).sum::<f64>());
    }

    #[test]
    fn csv_rows() {
        let m = MetricsReport { awr: 0.5, ecpm: None, clicks: 3, ecpc: Some(0.25), cnv: 0, ecpa: None, rmse: 1.5 };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "metric,value\nawr,0.5\necpm,\nclicks,3\necpc,0.25\ncnv,0\necpa,\nrmse,1.5\n");
    }
}
