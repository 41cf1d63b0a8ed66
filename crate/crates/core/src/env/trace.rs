//! Episode traces and their on-disk form.
//!
//! On disk a trace is a CSV with one row per (seller, timestep) plus a JSON
//! sidecar holding the episode header and the per-seller fields the CSV does
//! not carry (initial budget, auction counts, incident counters). Together
//! they reconstruct the in-memory trace exactly, minus per-auction outcomes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AuctionOutcome;
use crate::error::{ArenaError, Result};

pub const TRACE_HEADER: [&str; 7] = ["seller_id", "timestep", "wins", "cost", "clicks", "conversions", "balance"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub period: u8,
    pub seed: u64,
    pub total_timesteps: u32,
    pub n_sellers: u32,
    pub config_digest: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimestepRecord {
    pub timestep: u32,
    pub auctions: u32,
    pub wins: u32,
    pub cost: f64,
    pub clicks: u32,
    pub conversions: u32,
    /// Remaining budget after the timestep's last auction.
    pub balance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<AuctionOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerTrace {
    pub seller_id: u32,
    pub initial_budget: f64,
    pub total_cost: f64,
    pub steps: Vec<TimestepRecord>,
    pub nan_bids: u64,
    pub protocol_incidents: u64,
}

impl SellerTrace {
    /// Checks the hard budget constraint on the whole trajectory.
    pub fn check_budget(&self) -> Result<()> {
        let id = self.seller_id;
        if !(self.total_cost <= self.initial_budget) {
            return Err(ArenaError::Trace(format!("seller {id}: total cost {} exceeds budget {}", self.total_cost, self.initial_budget)));
        }
        if let Some(r) = self.steps.iter().find(|r| !(r.balance >= 0.0)) {
            return Err(ArenaError::Trace(format!("seller {id}: negative balance {} at t={}", r.balance, r.timestep)));
        }
        Ok(())
    }

    fn summary(&self) -> SellerSummary {
        SellerSummary {
            seller_id: self.seller_id,
            initial_budget: self.initial_budget,
            total_cost: self.total_cost,
            auctions: self.steps.iter().map(|r| r.auctions).collect(),
            nan_bids: self.nan_bids,
            protocol_incidents: self.protocol_incidents,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: EpisodeHeader,
    pub sellers: Vec<SellerTrace>,
}

/// Per-seller fields stored in the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerSummary {
    pub seller_id: u32,
    pub initial_budget: f64,
    pub total_cost: f64,
    /// Auction count per timestep.
    pub auctions: Vec<u32>,
    pub nan_bids: u64,
    pub protocol_incidents: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    header: EpisodeHeader,
    sellers: Vec<SellerSummary>,
}

impl EpisodeTrace {
    pub fn total_nan_bids(&self) -> u64 {
        self.sellers.iter().map(|s| s.nan_bids).sum()
    }

    pub fn total_incidents(&self) -> u64 {
        self.sellers.iter().map(|s| s.protocol_incidents).sum()
    }

    pub fn check_budget(&self) -> Result<()> {
        self.sellers.iter().try_for_each(SellerTrace::check_budget)
    }

    pub fn write_sidecar<W: Write>(&self, writer: W) -> Result<()> {
        let sidecar = Sidecar { header: self.header.clone(), sellers: self.sellers.iter().map(SellerTrace::summary).collect() };
        serde_json::to_writer_pretty(writer, &sidecar)?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        let f = File::create(&csv_path).map_err(|e| ArenaError::io(&csv_path, e))?;
        write_trace_csv(BufWriter::new(f), self)?;
        let f = File::create(&json_path).map_err(|e| ArenaError::io(&json_path, e))?;
        let mut w = BufWriter::new(f);
        self.write_sidecar(&mut w)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| ArenaError::io(&json_path, e))?;
        Ok(())
    }

    pub fn read_files(csv_path: &Path, json_path: &Path) -> Result<Self> {
        let f = File::open(json_path).map_err(|e| ArenaError::io(json_path, e))?;
        let sidecar: Sidecar = serde_json::from_reader(BufReader::new(f))?;
        let f = File::open(csv_path).map_err(|e| ArenaError::io(csv_path, e))?;
        read_trace_csv(BufReader::new(f), sidecar.header, sidecar.sellers)
    }
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &EpisodeTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for s in &trace.sellers {
        for r in &s.steps {
            w.write_record([
                s.seller_id.to_string(),
                r.timestep.to_string(),
                r.wins.to_string(),
                r.cost.to_string(),
                r.clicks.to_string(),
                r.conversions.to_string(),
                r.balance.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| ArenaError::Trace(e.to_string()))?;
    Ok(())
}

/// Rebuilds a trace from its CSV rows and sidecar fields. Every seller must
/// have exactly one row per timestep `1..=T`, in order.
pub fn read_trace_csv<R: Read>(reader: R, header: EpisodeHeader, sellers: Vec<SellerSummary>) -> Result<EpisodeTrace> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(TRACE_HEADER) {
        return Err(ArenaError::Trace(format!("trace header must be {}", TRACE_HEADER.join(","))));
    }
    let t_total = header.total_timesteps as usize;
    let mut traces: Vec<SellerTrace> = sellers
        .iter()
        .map(|s| SellerTrace {
            seller_id: s.seller_id,
            initial_budget: s.initial_budget,
            total_cost: s.total_cost,
            steps: Vec::with_capacity(t_total),
            nan_bids: s.nan_bids,
            protocol_incidents: s.protocol_incidents,
        })
        .collect();
    let mut current = 0usize;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| ArenaError::Trace(format!("line {line}: {what}"));
        if rec.len() != TRACE_HEADER.len() {
            return Err(bad("wrong number of columns"));
        }
        let int = |k: usize| rec[k].parse::<u32>().map_err(|_| bad(&format!("bad `{}`", TRACE_HEADER[k])));
        let real = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(&format!("bad `{}`", TRACE_HEADER[k])));
        let seller_id = int(0)?;
        while current < traces.len() && traces[current].seller_id != seller_id {
            if traces[current].steps.len() != t_total {
                return Err(bad(&format!("seller {} has missing timesteps", traces[current].seller_id)));
            }
            current += 1;
        }
        let Some(seller) = traces.get_mut(current) else {
            return Err(bad(&format!("unexpected seller {seller_id}")));
        };
        let timestep = int(1)?;
        let k = seller.steps.len();
        if timestep as usize != k + 1 || k >= t_total {
            return Err(bad(&format!("expected timestep {} for seller {seller_id}", k + 1)));
        }
        let auctions = sellers[current].auctions.get(k).copied().ok_or_else(|| bad("auction counts too short"))?;
        seller.steps.push(TimestepRecord {
            timestep,
            auctions,
            wins: int(2)?,
            cost: real(3)?,
            clicks: int(4)?,
            conversions: int(5)?,
            balance: real(6)?,
            outcomes: Vec::new(),
        });
    }
    if let Some(s) = traces.iter().find(|s| s.steps.len() != t_total) {
        return Err(ArenaError::Trace(format!("seller {} has {} of {t_total} timesteps", s.seller_id, s.steps.len())));
    }
    if traces.len() != header.n_sellers as usize {
        return Err(ArenaError::Trace(format!("header says {} sellers, found {}", header.n_sellers, traces.len())));
    }
    Ok(EpisodeTrace { header, sellers: traces })
}
