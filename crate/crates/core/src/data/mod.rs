//! Impression opportunities: loading, synthesis and CTR/CVR derivation.

mod decompose;
mod io;
mod synth;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ArenaError, Result};
use crate::rng::{self, Purpose};

pub use decompose::{decompose_pvalue, sample_decomposition, sample_draw, DecompositionDraw, CLIP_HIGH, CLIP_LOW};
pub use io::{load_dataset, read_dataset, write_dataset, DATASET_HEADER};
pub use synth::{generate_synthetic, SyntheticConfig};

/// One logged auction for one seller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpressionOpportunity {
    pub period: u8,
    pub timestep: u32,
    pub seller_id: u32,
    pub auction_id: u32,
    pub p_value: f64,
    pub winning_price: f64,
    pub ctr: f64,
    pub cvr: f64,
}

impl ImpressionOpportunity {
    fn key(&self) -> (u8, u32, u32, u32) {
        (self.period, self.seller_id, self.timestep, self.auction_id)
    }
}

/// Rows in canonical `(period, seller_id, timestep, auction_id)` order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    rows: Vec<ImpressionOpportunity>,
}

impl Dataset {
    /// Sorts rows into canonical order and rejects duplicate keys. The
    /// `ctr`/`cvr` fields are taken as given.
    pub fn from_rows(mut rows: Vec<ImpressionOpportunity>) -> Result<Self> {
        rows.par_sort_unstable_by_key(ImpressionOpportunity::key);
        if let Some(w) = rows.windows(2).find(|w| w[0].key() == w[1].key()) {
            let r = &w[1];
            return Err(ArenaError::config(format!(
                "duplicate auction: period {} seller {} timestep {} auction {}",
                r.period, r.seller_id, r.timestep, r.auction_id
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ImpressionOpportunity] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<ImpressionOpportunity> {
        self.rows
    }

    /// The contiguous slice belonging to one period.
    pub fn period(&self, period: u8) -> &[ImpressionOpportunity] {
        let start = self.rows.partition_point(|r| r.period < period);
        let end = self.rows.partition_point(|r| r.period <= period);
        &self.rows[start..end]
    }

    /// Re-derives `ctr`/`cvr` for every row from `seed`. Each
    /// `(period, seller)` block draws from its own stream in canonical order,
    /// so the result does not depend on the original row order or on
    /// scheduling.
    pub fn decompose(&mut self, seed: u64) -> Result<()> {
        let ranges = group_ranges(&self.rows, |r| (r.period, r.seller_id));
        let mut blocks = split_ranges(&mut self.rows, &ranges);
        blocks.par_iter_mut().try_for_each(|block| {
            let Some(first) = block.first() else {
                return Ok(());
            };
            let mut rng = rng::stream(seed, Purpose::Decomposition, u32::from(first.period), u64::from(first.seller_id));
            for row in block.iter_mut() {
                let (ctr, cvr) = sample_decomposition(row.p_value, &mut rng)?;
                row.ctr = ctr;
                row.cvr = cvr;
            }
            Ok(())
        })
    }

    /// SHA-256 over the logged columns (not the derived CTR/CVR).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.rows {
            hasher.update([r.period]);
            hasher.update(r.timestep.to_le_bytes());
            hasher.update(r.seller_id.to_le_bytes());
            hasher.update(r.auction_id.to_le_bytes());
            hasher.update(r.p_value.to_bits().to_le_bytes());
            hasher.update(r.winning_price.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Ranges of consecutive rows that share a key.
pub(crate) fn group_ranges<T, K: PartialEq>(rows: &[T], key: impl Fn(&T) -> K) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || key(&rows[i]) != key(&rows[start]) {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

fn split_ranges<'a, T>(mut rows: &'a mut [T], ranges: &[Range<usize>]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(ranges.len());
    let mut offset = 0;
    for r in ranges {
        let (_, rest) = rows.split_at_mut(r.start - offset);
        let (block, tail) = rest.split_at_mut(r.len());
        out.push(block);
        rows = tail;
        offset = r.end;
    }
    out
}
