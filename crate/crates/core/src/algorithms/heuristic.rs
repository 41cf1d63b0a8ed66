//! Stateless bidders: every bid depends only on the auction's own signals.

use rand::{Rng, SeedableRng};

use super::formulas::{self, obj_factor};
use super::{AuctionView, Bidder, TargetMetric, TimestepContext};
use crate::error::{ArenaError, Result};
use crate::rng::StreamRng;

#[derive(Clone, Debug)]
pub struct ConstantBidder {
    bid0: f64,
}

impl ConstantBidder {
    pub fn new(bid0: f64) -> Result<Self> {
        if !(bid0 >= 0.0 && bid0.is_finite()) {
            return Err(ArenaError::config(format!("constant: bid0 must be finite and >= 0, got {bid0}")));
        }
        Ok(Self { bid0 })
    }
}

impl Bidder for ConstantBidder {
    fn bid(&mut self, _ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        bids.extend(std::iter::repeat_n(self.bid0, auctions.len()));
    }
}

/// Uniform bids between the seller's historical min and max winning price.
#[derive(Clone, Debug)]
pub struct RandomBidder {
    low: f64,
    high: f64,
    rng: StreamRng,
}

impl RandomBidder {
    pub fn new(low: f64, high: f64, seed: u64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && 0.0 <= low && low <= high) {
            return Err(ArenaError::config(format!("random: invalid bid bounds [{low}, {high}]")));
        }
        Ok(Self { low, high, rng: StreamRng::seed_from_u64(seed) })
    }
}

impl Bidder for RandomBidder {
    fn bid(&mut self, _ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        for _ in auctions {
            bids.push(self.rng.random_range(self.low..=self.high));
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearBidder {
    alpha: f64,
    target: TargetMetric,
}

impl LinearBidder {
    pub fn new(alpha: f64, target: TargetMetric) -> Self {
        Self { alpha, target }
    }
}

impl Bidder for LinearBidder {
    fn bid(&mut self, _ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        bids.extend(auctions.iter().map(|a| formulas::bid_linear(self.alpha, a.ctr, a.cvr, self.target)));
    }
}

#[derive(Clone, Debug)]
pub struct CostMaxBidder {
    b: f64,
    target: TargetMetric,
}

impl CostMaxBidder {
    pub fn new(b: f64, target: TargetMetric) -> Self {
        Self { b, target }
    }
}

impl Bidder for CostMaxBidder {
    fn bid(&mut self, ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        let bid = formulas::bid_costmax(self.b, self.target, ctx.cpc_bound, ctx.cpa_bound);
        bids.extend(std::iter::repeat_n(bid, auctions.len()));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrtbVariant {
    First,
    Second,
}

#[derive(Clone, Debug)]
pub struct OrtbBidder {
    variant: OrtbVariant,
    c: f64,
    lambda: f64,
    target: TargetMetric,
}

impl OrtbBidder {
    pub fn new(variant: OrtbVariant, c: f64, lambda: f64, target: TargetMetric) -> Result<Self> {
        if !(c > 0.0 && lambda > 0.0) {
            return Err(ArenaError::config(format!("ortb: c and lambda must be > 0, got c={c}, lambda={lambda}")));
        }
        Ok(Self { variant, c, lambda, target })
    }
}

impl Bidder for OrtbBidder {
    fn bid(&mut self, _ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        bids.extend(auctions.iter().map(|a| {
            let value = a.ctr * obj_factor(a.cvr, self.target);
            match self.variant {
                OrtbVariant::First => formulas::bid_ortb1(self.c, self.lambda, value),
                OrtbVariant::Second => formulas::bid_ortb2(self.c, self.lambda, value),
            }
        }));
    }
}

/// Dual-optimal formula with `p`, `q` held fixed.
#[derive(Clone, Debug)]
pub struct OptBidder {
    p: f64,
    q: f64,
    target: TargetMetric,
}

impl OptBidder {
    pub fn new(p: f64, q: f64, target: TargetMetric) -> Result<Self> {
        if !(p >= 0.0 && q >= 0.0 && p + q > 0.0) {
            return Err(ArenaError::config(format!("opt: need p, q >= 0 and p + q > 0, got p={p}, q={q}")));
        }
        Ok(Self { p, q, target })
    }
}

impl Bidder for OptBidder {
    fn bid(&mut self, ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        bids.extend(auctions.iter().map(|a| formulas::bid_opt(self.p, self.q, a.ctr, a.cvr, self.target, ctx.cpc_bound)));
    }
}
