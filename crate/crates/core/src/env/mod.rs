//! The seller/environment loop.
//!
//! At every timestep a seller's algorithm bids on each of the seller's
//! logged auctions. Auctions resolve in `auction_id` order against the logged
//! winning price, with the bid clamped to the remaining budget first, so the
//! budget is a hard constraint. Clicks and conversions are then sampled from
//! the auction's `ctr` and `cvr`.
//!
//! Each seller draws its outcome randomness from its own stream, one pair of
//! uniforms per auction whether or not it is won. Two algorithms replayed on
//! the same data therefore see the same click and conversion realizations.

mod trace;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{AlgorithmSpec, AuctionView, Bidder, BidderContext, TimestepContext, TimestepFeedback};
use crate::data::{group_ranges, ImpressionOpportunity};
use crate::error::{ArenaError, Result};
use crate::rng::{self, Purpose, StreamRng};

pub use trace::{read_trace_csv, write_trace_csv, EpisodeHeader, EpisodeTrace, SellerSummary, SellerTrace, TimestepRecord, TRACE_HEADER};

/// A seller's budget. Spending is refused if it would push the cumulative
/// cost over the initial budget, even by a rounding error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    initial: f64,
    spent: f64,
}

impl Budget {
    pub fn new(initial: f64) -> Self {
        Self { initial, spent: 0.0 }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        (self.initial - self.spent).max(0.0)
    }

    fn try_charge(&mut self, amount: f64) -> bool {
        let spent = self.spent + amount;
        if spent <= self.initial {
            self.spent = spent;
            true
        } else {
            false
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub auction_id: u32,
    pub won: bool,
    pub cost: f64,
    pub clicked: bool,
    pub converted: bool,
}

/// Resolves one auction. NaN bids count as 0. The caller supplies the two
/// uniforms in `[0, 1)` used for the click and the conversion.
pub fn resolve_auction(bid: f64, opp: &ImpressionOpportunity, budget: &mut Budget, u_click: f64, u_conversion: f64) -> AuctionOutcome {
    let bid = if bid.is_nan() { 0.0 } else { bid };
    let effective = bid.clamp(0.0, budget.remaining());
    let won = effective > opp.winning_price && budget.try_charge(opp.winning_price);
    let clicked = won && u_click < opp.ctr;
    let converted = clicked && u_conversion < opp.cvr;
    AuctionOutcome { auction_id: opp.auction_id, won, cost: if won { opp.winning_price } else { 0.0 }, clicked, converted }
}

/// [`resolve_auction`] drawing its uniforms from `rng`.
pub fn run_auction(bid: f64, opp: &ImpressionOpportunity, budget: &mut Budget, rng: &mut StreamRng) -> AuctionOutcome {
    let u_click: f64 = rng.random();
    let u_conversion: f64 = rng.random();
    resolve_auction(bid, opp, budget, u_click, u_conversion)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerConfig {
    pub seller_id: u32,
    pub initial_budget: f64,
    pub cpc_bound: f64,
    pub cpa_bound: f64,
    pub algorithm: AlgorithmSpec,
    /// Min and max period-1 winning price, used by random bidding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_bounds: Option<(f64, f64)>,
}

impl SellerConfig {
    pub fn validate(&self) -> Result<()> {
        let id = self.seller_id;
        if !(self.initial_budget.is_finite() && self.initial_budget >= 0.0) {
            return Err(ArenaError::config(format!("seller {id}: budget must be finite and >= 0")));
        }
        if !(self.cpc_bound.is_finite() && self.cpc_bound >= 0.0 && self.cpa_bound.is_finite() && self.cpa_bound >= 0.0) {
            return Err(ArenaError::config(format!("seller {id}: cost bounds must be finite and >= 0")));
        }
        self.algorithm.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOptions {
    pub seed: u64,
    pub period: u8,
    pub total_timesteps: u32,
    /// Keep every auction outcome in the trace.
    pub record_outcomes: bool,
    pub parallel: bool,
}

impl EpisodeOptions {
    pub fn new(seed: u64, period: u8, total_timesteps: u32) -> Self {
        Self { seed, period, total_timesteps, record_outcomes: false, parallel: true }
    }
}

/// One seller's live state during an episode.
pub struct SellerState {
    config: SellerConfig,
    total_timesteps: u32,
    budget: Budget,
    bidder: Box<dyn Bidder>,
    rng: StreamRng,
    record_outcomes: bool,
    nan_bids: u64,
    steps: Vec<TimestepRecord>,
    views: Vec<AuctionView>,
    bids: Vec<f64>,
}

impl SellerState {
    pub fn new(config: &SellerConfig, opts: &EpisodeOptions) -> Result<Self> {
        config.validate()?;
        let ctx = BidderContext {
            seller_id: config.seller_id,
            period: opts.period,
            seed: opts.seed,
            initial_budget: config.initial_budget,
            cpc_bound: config.cpc_bound,
            cpa_bound: config.cpa_bound,
            total_timesteps: opts.total_timesteps,
            history_bounds: config.history_bounds,
        };
        Ok(Self {
            config: config.clone(),
            total_timesteps: opts.total_timesteps,
            budget: Budget::new(config.initial_budget),
            bidder: config.algorithm.build(&ctx)?,
            rng: rng::stream(opts.seed, Purpose::Outcomes, u32::from(opts.period), u64::from(config.seller_id)),
            record_outcomes: opts.record_outcomes,
            nan_bids: 0,
            steps: Vec::with_capacity(opts.total_timesteps as usize),
            views: Vec::new(),
            bids: Vec::new(),
        })
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    /// Runs timestep `t` over this seller's opportunities, which must be in
    /// ascending `auction_id` order.
    pub fn run_timestep(&mut self, t: u32, opportunities: &[ImpressionOpportunity]) -> &TimestepRecord {
        let ctx = TimestepContext {
            seller_id: self.config.seller_id,
            timestep: t,
            total_timesteps: self.total_timesteps,
            remaining_budget: self.budget.remaining(),
            initial_budget: self.config.initial_budget,
            cpc_bound: self.config.cpc_bound,
            cpa_bound: self.config.cpa_bound,
        };
        self.views.clear();
        self.views.extend(opportunities.iter().map(|o| AuctionView { auction_id: o.auction_id, ctr: o.ctr, cvr: o.cvr }));
        self.bids.clear();
        self.bidder.bid(&ctx, &self.views, &mut self.bids);
        // A bidder that returns too few bids abstains on the rest.
        self.bids.resize(opportunities.len(), 0.0);

        let mut record = TimestepRecord { timestep: t, auctions: opportunities.len() as u32, ..Default::default() };
        for (opp, &bid) in opportunities.iter().zip(&self.bids) {
            if bid.is_nan() {
                self.nan_bids += 1;
            }
            let out = run_auction(bid, opp, &mut self.budget, &mut self.rng);
            if out.won {
                record.wins += 1;
                record.cost += out.cost;
            }
            record.clicks += u32::from(out.clicked);
            record.conversions += u32::from(out.converted);
            if self.record_outcomes {
                record.outcomes.push(out);
            }
        }
        record.balance = self.budget.remaining();

        let feedback = TimestepFeedback {
            timestep: t,
            auctions: record.auctions,
            wins: record.wins,
            cost: record.cost,
            clicks: record.clicks,
            conversions: record.conversions,
            balance: record.balance,
        };
        self.bidder.observe(&ctx, &feedback);
        self.steps.push(record);
        self.steps.last().expect("just pushed")
    }

    pub fn finish(self) -> SellerTrace {
        SellerTrace {
            seller_id: self.config.seller_id,
            initial_budget: self.config.initial_budget,
            total_cost: self.budget.spent(),
            steps: self.steps,
            nan_bids: self.nan_bids,
            protocol_incidents: self.bidder.incidents(),
        }
    }
}

/// Digest identifying the seller configuration of an episode.
pub fn config_digest(configs: &[SellerConfig]) -> String {
    let json = serde_json::to_vec(configs).expect("configs always serialize");
    hex::encode(Sha256::digest(&json))
}

fn run_seller(config: &SellerConfig, rows: &[ImpressionOpportunity], opts: &EpisodeOptions) -> Result<SellerTrace> {
    let mut state = SellerState::new(config, opts)?;
    let mut rest = rows;
    for t in 1..=opts.total_timesteps {
        let n = rest.partition_point(|r| r.timestep == t);
        let (now, later) = rest.split_at(n);
        state.run_timestep(t, now);
        rest = later;
    }
    debug_assert!(rest.is_empty());
    let trace = state.finish();
    trace.check_budget()?;
    Ok(trace)
}

/// Runs one period for every configured seller.
///
/// `data` must hold rows of `opts.period` only, in canonical order (as
/// returned by [`crate::Dataset::period`]). Every row must belong to a
/// configured seller and a timestep in `1..=T`.
pub fn run_episode(configs: &[SellerConfig], data: &[ImpressionOpportunity], opts: &EpisodeOptions) -> Result<EpisodeTrace> {
    let mut ids: Vec<u32> = configs.iter().map(|c| c.seller_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(ArenaError::config("duplicate seller_id in seller configs"));
    }
    let mut per_seller: Vec<&[ImpressionOpportunity]> = vec![&[]; configs.len()];
    let index_of = |id: u32| configs.iter().position(|c| c.seller_id == id);
    let mut prev_key = None;
    for range in group_ranges(data, |r| r.seller_id) {
        let rows = &data[range];
        let first = &rows[0];
        let Some(i) = index_of(first.seller_id) else {
            return Err(ArenaError::config(format!("data references unknown seller_id {}", first.seller_id)));
        };
        for r in rows {
            if r.period != opts.period {
                return Err(ArenaError::config(format!("episode for period {} got a row of period {}", opts.period, r.period)));
            }
            if r.timestep == 0 || r.timestep > opts.total_timesteps {
                return Err(ArenaError::config(format!(
                    "seller {} row at timestep {} outside 1..={}",
                    r.seller_id, r.timestep, opts.total_timesteps
                )));
            }
            let key = (r.seller_id, r.timestep, r.auction_id);
            if prev_key.is_some_and(|p| p >= key) {
                return Err(ArenaError::config("episode data is not in canonical order"));
            }
            prev_key = Some(key);
        }
        per_seller[i] = rows;
    }

    let sellers: Vec<SellerTrace> = if opts.parallel {
        configs.par_iter().zip(per_seller.par_iter()).map(|(c, rows)| run_seller(c, rows, opts)).collect::<Result<_>>()?
    } else {
        configs.iter().zip(&per_seller).map(|(c, rows)| run_seller(c, rows, opts)).collect::<Result<_>>()?
    };

    Ok(EpisodeTrace {
        header: EpisodeHeader {
            period: opts.period,
            seed: opts.seed,
            total_timesteps: opts.total_timesteps,
            n_sellers: configs.len() as u32,
            config_digest: config_digest(configs),
        },
        sellers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{AlgorithmKind, TargetMetric};
    use proptest::prelude::*;

    fn opp(seller_id: u32, timestep: u32, auction_id: u32, wp: f64, ctr: f64, cvr: f64) -> ImpressionOpportunity {
        ImpressionOpportunity { period: 1, timestep, seller_id, auction_id, p_value: ctr * cvr, winning_price: wp, ctr, cvr }
    }

    fn constant(seller_id: u32, budget: f64, bid: f64) -> SellerConfig {
        SellerConfig {
            seller_id,
            initial_budget: budget,
            cpc_bound: 0.5,
            cpa_bound: 0.05,
            algorithm: AlgorithmSpec::new(AlgorithmKind::Constant, TargetMetric::Clicks).with("bid0", bid),
            history_bounds: None,
        }
    }

    fn opts(t: u32) -> EpisodeOptions {
        EpisodeOptions { record_outcomes: true, ..EpisodeOptions::new(7, 1, t) }
    }

    #[test]
    fn auction_rule_examples() {
        let o = opp(1, 1, 1, 0.3, 1.0, 1.0);
        let mut b = Budget::new(100.0);
        let out = resolve_auction(0.5, &o, &mut b, 0.5, 0.5);
        assert!(out.won && out.cost == 0.3 && out.clicked && out.converted);
        assert_eq!(b.spent(), 0.3);

        let mut b = Budget::new(100.0);
        let out = resolve_auction(0.2, &o, &mut b, 0.0, 0.0);
        assert_eq!(out, AuctionOutcome { auction_id: 1, won: false, cost: 0.0, clicked: false, converted: false });

        let o = opp(1, 1, 1, 3.0, 0.5, 0.5);
        let mut b = Budget::new(2.0);
        assert!(!resolve_auction(10.0, &o, &mut b, 0.0, 0.0).won);
        assert_eq!(b.spent(), 0.0);
    }

    #[test]
    fn ties_lose_and_nan_counts_as_zero() {
        let o = opp(1, 1, 1, 0.3, 0.5, 0.5);
        let mut b = Budget::new(1.0);
        assert!(!resolve_auction(0.3, &o, &mut b, 0.0, 0.0).won);
        let o0 = opp(1, 1, 1, 0.0, 0.5, 0.5);
        assert!(!resolve_auction(f64::NAN, &o0, &mut b, 0.0, 0.0).won);
        assert!(resolve_auction(f64::INFINITY, &o, &mut b, 0.0, 0.0).won);
    }

    #[test]
    fn conversion_implies_click_implies_win() {
        let o = opp(1, 1, 1, 0.1, 0.5, 0.5);
        let mut b = Budget::new(1.0);
        let out = resolve_auction(1.0, &o, &mut b, 0.9, 0.1);
        assert!(out.won && !out.clicked && !out.converted);
        let out = resolve_auction(0.0, &o, &mut b, 0.0, 0.0);
        assert!(!out.won && !out.clicked && !out.converted);
    }

    #[test]
    fn budget_blocks_after_first_win() {
        let data: Vec<_> = (1..=3).map(|a| opp(1, 1, a, 0.3, 0.5, 0.5)).collect();
        let trace = run_episode(&[constant(1, 0.4, 1.0)], &data, &opts(1)).unwrap();
        let step = &trace.sellers[0].steps[0];
        assert_eq!(step.wins, 1);
        assert!((step.balance - 0.1).abs() < 1e-12);
        assert_eq!(step.outcomes.iter().map(|o| o.won).collect::<Vec<_>>(), [true, false, false]);
    }

    #[test]
    fn empty_and_degenerate_episodes() {
        let trace = run_episode(&[constant(1, 50.0, 1.0)], &[], &opts(0)).unwrap();
        assert!(trace.sellers[0].steps.is_empty());
        assert_eq!(trace.sellers[0].total_cost, 0.0);

        let trace = run_episode(&[constant(1, 50.0, 1.0)], &[], &opts(3)).unwrap();
        let s = &trace.sellers[0];
        assert_eq!(s.steps.len(), 3);
        assert!(s.steps.iter().all(|r| r.auctions == 0 && r.balance == 50.0));

        let data = vec![opp(1, 1, 1, 0.3, 0.5, 0.5)];
        let trace = run_episode(&[constant(1, 50.0, 0.0)], &data, &opts(1)).unwrap();
        assert_eq!((trace.sellers[0].steps[0].wins, trace.sellers[0].total_cost), (0, 0.0));
    }

    #[test]
    fn ample_budget_wins_everything() {
        let data: Vec<_> = (1..=4).flat_map(|t| (1..=5).map(move |a| opp(1, t, a, 0.01 * f64::from(a), 0.3, 0.3))).collect();
        let trace = run_episode(&[constant(1, 10_000.0, 1.0)], &data, &opts(4)).unwrap();
        let s = &trace.sellers[0];
        assert_eq!(s.steps.iter().map(|r| r.wins).sum::<u32>(), 20);
        assert!((s.total_cost - 4.0 * 0.15).abs() < 1e-12);
    }

    #[test]
    fn data_errors() {
        let data = vec![opp(2, 1, 1, 0.3, 0.5, 0.5)];
        assert!(matches!(run_episode(&[constant(1, 1.0, 1.0)], &data, &opts(1)), Err(ArenaError::Config(_))));
        let data = vec![opp(1, 5, 1, 0.3, 0.5, 0.5)];
        assert!(run_episode(&[constant(1, 1.0, 1.0)], &data, &opts(4)).is_err());
        let mut row = opp(1, 1, 1, 0.3, 0.5, 0.5);
        row.period = 2;
        assert!(run_episode(&[constant(1, 1.0, 1.0)], &[row], &opts(4)).is_err());
        assert!(run_episode(&[constant(1, 1.0, 1.0), constant(1, 1.0, 1.0)], &[], &opts(4)).is_err());
        let bad = constant(1, -1.0, 1.0);
        assert!(run_episode(&[bad], &[], &opts(1)).is_err());
    }

    fn toy_data(sellers: u32, t: u32, n: u32) -> Vec<ImpressionOpportunity> {
        let mut rows = Vec::new();
        for s in 1..=sellers {
            for ts in 1..=t {
                for a in 1..=n {
                    let x = f64::from((s * 31 + ts * 17 + a * 7) % 97) / 97.0;
                    rows.push(opp(s, ts, a, 0.05 + x, 0.1 + 0.5 * x, 0.3));
                }
            }
        }
        rows
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let data = toy_data(5, 6, 20);
        let configs: Vec<_> = (1..=5).map(|s| constant(s, 5.0, 0.6)).collect();
        let par = run_episode(&configs, &data, &opts(6)).unwrap();
        let seq = run_episode(&configs, &data, &EpisodeOptions { parallel: false, ..opts(6) }).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par, run_episode(&configs, &data, &opts(6)).unwrap());
    }

    #[test]
    fn removing_a_seller_leaves_others_identical() {
        let data = toy_data(4, 5, 10);
        let configs: Vec<_> = (1..=4).map(|s| constant(s, 3.0, 0.7)).collect();
        let full = run_episode(&configs, &data, &opts(5)).unwrap();
        let reduced_data: Vec<_> = data.iter().filter(|r| r.seller_id != 2).copied().collect();
        let reduced_configs: Vec<_> = configs.iter().filter(|c| c.seller_id != 2).cloned().collect();
        let reduced = run_episode(&reduced_configs, &reduced_data, &opts(5)).unwrap();
        let others: Vec<_> = full.sellers.iter().filter(|s| s.seller_id != 2).cloned().collect();
        assert_eq!(others, reduced.sellers);
    }

    #[test]
    fn outcomes_do_not_depend_on_the_algorithm() {
        // Common random numbers: each auction's uniforms are fixed per seed,
        // so winning a superset of auctions clicks on a superset.
        let data = toy_data(1, 3, 30);
        let lo = run_episode(&[constant(1, 1e6, 0.4)], &data, &opts(3)).unwrap();
        let hi = run_episode(&[constant(1, 1e6, 2.0)], &data, &opts(3)).unwrap();
        for (a, b) in lo.sellers[0].steps.iter().zip(&hi.sellers[0].steps) {
            for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
                assert!(!x.clicked || y.clicked);
                assert!(!x.converted || y.converted);
            }
        }
    }

    /// Brute-force oracle: walk the auctions with a plain running total and
    /// the literal rule, then compare with the environment.
    fn oracle_wins(budget: f64, bids: &[f64], wps: &[f64]) -> Vec<bool> {
        let mut spent = 0.0;
        bids.iter()
            .zip(wps)
            .map(|(&b, &wp)| {
                let remaining = (budget - spent).max(0.0);
                let win = b.clamp(0.0, remaining) > wp && spent + wp <= budget;
                if win {
                    spent += wp;
                }
                win
            })
            .collect()
    }

    proptest! {
        #[test]
        fn hard_budget_small_cases(
            budget in 0.0f64..3.0,
            cases in proptest::collection::vec((0.0f64..2.0, 0.0f64..1.5), 0..12),
        ) {
            let mut b = Budget::new(budget);
            let expect = oracle_wins(budget, &cases.iter().map(|c| c.0).collect::<Vec<_>>(),
                                     &cases.iter().map(|c| c.1).collect::<Vec<_>>());
            for (i, &(bid, wp)) in cases.iter().enumerate() {
                let o = opp(1, 1, i as u32 + 1, wp, 0.5, 0.5);
                let out = resolve_auction(bid, &o, &mut b, 0.5, 0.5);
                prop_assert_eq!(out.won, expect[i]);
                prop_assert!(b.spent() <= budget);
                prop_assert!(b.remaining() >= 0.0);
                prop_assert!(out.won == (out.cost > 0.0) || (out.won && wp == 0.0));
            }
        }

        #[test]
        fn episode_respects_budget(budget in 0.0f64..10.0, bid in 0.0f64..3.0, seed in any::<u64>()) {
            let data = toy_data(2, 4, 25);
            let configs = [constant(1, budget, bid), constant(2, budget * 0.5, bid)];
            let trace = run_episode(&configs, &data, &EpisodeOptions { seed, ..opts(4) }).unwrap();
            for s in &trace.sellers {
                prop_assert!(s.total_cost <= s.initial_budget);
                prop_assert!(s.steps.iter().all(|r| r.balance >= 0.0));
            }
        }
    }
}
