//! Value-proportional bids shaded by a budget dual variable.

use super::formulas;
use super::{AuctionView, Bidder, TargetMetric, TimestepContext, TimestepFeedback};
use crate::error::{ArenaError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shading {
    /// `ctr · obj / (1 + μ)`
    Roi { target: TargetMetric },
    /// `a · ctr · cvr / (1 + λ)`
    Smoothed { a_scale: f64 },
}

/// BROI and CB. After each timestep the dual variable takes a projected step
/// on the spend error relative to the even per-timestep budget.
#[derive(Clone, Debug)]
pub struct DualPacingBidder {
    shading: Shading,
    dual: f64,
    eta: f64,
}

impl DualPacingBidder {
    pub fn broi(mu0: f64, eta: f64, target: TargetMetric) -> Result<Self> {
        Self::new(Shading::Roi { target }, mu0, eta)
    }

    pub fn cb(a_scale: f64, lambda0: f64, eta: f64) -> Result<Self> {
        if !(a_scale >= 0.0) {
            return Err(ArenaError::config(format!("cb: a_scale must be >= 0, got {a_scale}")));
        }
        Self::new(Shading::Smoothed { a_scale }, lambda0, eta)
    }

    fn new(shading: Shading, dual: f64, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(ArenaError::config(format!("dual pacing: eta must be >= 0, got {eta}")));
        }
        if !(1.0 + dual > 0.0) {
            return Err(ArenaError::config(format!("dual pacing: 1 + initial dual must be > 0, got {dual}")));
        }
        Ok(Self { shading, dual, eta })
    }

    pub fn dual(&self) -> f64 {
        self.dual
    }
}

impl Bidder for DualPacingBidder {
    fn bid(&mut self, _ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        let dual = self.dual;
        match self.shading {
            Shading::Roi { target } => bids.extend(auctions.iter().map(|a| formulas::bid_broi(dual, a.ctr, a.cvr, target))),
            Shading::Smoothed { a_scale } => bids.extend(auctions.iter().map(|a| formulas::bid_cb(a_scale, dual, a.ctr, a.cvr))),
        }
    }

    fn observe(&mut self, ctx: &TimestepContext, feedback: &TimestepFeedback) {
        let per_step = ctx.initial_budget / f64::from(ctx.total_timesteps.max(1));
        self.dual = formulas::dual_step(self.dual, self.eta, feedback.cost, per_step);
    }
}
