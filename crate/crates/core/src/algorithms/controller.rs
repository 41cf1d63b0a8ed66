//! Feedback controllers on the budget trajectory.
//!
//! All controllers observe the balance at the end of every timestep and
//! compare it with the linear target `B*(t) = B (T − t) / T`:
//!
//! ```text
//! e(t)   = B*(t) − B(t)
//! e_g(t) = B(t) − B(t−1) − [B*(t) − B*(t−1)]
//! ```
//!
//! and feed a signal `φ` into an exponential actuator. The per-step exponent
//! is clamped to `±MAX_ADJUSTMENT`.

use super::formulas::{self, clamp_adjustment};
use super::{AuctionView, Bidder, TargetMetric, TimestepContext, TimestepFeedback};
use crate::error::{ArenaError, Result};
use crate::metrics::target_balance;

/// Error, running sum of errors, and gap (derivative-like) term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorTerms {
    pub error: f64,
    pub integral: f64,
    pub gap: f64,
}

impl ErrorTerms {
    pub fn is_zero(&self) -> bool {
        self.error == 0.0 && self.integral == 0.0 && self.gap == 0.0
    }
}

/// Tracks the balance against the linear target trajectory.
#[derive(Clone, Debug)]
pub struct PacingTracker {
    initial_budget: f64,
    total_timesteps: u32,
    prev_balance: f64,
    prev_target: f64,
    integral: f64,
}

impl PacingTracker {
    pub fn new(initial_budget: f64, total_timesteps: u32) -> Self {
        Self { initial_budget, total_timesteps, prev_balance: initial_budget, prev_target: initial_budget, integral: 0.0 }
    }

    pub fn target_balance(&self, timestep: u32) -> f64 {
        target_balance(self.initial_budget, timestep, self.total_timesteps)
    }

    pub fn observe(&mut self, timestep: u32, balance: f64) -> ErrorTerms {
        let target = self.target_balance(timestep);
        let error = target - balance;
        self.integral += error;
        let gap = (balance - self.prev_balance) - (target - self.prev_target);
        self.prev_balance = balance;
        self.prev_target = target;
        ErrorTerms { error, integral: self.integral, gap }
    }
}

/// Tracks the running eCPC against the CPC bound. Until the first click the
/// eCPC is undefined and every term is zero.
#[derive(Clone, Debug)]
struct EcpcTracker {
    cpc_bound: f64,
    cost: f64,
    clicks: u64,
    prev_ecpc: Option<f64>,
    integral: f64,
}

impl EcpcTracker {
    fn new(cpc_bound: f64) -> Self {
        Self { cpc_bound, cost: 0.0, clicks: 0, prev_ecpc: None, integral: 0.0 }
    }

    fn observe(&mut self, cost: f64, clicks: u32) -> ErrorTerms {
        self.cost += cost;
        self.clicks += u64::from(clicks);
        if self.clicks == 0 {
            return ErrorTerms { integral: self.integral, ..Default::default() };
        }
        let ecpc = self.cost / self.clicks as f64;
        let error = self.cpc_bound - ecpc;
        self.integral += error;
        let gap = self.prev_ecpc.map_or(0.0, |prev| ecpc - prev);
        self.prev_ecpc = Some(ecpc);
        ErrorTerms { error, integral: self.integral, gap }
    }
}

/// Proportional, integral and gap gains. Signs are unconstrained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidGains {
    pub proportional: f64,
    pub integral: f64,
    pub gap: f64,
}

impl PidGains {
    pub fn new(proportional: f64, integral: f64, gap: f64) -> Self {
        Self { proportional, integral, gap }
    }

    pub fn signal(&self, e: &ErrorTerms) -> f64 {
        self.proportional * e.error + self.integral * e.integral + self.gap * e.gap
    }
}

const MULTIPLIER_MIN: f64 = 1e-300;
const MULTIPLIER_MAX: f64 = 1e300;

fn actuate(value: f64, phi: f64) -> f64 {
    (value * clamp_adjustment(phi).exp()).clamp(MULTIPLIER_MIN, MULTIPLIER_MAX)
}

/// Fb step: `bid(t) = bid(t−1) · exp(φ)`, `φ = λ1 e + λ2 Σe + λ3 e_g`.
pub fn fb_step(multiplier: f64, gains: &PidGains, errors: &ErrorTerms) -> (f64, f64) {
    let phi = gains.signal(errors);
    (actuate(multiplier, phi), phi)
}

/// FbWL step: `φ(t) = φ(t−1) + λ4 e(t)`.
pub fn fbwl_step(phi: f64, lambda4: f64, error: f64) -> f64 {
    phi + clamp_adjustment(lambda4 * error)
}

/// Mystique step: `φ(t) = φ(t−1) + w_s e(t) + w_g e_g(t)`.
pub fn mystique_step(phi: f64, w_s: f64, w_g: f64, error: f64, gap: f64) -> f64 {
    phi + clamp_adjustment(w_s * error + w_g * gap)
}

/// Multiplicative update of both duals; positivity is preserved.
pub fn pid_actuate(p: f64, q: f64, phi_p: f64, phi_q: f64) -> (f64, f64) {
    (actuate(p, phi_p), actuate(q, phi_q))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeedbackLaw {
    Fb { lambda1: f64, lambda2: f64, lambda3: f64 },
    FbWl { lambda4: f64 },
    Mystique { w_s: f64, w_g: f64 },
}

/// Fb, FbWL and Mystique: `ctr · obj` scaled by a controlled multiplier.
///
/// Fb applies its signal multiplicatively each step. FbWL and Mystique
/// accumulate `φ` themselves, so their multiplier is `exp(φ)`.
#[derive(Clone, Debug)]
pub struct FeedbackBidder {
    law: FeedbackLaw,
    target: TargetMetric,
    tracker: Option<PacingTracker>,
    phi: f64,
    multiplier: f64,
}

impl FeedbackBidder {
    pub fn new(law: FeedbackLaw, phi0: f64, target: TargetMetric) -> Self {
        Self { law, target, tracker: None, phi: phi0, multiplier: phi0.exp().clamp(MULTIPLIER_MIN, MULTIPLIER_MAX) }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Applies one timestep of error terms.
    pub fn apply(&mut self, errors: &ErrorTerms) {
        match self.law {
            FeedbackLaw::Fb { lambda1, lambda2, lambda3 } => {
                let (m, phi) = fb_step(self.multiplier, &PidGains::new(lambda1, lambda2, lambda3), errors);
                self.multiplier = m;
                self.phi = phi;
            }
            FeedbackLaw::FbWl { lambda4 } => {
                self.phi = fbwl_step(self.phi, lambda4, errors.error);
                self.multiplier = self.phi.exp().clamp(MULTIPLIER_MIN, MULTIPLIER_MAX);
            }
            FeedbackLaw::Mystique { w_s, w_g } => {
                self.phi = mystique_step(self.phi, w_s, w_g, errors.error, errors.gap);
                self.multiplier = self.phi.exp().clamp(MULTIPLIER_MIN, MULTIPLIER_MAX);
            }
        }
    }
}

impl Bidder for FeedbackBidder {
    fn bid(&mut self, _ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        let m = self.multiplier;
        bids.extend(auctions.iter().map(|a| formulas::bid_linear(m, a.ctr, a.cvr, self.target)));
    }

    fn observe(&mut self, ctx: &TimestepContext, feedback: &TimestepFeedback) {
        let tracker = self.tracker.get_or_insert_with(|| PacingTracker::new(ctx.initial_budget, ctx.total_timesteps));
        let errors = tracker.observe(feedback.timestep, feedback.balance);
        self.apply(&errors);
    }
}

/// PID and MPID over the duals of the optimal bid formula. `p` follows the
/// budget trajectory, `q` the running eCPC against the CPC bound.
#[derive(Clone, Debug)]
pub struct PidBidder {
    budget_gains: PidGains,
    ecpc_gains: PidGains,
    mixing: Option<(f64, f64)>,
    target: TargetMetric,
    p: f64,
    q: f64,
    pacing: Option<PacingTracker>,
    ecpc: Option<EcpcTracker>,
}

impl PidBidder {
    pub fn new(
        budget_gains: PidGains,
        ecpc_gains: PidGains,
        p0: f64,
        q0: f64,
        mixing: Option<(f64, f64)>,
        target: TargetMetric,
    ) -> Result<Self> {
        if !(p0 > 0.0 && q0 > 0.0 && p0.is_finite() && q0.is_finite()) {
            return Err(ArenaError::config(format!("pid: p0 and q0 must be > 0, got p0={p0}, q0={q0}")));
        }
        Ok(Self { budget_gains, ecpc_gains, mixing, target, p: p0, q: q0, pacing: None, ecpc: None })
    }

    pub fn duals(&self) -> (f64, f64) {
        (self.p, self.q)
    }

    /// Control signals for one timestep, after cross-coupling when enabled.
    pub fn signals(&self, budget: &ErrorTerms, ecpc: &ErrorTerms) -> (f64, f64) {
        let phi_p = self.budget_gains.signal(budget);
        let phi_q = self.ecpc_gains.signal(ecpc);
        match self.mixing {
            Some((gamma_p, gamma_q)) => formulas::mpid_mix(gamma_p, gamma_q, phi_p, phi_q),
            None => (phi_p, phi_q),
        }
    }

    pub fn apply(&mut self, budget: &ErrorTerms, ecpc: &ErrorTerms) {
        let (phi_p, phi_q) = self.signals(budget, ecpc);
        (self.p, self.q) = pid_actuate(self.p, self.q, phi_p, phi_q);
    }
}

impl Bidder for PidBidder {
    fn bid(&mut self, ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        let (p, q) = (self.p, self.q);
        bids.extend(auctions.iter().map(|a| formulas::bid_opt(p, q, a.ctr, a.cvr, self.target, ctx.cpc_bound)));
    }

    fn observe(&mut self, ctx: &TimestepContext, feedback: &TimestepFeedback) {
        let pacing = self.pacing.get_or_insert_with(|| PacingTracker::new(ctx.initial_budget, ctx.total_timesteps));
        let budget = pacing.observe(feedback.timestep, feedback.balance);
        let ecpc = self.ecpc.get_or_insert_with(|| EcpcTracker::new(ctx.cpc_bound)).observe(feedback.cost, feedback.clicks);
        self.apply(&budget, &ecpc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn terms(error: f64, integral: f64, gap: f64) -> ErrorTerms {
        ErrorTerms { error, integral, gap }
    }

    #[test]
    fn tracker_on_linear_spend_is_quiet() {
        let mut t = PacingTracker::new(10_000.0, 48);
        for step in 1..=48 {
            let balance = target_balance(10_000.0, step, 48);
            let e = t.observe(step, balance);
            assert!(e.is_zero(), "{step}: {e:?}");
        }
    }

    #[test]
    fn tracker_gap_matches_definition() {
        let mut t = PacingTracker::new(100.0, 4);
        // Targets 75, 50, 25, 0.
        let e1 = t.observe(1, 90.0);
        assert_eq!(e1, terms(-15.0, -15.0, -10.0 + 25.0));
        let e2 = t.observe(2, 40.0);
        assert_eq!(e2, terms(10.0, -5.0, -50.0 + 25.0));
    }

    #[test]
    fn fb_examples() {
        let zero = PidGains::new(0.0, 0.0, 0.0);
        assert_eq!(fb_step(1.7, &zero, &terms(3.0, 4.0, 5.0)).0, 1.7);
        let (m, _) = fb_step(1.0, &PidGains::new(1.0, 0.0, 0.0), &terms(0.1, 0.1, 0.0));
        assert!((m - 1.105_170_918_075_647_6).abs() < 1e-12);
        let (m, _) = fb_step(2.0, &PidGains::new(3.0, -1.0, 2.0), &ErrorTerms::default());
        assert_eq!(m, 2.0);
    }

    #[test]
    fn fb_clamps_exponent() {
        let (m, _) = fb_step(1.0, &PidGains::new(1.0, 0.0, 0.0), &terms(1e6, 0.0, 0.0));
        assert!((m - 5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn fbwl_examples() {
        assert_eq!(fbwl_step(0.4, 0.0, 123.0), 0.4);
        let phi = fbwl_step(fbwl_step(0.0, 1.0, 0.1), 1.0, 0.2);
        assert!((phi - 0.3).abs() < 1e-15);
        assert_eq!(fbwl_step(0.4, 2.0, 0.0), 0.4);
    }

    #[test]
    fn mystique_examples() {
        assert_eq!(mystique_step(0.2, 0.0, 0.0, 5.0, 5.0), 0.2);
        assert!((mystique_step(0.2, 1.0, 0.0, 0.05, 9.0) - 0.25).abs() < 1e-15);
        assert_eq!(mystique_step(0.2, 3.0, 4.0, 0.0, 0.0), 0.2);
    }

    #[test]
    fn pid_examples() {
        let mut b =
            PidBidder::new(PidGains::new(1.0, 1.0, 1.0), PidGains::new(1.0, 1.0, 1.0), 0.5, 2.0, None, TargetMetric::Clicks).unwrap();
        b.apply(&ErrorTerms::default(), &ErrorTerms::default());
        assert_eq!(b.duals(), (0.5, 2.0));

        let zero = PidGains::new(0.0, 0.0, 0.0);
        let mut b = PidBidder::new(zero, zero, 0.5, 2.0, None, TargetMetric::Clicks).unwrap();
        b.apply(&terms(3.0, 1.0, 2.0), &terms(-1.0, 0.5, 0.1));
        assert_eq!(b.duals(), (0.5, 2.0));

        let (p, q) = pid_actuate(1.0, 1.0, 0.1, 0.0);
        assert!((p - 1.105_170_918_075_647_6).abs() < 1e-12);
        assert_eq!(q, 1.0);

        assert!(PidBidder::new(zero, zero, 0.0, 1.0, None, TargetMetric::Clicks).is_err());
        assert!(PidBidder::new(zero, zero, 1.0, -1.0, None, TargetMetric::Clicks).is_err());
    }

    #[test]
    fn mpid_identity_matches_pid() {
        let g1 = PidGains::new(1e-3, 1e-5, -2e-3);
        let g2 = PidGains::new(-0.4, 0.01, 0.2);
        let pid = PidBidder::new(g1, g2, 0.3, 0.7, None, TargetMetric::Clicks).unwrap();
        let mpid = PidBidder::new(g1, g2, 0.3, 0.7, Some((1.0, 1.0)), TargetMetric::Clicks).unwrap();
        let (b, e) = (terms(120.0, 300.0, -40.0), terms(-0.1, -0.3, 0.05));
        let (a1, a2) = pid.signals(&b, &e);
        let (m1, m2) = mpid.signals(&b, &e);
        assert_eq!((a1.to_bits(), a2.to_bits()), (m1.to_bits(), m2.to_bits()));
    }

    #[test]
    fn ecpc_tracker() {
        let mut t = EcpcTracker::new(0.5);
        assert_eq!(t.observe(1.0, 0), ErrorTerms::default());
        let e = t.observe(1.0, 4);
        assert_eq!(e, terms(0.0, 0.0, 0.0));
        let e = t.observe(3.0, 0);
        assert_eq!(e, terms(-0.75, -0.75, 0.75));
    }

    proptest! {
        #[test]
        fn duals_stay_positive(
            gains in proptest::array::uniform3(-1e3f64..1e3),
            errors in proptest::collection::vec(proptest::array::uniform3(-1e4f64..1e4), 1..100),
            gamma in proptest::array::uniform2(-2.0f64..2.0),
        ) {
            let g = PidGains::new(gains[0], gains[1], gains[2]);
            let mut b = PidBidder::new(g, g, 1.0, 1.0, Some((gamma[0], gamma[1])), TargetMetric::Clicks).unwrap();
            for e in &errors {
                let t = terms(e[0], e[1], e[2]);
                b.apply(&t, &t);
                let (p, q) = b.duals();
                prop_assert!(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite());
            }
        }

        #[test]
        fn zero_error_is_quiescent(
            gains in proptest::array::uniform3(-10.0f64..10.0),
            phi0 in -3.0f64..3.0,
            steps in 1usize..60,
        ) {
            let laws = [
                FeedbackLaw::Fb { lambda1: gains[0], lambda2: gains[1], lambda3: gains[2] },
                FeedbackLaw::FbWl { lambda4: gains[0] },
                FeedbackLaw::Mystique { w_s: gains[1], w_g: gains[2] },
            ];
            for law in laws {
                let mut b = FeedbackBidder::new(law, phi0, TargetMetric::Clicks);
                let start = b.multiplier();
                for _ in 0..steps {
                    b.apply(&ErrorTerms::default());
                }
                prop_assert_eq!(b.multiplier(), start);
            }
        }
    }
}
