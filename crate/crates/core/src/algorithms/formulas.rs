//! Closed-form bid and update rules.
//!
//! These are pure functions over already-validated hyperparameters; range
//! checks happen when a bidder is constructed. Every bid is floored at 0.

use super::TargetMetric;

/// Per-step bound on the exponent fed to multiplicative actuators.
pub const MAX_ADJUSTMENT: f64 = 5.0;

/// Value factor: the conversion probability when bidding for conversions,
/// 1 otherwise.
pub fn obj_factor(cvr: f64, target: TargetMetric) -> f64 {
    if target == TargetMetric::Cnv {
        cvr
    } else {
        1.0
    }
}

pub fn bid_linear(alpha: f64, ctr: f64, cvr: f64, target: TargetMetric) -> f64 {
    (alpha * ctr * obj_factor(cvr, target)).max(0.0)
}

/// `b` times the relevant cost bound (CPA for conversions, CPC otherwise).
pub fn bid_costmax(b: f64, target: TargetMetric, cpc_bound: f64, cpa_bound: f64) -> f64 {
    let bound = if target == TargetMetric::Cnv { cpa_bound } else { cpc_bound };
    (b * bound).max(0.0)
}

/// Concave bid from the first win-rate approximation:
/// `√(c/λ · v + c²) − c` with `v = ctr · obj`.
pub fn bid_ortb1(c: f64, lambda: f64, value: f64) -> f64 {
    ((c / lambda * value + c * c).sqrt() - c).max(0.0)
}

/// Bid from the second win-rate approximation:
/// `c (d^{1/3} − (c / (λ d))^{1/3})` with `d = v/λ + √((v/λ)² + c²/λ²)`.
pub fn bid_ortb2(c: f64, lambda: f64, value: f64) -> f64 {
    let r = value / lambda;
    let d = r + (r * r + (c * c) / (lambda * lambda)).sqrt();
    (c * (d.cbrt() - (c / (lambda * d)).cbrt())).max(0.0)
}

/// Dual-optimal bid under budget (`p`) and CPC (`q`) constraints.
pub fn bid_opt(p: f64, q: f64, ctr: f64, cvr: f64, target: TargetMetric, cpc_bound: f64) -> f64 {
    let denom = p + q;
    (ctr / denom * obj_factor(cvr, target) + q * ctr / denom * cpc_bound).max(0.0)
}

pub fn bid_broi(mu: f64, ctr: f64, cvr: f64, target: TargetMetric) -> f64 {
    (ctr * obj_factor(cvr, target) / (1.0 + mu)).max(0.0)
}

/// Budget-smoothed shading: `a · ctr · cvr / (1 + λ)`.
pub fn bid_cb(a_scale: f64, lambda: f64, ctr: f64, cvr: f64) -> f64 {
    (a_scale * ctr * cvr / (1.0 + lambda)).max(0.0)
}

/// Projected dual step on the normalized pacing error:
/// `max(0, μ + η (spend − B/T) / (B/T))`.
pub fn dual_step(mu: f64, eta: f64, spend: f64, per_step_budget: f64) -> f64 {
    if per_step_budget <= 0.0 {
        return mu.max(0.0);
    }
    (mu + eta * (spend - per_step_budget) / per_step_budget).max(0.0)
}

pub fn clamp_adjustment(phi: f64) -> f64 {
    if phi.is_nan() {
        0.0
    } else {
        phi.clamp(-MAX_ADJUSTMENT, MAX_ADJUSTMENT)
    }
}

/// Cross-coupling of the two PID signals:
/// `[[γp, 1 − γp], [1 − γq, γq]] · (φp, φq)`.
pub fn mpid_mix(gamma_p: f64, gamma_q: f64, phi_p: f64, phi_q: f64) -> (f64, f64) {
    (gamma_p * phi_p + (1.0 - gamma_p) * phi_q, (1.0 - gamma_q) * phi_p + gamma_q * phi_q)
}
