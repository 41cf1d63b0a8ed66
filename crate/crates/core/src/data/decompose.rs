//! Splitting a conversion probability into click and post-click conversion
//! probabilities.
//!
//! With targets `CTR0 = 2a`, `CVR0 = a` and Gaussian perturbations `ε`, `β`,
//! the observed pair is `CTR = 2a − ε`, `CVR = a + β`. Requiring
//! `CTR · CVR = p` gives a quadratic in `a` whose larger root is
//!
//! ```text
//! a = ¼ (ε − 2β + √((ε + 2β)² + 8p))
//! ```
//!
//! Both factors are positive for every finite `ε`, `β` and `p > 0`; the
//! clip to `[CLIP_LOW, CLIP_HIGH]` only guards the extremes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ArenaError, Result};

pub const CLIP_LOW: f64 = 1e-6;
pub const CLIP_HIGH: f64 = 1.0 - 1e-6;

/// One draw of the decomposition before clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionDraw {
    pub a: f64,
    pub epsilon: f64,
    pub beta: f64,
}

impl DecompositionDraw {
    pub fn new(p: f64, epsilon: f64, beta: f64) -> Result<Self> {
        check_probability(p)?;
        if !epsilon.is_finite() || !beta.is_finite() {
            return Err(ArenaError::Domain(format!("perturbations must be finite, got ε={epsilon}, β={beta}")));
        }
        let s = epsilon + 2.0 * beta;
        let a = 0.25 * (epsilon - 2.0 * beta + (s * s + 8.0 * p).sqrt());
        Ok(Self { a, epsilon, beta })
    }

    pub fn ctr(&self) -> f64 {
        2.0 * self.a - self.epsilon
    }

    pub fn cvr(&self) -> f64 {
        self.a + self.beta
    }

    /// True when neither factor is touched by the clip.
    pub fn is_unclipped(&self) -> bool {
        let inside = |v: f64| (CLIP_LOW..=CLIP_HIGH).contains(&v);
        inside(self.ctr()) && inside(self.cvr())
    }

    pub fn clipped(&self) -> (f64, f64) {
        (clip(self.ctr()), clip(self.cvr()))
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(CLIP_LOW, CLIP_HIGH)
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(ArenaError::Domain(format!("p_value must lie in (0, 1), got {p}")))
    }
}

/// Deterministic decomposition for given perturbations. Returns the clipped
/// `(ctr, cvr)` pair.
pub fn decompose_pvalue(p: f64, epsilon: f64, beta: f64) -> Result<(f64, f64)> {
    Ok(DecompositionDraw::new(p, epsilon, beta)?.clipped())
}

/// Draws `ε, β ~ N(0, p/8)` independently and decomposes `p`.
pub fn sample_draw<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<DecompositionDraw> {
    check_probability(p)?;
    let sd = (p / 8.0).sqrt();
    let epsilon = rng.sample::<f64, _>(StandardNormal) * sd;
    let beta = rng.sample::<f64, _>(StandardNormal) * sd;
    DecompositionDraw::new(p, epsilon, beta)
}

pub fn sample_decomposition<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<(f64, f64)> {
    Ok(sample_draw(p, rng)?.clipped())
}
