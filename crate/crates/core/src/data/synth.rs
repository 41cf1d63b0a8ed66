//! Synthetic datasets with the same schema as the logged one.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, ImpressionOpportunity};
use crate::error::{ArenaError, Result};
use crate::rng::{self, Purpose};

const P_VALUE_MIN: f64 = 1e-4;
const P_VALUE_MAX: f64 = 0.5;
const WINNING_PRICE_FLOOR: f64 = 0.001;

fn default_count() -> u32 {
    crate::DEFAULT_SELLERS
}
fn default_auctions() -> u32 {
    500
}
fn default_p_log_mean() -> f64 {
    0.01f64.ln()
}
fn default_p_log_sigma() -> f64 {
    1.0
}
fn default_wp_log_mean() -> f64 {
    0.2f64.ln()
}
fn default_wp_log_sigma() -> f64 {
    0.7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_count")]
    pub n_sellers: u32,
    #[serde(default = "default_count")]
    pub n_timesteps: u32,
    #[serde(default = "default_auctions")]
    pub auctions_per_seller_timestep: u32,
    #[serde(default = "default_p_log_mean")]
    pub p_value_log_mean: f64,
    #[serde(default = "default_p_log_sigma")]
    pub p_value_log_sigma: f64,
    #[serde(default = "default_wp_log_mean")]
    pub winning_price_log_mean: f64,
    #[serde(default = "default_wp_log_sigma")]
    pub winning_price_log_sigma: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n_sellers: u32, n_timesteps: u32, auctions_per_seller_timestep: u32, seed: u64) -> Self {
        Self {
            n_sellers,
            n_timesteps,
            auctions_per_seller_timestep,
            p_value_log_mean: default_p_log_mean(),
            p_value_log_sigma: default_p_log_sigma(),
            winning_price_log_mean: default_wp_log_mean(),
            winning_price_log_sigma: default_wp_log_sigma(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sellers == 0 || self.n_timesteps == 0 || self.auctions_per_seller_timestep == 0 {
            return Err(ArenaError::config("synthetic counts must all be >= 1"));
        }
        let finite = [self.p_value_log_mean, self.winning_price_log_mean].iter().all(|v| v.is_finite());
        let sigmas_ok = [self.p_value_log_sigma, self.winning_price_log_sigma].iter().all(|s| s.is_finite() && *s >= 0.0);
        if !finite || !sigmas_ok {
            return Err(ArenaError::config("synthetic log-means must be finite and sigmas >= 0"));
        }
        Ok(())
    }

    /// Rows in canonical order with only the logged columns filled;
    /// `ctr`/`cvr` are NaN until [`Dataset::decompose`] runs.
    pub fn generate_logged(&self) -> Result<Dataset> {
        self.validate()?;
        let p_lo = P_VALUE_MIN.next_up();
        let p_hi = P_VALUE_MAX.next_down();
        let per_seller = self.n_timesteps as usize * self.auctions_per_seller_timestep as usize;
        let blocks: Vec<(u8, u32)> = (1..=2u8).flat_map(|period| (1..=self.n_sellers).map(move |s| (period, s))).collect();

        let rows: Vec<ImpressionOpportunity> = blocks
            .par_iter()
            .flat_map_iter(|&(period, seller_id)| {
                let mut rng = rng::stream(self.seed, Purpose::Synthesis, u32::from(period), u64::from(seller_id));
                let mut out = Vec::with_capacity(per_seller);
                for timestep in 1..=self.n_timesteps {
                    for auction_id in 0..self.auctions_per_seller_timestep {
                        let zp: f64 = rng.sample(StandardNormal);
                        let zw: f64 = rng.sample(StandardNormal);
                        let p_value = (self.p_value_log_mean + self.p_value_log_sigma * zp).exp().clamp(p_lo, p_hi);
                        let winning_price =
                            (self.winning_price_log_mean + self.winning_price_log_sigma * zw).exp().max(WINNING_PRICE_FLOOR);
                        out.push(ImpressionOpportunity {
                            period,
                            timestep,
                            seller_id,
                            auction_id,
                            p_value,
                            winning_price,
                            ctr: f64::NAN,
                            cvr: f64::NAN,
                        });
                    }
                }
                out
            })
            .collect();
        // Already canonical: blocks are (period, seller) in order.
        Ok(Dataset { rows })
    }
}

/// Two periods of `n_sellers × n_timesteps × auctions_per_seller_timestep`
/// rows, decomposed with the config's own seed.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    let mut ds = config.generate_logged()?;
    ds.decompose(config.seed)?;
    Ok(ds)
}
