//! Deterministic arena for benchmarking classical autobidding algorithms.
//!
//! Sellers bid on their own logged second-price auctions. The environment
//! resolves each bid against the logged winning price, samples clicks and
//! conversions, and enforces the budget as a hard constraint. Everything is a
//! pure function of the input data and a master seed.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: dataset ingestion, synthesis and pValue decomposition.
//! - [`env`]: the seller/environment loop and episode traces.
//! - [`algorithms`]: every built-in bidder behind the [`Bidder`] trait.
//! - [`external`]: the NDJSON protocol for bidders living in another process.
//! - [`metrics`]: the seven benchmark metrics.
//! - [`tuning`]: hyperparameter search on period 1 with validation on period 2.
//! - [`arena`]: the configuration surface tying the above together.

// `!(x >= 0.0)` rejects NaN alongside negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod arena;
pub mod data;
pub mod env;
pub mod error;
pub mod external;
pub mod metrics;
pub mod rng;
pub mod tuning;

pub use algorithms::{AlgorithmKind, AlgorithmSpec, Bidder, TargetMetric};
pub use arena::{Arena, ArenaConfig, DataSource, Roster};
pub use data::{Dataset, ImpressionOpportunity, SyntheticConfig};
pub use env::{AuctionOutcome, EpisodeTrace, SellerConfig};
pub use error::{ArenaError, Result};
pub use metrics::{MetricsReport, Report};
pub use tuning::{SearchSpace, TuningResult};

/// Number of sellers in the reference environment.
pub const DEFAULT_SELLERS: u32 = 48;
/// Number of timesteps per period in the reference environment.
pub const DEFAULT_TIMESTEPS: u32 = 48;
/// Starting budget of every seller.
pub const DEFAULT_BUDGET: f64 = 10_000.0;
/// Upper bound on the cost per click.
pub const DEFAULT_CPC: f64 = 0.5;
/// Upper bound on the cost per conversion.
pub const DEFAULT_CPA: f64 = 0.05;
