//! Built-in bidding algorithms.
//!
//! Every algorithm is driven through [`Bidder`]: once per timestep it turns
//! the seller's `(ctr, cvr)` pairs into bids, and after the auctions resolve
//! it observes the timestep's aggregate outcome. Stateless heuristics ignore
//! the observation; dual-variable and controller methods use it to adapt.

mod controller;
mod dual;
pub mod formulas;
mod heuristic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::external::{ExternalBidder, ExternalSpec};

pub use controller::{FeedbackBidder, FeedbackLaw, PacingTracker, PidBidder, PidGains};
pub use dual::DualPacingBidder;
pub use heuristic::{ConstantBidder, CostMaxBidder, LinearBidder, OptBidder, OrtbBidder, OrtbVariant, RandomBidder};

/// The metric a run is tuned for. It also picks the value factor used by
/// value-proportional formulas (see [`formulas::obj_factor`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMetric {
    Awr,
    Clicks,
    Cnv,
    Rmse,
}

impl TargetMetric {
    pub const ALL: [TargetMetric; 4] = [Self::Awr, Self::Clicks, Self::Cnv, Self::Rmse];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Awr => "awr",
            Self::Clicks => "clicks",
            Self::Cnv => "cnv",
            Self::Rmse => "rmse",
        }
    }

    /// RMSE is a pacing error; the rest are volumes.
    pub fn minimize(self) -> bool {
        self == Self::Rmse
    }
}

impl fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetMetric {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awr" => Ok(Self::Awr),
            "clicks" => Ok(Self::Clicks),
            "cnv" | "conversions" => Ok(Self::Cnv),
            "rmse" => Ok(Self::Rmse),
            other => Err(ArenaError::config(format!("unknown target metric `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Constant,
    Random,
    Linear,
    CostMax,
    Ortb1,
    Ortb2,
    Opt,
    Broi,
    Cb,
    Fb,
    FbWl,
    Mystique,
    Pid,
    Mpid,
    External,
}

impl AlgorithmKind {
    pub const BUILTIN: [AlgorithmKind; 14] = [
        Self::Constant,
        Self::Random,
        Self::Linear,
        Self::CostMax,
        Self::Ortb1,
        Self::Ortb2,
        Self::Opt,
        Self::Broi,
        Self::Cb,
        Self::Fb,
        Self::FbWl,
        Self::Mystique,
        Self::Pid,
        Self::Mpid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Random => "random",
            Self::Linear => "linear",
            Self::CostMax => "costmax",
            Self::Ortb1 => "ortb1",
            Self::Ortb2 => "ortb2",
            Self::Opt => "opt",
            Self::Broi => "broi",
            Self::Cb => "cb",
            Self::Fb => "fb",
            Self::FbWl => "fbwl",
            Self::Mystique => "mystique",
            Self::Pid => "pid",
            Self::Mpid => "mpid",
            Self::External => "external",
        }
    }

    pub fn required_hyperparameters(self) -> &'static [&'static str] {
        match self {
            Self::Constant => &["bid0"],
            Self::Random | Self::External => &[],
            Self::Linear => &["alpha"],
            Self::CostMax => &["b"],
            Self::Ortb1 | Self::Ortb2 => &["c", "lambda"],
            Self::Opt => &["p", "q"],
            Self::Broi => &["eta", "mu0"],
            Self::Cb => &["a_scale", "eta", "lambda0"],
            Self::Fb => &["lambda1", "lambda2", "lambda3"],
            Self::FbWl => &["lambda4"],
            Self::Mystique => &["w_g", "w_s"],
            Self::Pid => &["kd_p", "kd_q", "ki_p", "ki_q", "kp_p", "kp_q", "p0", "q0"],
            Self::Mpid => &["gamma_p", "gamma_q", "kd_p", "kd_q", "ki_p", "ki_q", "kp_p", "kp_q", "p0", "q0"],
        }
    }

    /// Hyperparameters with a default when absent.
    pub fn optional_hyperparameters(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Fb | Self::FbWl | Self::Mystique => &[("phi0", 0.0)],
            _ => &[],
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmKind {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::BUILTIN
            .iter()
            .chain(std::iter::once(&Self::External))
            .copied()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| ArenaError::config(format!("unknown algorithm `{s}`")))
    }
}

/// An algorithm, its hyperparameters and the metric it is run for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    pub target_metric: TargetMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalSpec>,
}

impl AlgorithmSpec {
    pub fn new(kind: AlgorithmKind, target_metric: TargetMetric) -> Self {
        Self { kind, hyperparameters: BTreeMap::new(), target_metric, external: None }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        let required = kind.required_hyperparameters();
        let optional = kind.optional_hyperparameters();
        for name in required {
            if !self.hyperparameters.contains_key(*name) {
                return Err(ArenaError::config(format!("{kind}: missing hyperparameter `{name}`")));
            }
        }
        for (name, value) in &self.hyperparameters {
            let known = required.contains(&name.as_str()) || optional.iter().any(|(n, _)| n == name);
            if !known {
                return Err(ArenaError::config(format!("{kind}: unknown hyperparameter `{name}`")));
            }
            if !value.is_finite() {
                return Err(ArenaError::config(format!("{kind}: `{name}` must be finite, got {value}")));
            }
        }
        let h = |n: &str| self.get(n);
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ArenaError::config(format!("{kind}: {what}")))
            }
        };
        match kind {
            AlgorithmKind::Constant => need(h("bid0") >= 0.0, "bid0 must be >= 0"),
            AlgorithmKind::Linear => need(h("alpha") >= 0.0, "alpha must be >= 0"),
            AlgorithmKind::CostMax => need(h("b") >= 0.0, "b must be >= 0"),
            AlgorithmKind::Ortb1 | AlgorithmKind::Ortb2 => need(h("c") > 0.0 && h("lambda") > 0.0, "c and lambda must be > 0"),
            AlgorithmKind::Opt => need(h("p") >= 0.0 && h("q") >= 0.0 && h("p") + h("q") > 0.0, "p, q must be >= 0 with p + q > 0"),
            AlgorithmKind::Broi => {
                need(h("eta") >= 0.0, "eta must be >= 0")?;
                need(1.0 + h("mu0") > 0.0, "1 + mu0 must be > 0")
            }
            AlgorithmKind::Cb => {
                need(h("eta") >= 0.0, "eta must be >= 0")?;
                need(h("a_scale") >= 0.0, "a_scale must be >= 0")?;
                need(1.0 + h("lambda0") > 0.0, "1 + lambda0 must be > 0")
            }
            AlgorithmKind::Pid | AlgorithmKind::Mpid => need(h("p0") > 0.0 && h("q0") > 0.0, "p0 and q0 must be > 0"),
            AlgorithmKind::External => need(self.external.is_some(), "missing `external` settings"),
            _ => Ok(()),
        }
    }

    /// Hyperparameter value, falling back to the kind's default for optional
    /// ones. NaN when neither exists.
    pub fn get(&self, name: &str) -> f64 {
        self.hyperparameters
            .get(name)
            .copied()
            .unwrap_or_else(|| self.kind.optional_hyperparameters().iter().find(|(n, _)| *n == name).map_or(f64::NAN, |(_, v)| *v))
    }

    pub fn build(&self, ctx: &BidderContext) -> Result<Box<dyn Bidder>> {
        self.validate()?;
        let target = self.target_metric;
        let h = |n: &str| self.get(n);
        let bidder: Box<dyn Bidder> = match self.kind {
            AlgorithmKind::Constant => Box::new(ConstantBidder::new(h("bid0"))?),
            AlgorithmKind::Random => {
                let (lo, hi) = ctx.history_bounds.unwrap_or((0.0, ctx.cpc_bound));
                Box::new(RandomBidder::new(lo, hi, ctx.stream_seed())?)
            }
            AlgorithmKind::Linear => Box::new(LinearBidder::new(h("alpha"), target)),
            AlgorithmKind::CostMax => Box::new(CostMaxBidder::new(h("b"), target)),
            AlgorithmKind::Ortb1 => Box::new(OrtbBidder::new(OrtbVariant::First, h("c"), h("lambda"), target)?),
            AlgorithmKind::Ortb2 => Box::new(OrtbBidder::new(OrtbVariant::Second, h("c"), h("lambda"), target)?),
            AlgorithmKind::Opt => Box::new(OptBidder::new(h("p"), h("q"), target)?),
            AlgorithmKind::Broi => Box::new(DualPacingBidder::broi(h("mu0"), h("eta"), target)?),
            AlgorithmKind::Cb => Box::new(DualPacingBidder::cb(h("a_scale"), h("lambda0"), h("eta"))?),
            AlgorithmKind::Fb => Box::new(FeedbackBidder::new(
                FeedbackLaw::Fb { lambda1: h("lambda1"), lambda2: h("lambda2"), lambda3: h("lambda3") },
                h("phi0"),
                target,
            )),
            AlgorithmKind::FbWl => Box::new(FeedbackBidder::new(FeedbackLaw::FbWl { lambda4: h("lambda4") }, h("phi0"), target)),
            AlgorithmKind::Mystique => {
                Box::new(FeedbackBidder::new(FeedbackLaw::Mystique { w_s: h("w_s"), w_g: h("w_g") }, h("phi0"), target))
            }
            AlgorithmKind::Pid | AlgorithmKind::Mpid => {
                let budget = PidGains::new(h("kp_p"), h("ki_p"), h("kd_p"));
                let ecpc = PidGains::new(h("kp_q"), h("ki_q"), h("kd_q"));
                let mixing = (self.kind == AlgorithmKind::Mpid).then(|| (h("gamma_p"), h("gamma_q")));
                Box::new(PidBidder::new(budget, ecpc, h("p0"), h("q0"), mixing, target)?)
            }
            AlgorithmKind::External => {
                let spec = self.external.as_ref().expect("validated");
                Box::new(ExternalBidder::connect(spec, ctx)?)
            }
        };
        Ok(bidder)
    }
}

/// Seller-level information available when an algorithm is instantiated.
#[derive(Clone, Debug, PartialEq)]
pub struct BidderContext {
    pub seller_id: u32,
    pub period: u8,
    pub seed: u64,
    pub initial_budget: f64,
    pub cpc_bound: f64,
    pub cpa_bound: f64,
    pub total_timesteps: u32,
    /// Min and max logged winning price of this seller in the tuning period.
    pub history_bounds: Option<(f64, f64)>,
}

impl BidderContext {
    fn stream_seed(&self) -> u64 {
        crate::rng::stream_seed(self.seed, crate::rng::Purpose::Bids, u32::from(self.period), u64::from(self.seller_id))
    }
}

/// What a bidder sees at the start of a timestep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimestepContext {
    pub seller_id: u32,
    pub timestep: u32,
    pub total_timesteps: u32,
    pub remaining_budget: f64,
    pub initial_budget: f64,
    pub cpc_bound: f64,
    pub cpa_bound: f64,
}

/// One auction as exposed to the bidder. The winning price is withheld.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuctionView {
    pub auction_id: u32,
    pub ctr: f64,
    pub cvr: f64,
}

/// Aggregate outcome of one timestep, reported after resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimestepFeedback {
    pub timestep: u32,
    pub auctions: u32,
    pub wins: u32,
    pub cost: f64,
    pub clicks: u32,
    pub conversions: u32,
    /// Remaining budget at the end of the timestep.
    pub balance: f64,
}

pub trait Bidder: Send {
    /// Pushes exactly one bid per auction, in order, onto `bids` (which the
    /// caller has cleared).
    fn bid(&mut self, ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>);

    fn observe(&mut self, _ctx: &TimestepContext, _feedback: &TimestepFeedback) {}

    /// Count of failures talking to an out-of-process bidder.
    fn incidents(&self) -> u64 {
        0
    }
}
