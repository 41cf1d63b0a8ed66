//! Hyperparameter search spaces.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    #[default]
    Grid,
    Random,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
    /// Log-spaced magnitudes mirrored around zero, zero included: `count`
    /// positive values, their negatives and 0.
    Symlog,
}

/// Values of one hyperparameter: an explicit list or a spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValues {
    List(Vec<f64>),
    Range {
        low: f64,
        high: f64,
        count: usize,
        #[serde(default)]
        scale: Scale,
    },
}

impl ParamValues {
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: &str| Err(ArenaError::config(format!("search space `{name}`: {what}")));
        match *self {
            ParamValues::List(ref v) if v.is_empty() => bad("empty value list"),
            ParamValues::List(ref v) if v.iter().any(|x| !x.is_finite()) => bad("values must be finite"),
            ParamValues::List(_) => Ok(()),
            ParamValues::Range { low, high, count, scale } => {
                if count == 0 {
                    return bad("count must be >= 1");
                }
                if !(low.is_finite() && high.is_finite()) {
                    return bad("bounds must be finite");
                }
                if count > 1 && !(low < high) {
                    return bad("low must be < high");
                }
                if count == 1 && low > high {
                    return bad("low must be <= high");
                }
                if scale != Scale::Linear && !(low > 0.0) {
                    return bad("log ranges need low > 0");
                }
                Ok(())
            }
        }
    }

    /// The discrete grid, ascending for ranges.
    pub fn grid(&self) -> Vec<f64> {
        match *self {
            ParamValues::List(ref v) => v.clone(),
            ParamValues::Range { low, high, count, scale } => {
                let spaced = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
                    if count == 1 {
                        return vec![low];
                    }
                    (0..count).map(|i| f(i as f64 / (count - 1) as f64)).collect()
                };
                let linear = |u: f64| if u == 1.0 { high } else { low + (high - low) * u };
                let log = |u: f64| if u == 1.0 { high } else { (low.ln() + (high.ln() - low.ln()) * u).exp() };
                match scale {
                    Scale::Linear => spaced(&linear),
                    Scale::Log => spaced(&log),
                    Scale::Symlog => {
                        let pos = spaced(&log);
                        pos.iter().rev().map(|x| -x).chain([0.0]).chain(pos.iter().copied()).collect()
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    #[serde(default)]
    pub kind: SearchKind,
    /// Maximum number of evaluations. Defaults to the full grid for grid
    /// search; required for random search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValues>,
}

pub type Point = BTreeMap<String, f64>;

impl SearchSpace {
    pub fn grid(params: impl IntoIterator<Item = (&'static str, ParamValues)>) -> Self {
        Self { kind: SearchKind::Grid, budget: None, params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }

    pub fn single(point: &Point) -> Self {
        Self { kind: SearchKind::Grid, budget: None, params: point.iter().map(|(k, &v)| (k.clone(), ParamValues::List(vec![v]))).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in &self.params {
            values.validate(name)?;
        }
        match (self.kind, self.budget) {
            (_, Some(0)) => Err(ArenaError::config("search space: evaluation budget is 0")),
            (SearchKind::Random, None) => Err(ArenaError::config("search space: random search needs a budget")),
            _ => Ok(()),
        }
    }

    /// Number of points in the full cartesian grid.
    pub fn grid_size(&self) -> usize {
        self.params.values().map(|v| v.grid().len()).fold(1usize, usize::saturating_mul)
    }

    /// The candidates to evaluate, in evaluation order.
    ///
    /// Grid search enumerates the cartesian product with the last parameter
    /// (in name order) varying fastest. A grid larger than the budget is
    /// thinned to a seeded uniform subset, kept in grid order. Random search
    /// draws `budget` points, each coordinate uniformly from its grid.
    pub fn candidates(&self, seed: u64) -> Result<Vec<Point>> {
        self.validate()?;
        let names: Vec<&String> = self.params.keys().collect();
        let grids: Vec<Vec<f64>> = self.params.values().map(ParamValues::grid).collect();
        let point_at = |mut idx: usize| -> Point {
            let mut p = Point::new();
            for (name, grid) in names.iter().zip(&grids).rev() {
                p.insert((*name).clone(), grid[idx % grid.len()]);
                idx /= grid.len();
            }
            p
        };
        let mut rng = rng::stream(seed, Purpose::Search, 0, 0);
        match self.kind {
            SearchKind::Grid => {
                let size = self.grid_size();
                let budget = self.budget.unwrap_or(size);
                if size <= budget {
                    return Ok((0..size).map(point_at).collect());
                }
                log::warn!("grid of {size} points exceeds the budget of {budget}; sampling a subset");
                let mut picked = rand::seq::index::sample(&mut rng, size, budget).into_vec();
                picked.sort_unstable();
                Ok(picked.into_iter().map(point_at).collect())
            }
            SearchKind::Random => {
                let budget = self.budget.expect("validated");
                Ok((0..budget)
                    .map(|_| names.iter().zip(&grids).map(|(n, g)| ((*n).clone(), g[rng.random_range(0..g.len())])).collect())
                    .collect())
            }
        }
    }
}
