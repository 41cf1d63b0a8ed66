//! Default search spaces shipped for every built-in algorithm.
//!
//! Currency-scaled gains are sized for budgets of the reference magnitude
//! (B = 10000 per seller, errors measured in currency units).

use super::space::{ParamValues, Scale, SearchSpace};
use crate::algorithms::AlgorithmKind;

fn log(low: f64, high: f64, count: usize) -> ParamValues {
    ParamValues::Range { low, high, count, scale: Scale::Log }
}

fn symlog(low: f64, high: f64, count: usize) -> ParamValues {
    ParamValues::Range { low, high, count, scale: Scale::Symlog }
}

fn list(values: &[f64]) -> ParamValues {
    ParamValues::List(values.to_vec())
}

/// The default space for `kind`. External bidders have none.
pub fn default_for(kind: AlgorithmKind) -> Option<SearchSpace> {
    use AlgorithmKind as K;
    let space = match kind {
        K::Constant => SearchSpace::grid([("bid0", log(0.01, 10.0, 31))]),
        K::Random => SearchSpace::grid([]),
        K::Linear => SearchSpace::grid([("alpha", log(0.01, 1e4, 49))]),
        K::CostMax => SearchSpace::grid([("b", log(0.01, 100.0, 25))]),
        K::Ortb1 | K::Ortb2 => SearchSpace::grid([("c", log(1e-3, 10.0, 9)), ("lambda", log(1e-4, 1.0, 9))]),
        K::Opt => SearchSpace::grid([("p", log(1e-4, 100.0, 25)), ("q", list(&[0.0, 0.01, 0.1, 1.0, 10.0]))]),
        K::Broi => SearchSpace::grid([("eta", list(&[0.0, 0.001, 0.01, 0.1, 1.0])), ("mu0", list(&[-0.99, -0.9, -0.5, 0.0, 1.0, 10.0]))]),
        K::Cb => SearchSpace::grid([("a_scale", log(0.1, 1e4, 11)), ("eta", list(&[0.0, 0.01, 0.1, 1.0])), ("lambda0", list(&[0.0, 1.0]))]),
        K::Fb => SearchSpace::grid([
            ("lambda1", symlog(1e-4, 1e-2, 2)),
            ("lambda2", symlog(1e-5, 1e-5, 1)),
            ("lambda3", symlog(1e-3, 1e-3, 1)),
            ("phi0", list(&[0.0, 2.0])),
        ]),
        K::FbWl => SearchSpace::grid([("lambda4", symlog(1e-5, 1e-2, 4)), ("phi0", list(&[0.0, 1.0, 2.0, 3.0, 4.0]))]),
        K::Mystique => {
            SearchSpace::grid([("w_s", symlog(1e-5, 1e-2, 4)), ("w_g", symlog(1e-4, 1e-2, 3)), ("phi0", list(&[0.0, 2.0, 4.0]))])
        }
        K::Pid => SearchSpace::grid(pid_params(&[("ki_p", symlog(1e-6, 1e-6, 1))])),
        K::Mpid => SearchSpace::grid(pid_params(&[("ki_p", list(&[0.0])), ("gamma_p", list(&[0.9, 1.0])), ("gamma_q", list(&[0.9, 1.0]))])),
        K::External => return None,
    };
    Some(space)
}

/// Gains shared by PID and MPID, plus `extra` entries.
fn pid_params(extra: &[(&'static str, ParamValues)]) -> Vec<(&'static str, ParamValues)> {
    let mut params = vec![
        ("kp_p", symlog(1e-4, 1e-2, 3)),
        ("kd_p", list(&[0.0])),
        ("kp_q", symlog(1.0, 1.0, 1)),
        ("ki_q", list(&[0.0])),
        ("kd_q", list(&[0.0])),
        ("p0", list(&[0.1, 1.0])),
        ("q0", list(&[1e-3])),
    ];
    params.extend(extra.iter().cloned());
    params
}
