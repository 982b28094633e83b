//! Act-then-measure: always play the always-sense action, but skip the
//! measurement when one blind step followed by always-sensing is cheaper
//! than sensing now.

use rayon::prelude::*;

use crate::belief::{as_gap, normalize, pi_as, SensingCostModel};
use crate::error::{Error, Result};
use crate::mdp::BaselineMdp;
use crate::policy::{Plan, SensingPolicy};
use crate::problem::SensingProblem;

pub const DEFAULT_DEPTH_CAP: usize = 500;

/// The decision rule needs a single `k`; the terminal-free model decides
/// with its nominal value.
fn uniform_k(cost: &SensingCostModel) -> Result<f64> {
    cost.nominal_k().ok_or(Error::UnsupportedClosedForm)
}

/// Decision at one belief: the always-sense action and whether to play it
/// blind. Blind exactly when `α (V_AS(B T(a)) - B T(a) V*) < k/(1-α)`.
pub fn atm_decide(problem: &SensingProblem, belief: &[f64]) -> Result<(usize, bool)> {
    let k = uniform_k(&problem.cost)?;
    let alpha = problem.discount();
    let a = pi_as(belief, &problem.baseline);
    let mut next = problem.mdp.propagate(belief, a);
    normalize(&mut next);
    let tail = k / (1.0 - alpha);
    let lhs = alpha * (as_gap(&next, &problem.baseline) + tail);
    Ok((a, lhs < tail))
}

/// The two action values compared by the decision, computed directly:
/// `(Q_AS(B, (a, blind)), Q_AS(B, (a, sense)))`.
pub fn atm_q_values(problem: &SensingProblem, belief: &[f64], a: usize) -> Result<(f64, f64)> {
    let k = uniform_k(&problem.cost)?;
    let mdp = &problem.mdp;
    let alpha = mdp.discount();
    let sol = &problem.baseline;
    let tail = k / (1.0 - alpha);
    let mut next = mdp.propagate(belief, a);
    normalize(&mut next);
    let step = mdp.expected_cost(belief, a);
    let next_v: f64 = next.iter().zip(&sol.v_star).map(|(b, v)| b * v).sum();
    let blind = step + alpha * (crate::belief::v_as0(&next, sol) + tail);
    let sense = step + alpha * next_v + tail;
    Ok((blind, sense))
}

#[derive(Debug, Clone)]
pub struct AtmPolicy {
    pub policy: SensingPolicy,
    /// Roots whose blind run was cut off at the depth cap.
    pub capped: Vec<usize>,
    /// Certified bound on the value lost by cutting plans at the cap; zero
    /// when no plan was cut.
    pub error_bound: f64,
}

pub fn atm_policy(problem: &SensingProblem, depth_cap: usize) -> Result<AtmPolicy> {
    let k = uniform_k(&problem.cost)?;
    if depth_cap == 0 {
        return Err(Error::InvalidArgument("depth cap must be at least 1".into()));
    }
    let mdp: &BaselineMdp = &problem.mdp;
    let n = mdp.num_states();
    let plans: Vec<(Plan, bool)> = (0..n)
        .into_par_iter()
        .map(|root| -> Result<(Plan, bool)> {
            let mut belief = vec![0.0; n];
            belief[root] = 1.0;
            let mut prefix = Vec::new();
            loop {
                let (a, blind) = atm_decide(problem, &belief)?;
                if !blind {
                    return Ok((Plan { blind_prefix: prefix, sense_action: a }, false));
                }
                if prefix.len() == depth_cap {
                    return Ok((Plan { blind_prefix: prefix, sense_action: a }, true));
                }
                prefix.push(a);
                belief = mdp.propagate(&belief, a);
                normalize(&mut belief);
            }
        })
        .collect::<Result<_>>()?;
    let capped: Vec<usize> = plans.iter().enumerate().filter(|(_, p)| p.1).map(|(s, _)| s).collect();
    let error_bound = if capped.is_empty() {
        0.0
    } else {
        let (lo, hi) = mdp.cost_range();
        let alpha = mdp.discount();
        alpha.powi(depth_cap as i32) * (hi - lo + k) / (1.0 - alpha)
    };
    let policy = SensingPolicy::new(plans.into_iter().map(|p| p.0).collect(), "ATM");
    Ok(AtmPolicy { policy, capped, error_bound })
}
