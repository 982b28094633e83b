//! Selective policy improvement.
//!
//! Starting from a reference policy (normally always-sense), each update
//! walks greedily from every root: at each belief it compares sensing now
//! against one more blind step followed by sensing, both valued against the
//! reference policy's root values. The resulting plan replaces the
//! reference plan at that root only if its exact value there is strictly
//! lower. Updates repeat until the largest root improvement drops to `delta`.

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{normalize, Lookahead};
use crate::error::{Error, Result};
use crate::linalg::argmin;
use crate::policy::{plan_terms, EvalOptions, Plan, RootSystem, SensingPolicy};
use crate::problem::SensingProblem;

/// A candidate must beat the reference value by more than this to be kept.
pub const ACCEPT_MARGIN: f64 = 1e-12;
/// Target precision used to pick a default `maxsteps`.
pub const DEFAULT_PRECISION: f64 = 1e-6;
const MAXSTEPS_CEILING: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct SpiOptions {
    /// Longest blind prefix a plan may get; `None` picks one from the cost.
    pub maxsteps: Option<usize>,
    pub delta: f64,
    /// Hard cap on the number of updates.
    pub max_updates: Option<usize>,
    pub eval: EvalOptions,
}

impl Default for SpiOptions {
    fn default() -> Self {
        SpiOptions { maxsteps: None, delta: 1e-6, max_updates: None, eval: EvalOptions::default() }
    }
}

/// Smallest `m` with `α^m · k < precision / 10`; blind runs longer than that
/// cannot change a value at the requested precision.
pub fn default_maxsteps(alpha: f64, k: f64, precision: f64) -> usize {
    let target = 0.1 * precision;
    if k <= target {
        return 1;
    }
    let m = ((target / k).ln() / alpha.ln()).floor() as usize + 1;
    m.clamp(1, MAXSTEPS_CEILING)
}

fn resolve_maxsteps(problem: &SensingProblem, opts: &SpiOptions) -> usize {
    opts.maxsteps.unwrap_or_else(|| {
        let k = problem.cost.sup().unwrap_or(1.0);
        default_maxsteps(problem.discount(), k, DEFAULT_PRECISION)
    })
}

/// Greedy blind walk from `root` against the lookahead built on the
/// reference values.
pub fn greedy_plan(problem: &SensingProblem, look: &Lookahead, root: usize, maxsteps: usize) -> Plan {
    let mdp = &problem.mdp;
    let alpha = mdp.discount();
    let mut belief = vec![0.0; mdp.num_states()];
    belief[root] = 1.0;
    let mut prefix = Vec::new();
    loop {
        let (sense_value, sense_action) = look.sense(&belief, &problem.cost);
        if prefix.len() >= maxsteps {
            return Plan { blind_prefix: prefix, sense_action };
        }
        let children: Vec<Vec<f64>> = (0..mdp.num_actions())
            .map(|a| {
                let mut next = mdp.propagate(&belief, a);
                normalize(&mut next);
                next
            })
            .collect();
        let (a_blind, v_blind) = argmin(
            children
                .iter()
                .enumerate()
                .map(|(a, next)| mdp.expected_cost(&belief, a) + alpha * look.sense(next, &problem.cost).0),
        );
        if sense_value <= v_blind {
            return Plan { blind_prefix: prefix, sense_action };
        }
        prefix.push(a_blind);
        belief = children.into_iter().nth(a_blind).expect("action in range");
    }
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub policy: SensingPolicy,
    /// Root values of the reference policy.
    pub reference_values: Vec<f64>,
    /// Roots whose plan was replaced.
    pub accepted: Vec<usize>,
}

/// One policy update against `reference`.
pub fn policy_update(
    problem: &SensingProblem,
    reference: &SensingPolicy,
    maxsteps: usize,
    eval: EvalOptions,
) -> Result<UpdateOutcome> {
    let system = RootSystem::build(problem, reference, eval)?;
    let v_ref = system.values().to_vec();
    let look = Lookahead::new(&problem.mdp, &v_ref);
    let candidates: Vec<Option<Plan>> = (0..problem.num_states())
        .into_par_iter()
        .map(|root| -> Result<Option<Plan>> {
            let plan = greedy_plan(problem, &look, root, maxsteps);
            if plan == reference.plans[root] {
                return Ok(None);
            }
            let value = system.value_with_replaced(root, &plan_terms(problem, root, &plan))?;
            Ok((value < v_ref[root] - ACCEPT_MARGIN).then_some(plan))
        })
        .collect::<Result<_>>()?;
    let mut policy = reference.clone();
    let mut accepted = Vec::new();
    for (root, candidate) in candidates.into_iter().enumerate() {
        if let Some(plan) = candidate {
            policy.plans[root] = plan;
            accepted.push(root);
        }
    }
    policy.metadata = "SPI".into();
    Ok(UpdateOutcome { policy, reference_values: v_ref, accepted })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpiIteration {
    pub iteration: usize,
    /// `max_s V_ref(s) - V_new(s)`.
    pub max_improvement: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpiResult {
    pub policy: SensingPolicy,
    pub values: Vec<f64>,
    pub trace: Vec<SpiIteration>,
    /// Number of policy updates performed.
    pub updates: usize,
    pub maxsteps: usize,
}

impl SpiResult {
    /// Improvement trace as CSV: `iteration, max_improvement, V(0), V(1), …`.
    pub fn trace_csv(&self) -> Result<String> {
        let n = self.values.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_string(), "max_improvement".to_string()];
        header.extend((0..n).map(|s| format!("V{s}")));
        w.write_record(&header)?;
        for it in &self.trace {
            let mut row = vec![it.iteration.to_string(), it.max_improvement.to_string()];
            row.extend(it.values.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Repeats [`policy_update`] from `init` until no root improves by more than
/// `delta` (or the update cap is reached) and returns the last improved policy.
pub fn spi(problem: &SensingProblem, init: &SensingPolicy, opts: SpiOptions) -> Result<SpiResult> {
    if !(opts.delta > 0.0) && opts.max_updates.is_none() {
        return Err(Error::InvalidArgument("delta must be positive unless an update cap is given".into()));
    }
    let maxsteps = resolve_maxsteps(problem, &opts);
    let mut current = init.clone();
    let mut trace = Vec::new();
    let mut updates = 0;
    loop {
        let outcome = policy_update(problem, &current, maxsteps, opts.eval)?;
        updates += 1;
        let improved = outcome.policy;
        let values = RootSystem::build(problem, &improved, opts.eval)?.values().to_vec();
        let gain = outcome
            .reference_values
            .iter()
            .zip(&values)
            .map(|(r, v)| r - v)
            .fold(f64::NEG_INFINITY, f64::max);
        trace.push(SpiIteration { iteration: updates, max_improvement: gain, values: values.clone() });
        let capped = opts.max_updates.is_some_and(|cap| updates >= cap);
        if !(gain > opts.delta) || capped {
            return Ok(SpiResult { policy: improved, values, trace, updates, maxsteps });
        }
        current = improved;
    }
}

/// Update-count bound when starting from always-sense: `k|S| / (δ(1-α))`.
pub fn termination_bound(k: f64, states: usize, delta: f64, alpha: f64) -> f64 {
    k * states as f64 / (delta * (1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{fig2, fig8, LABELS};
    use crate::policy::{as_policy, evaluate_on_roots};

    #[test]
    fn default_maxsteps_reaches_precision() {
        let m = default_maxsteps(0.5, 0.25, 1e-6);
        assert!(0.5f64.powi(m as i32) * 0.25 < 1e-7);
        assert!(0.5f64.powi(m as i32 - 1) * 0.25 >= 1e-7);
        assert_eq!(default_maxsteps(0.9, 0.0, 1e-6), 1);
    }

    #[test]
    fn zero_cost_keeps_always_sense() {
        let problem = SensingProblem::uniform(fig2(), 0.0).unwrap();
        let init = as_policy(&problem.baseline);
        let result = spi(&problem, &init, SpiOptions::default()).unwrap();
        assert_eq!(result.policy.plans, init.plans);
        assert_eq!(result.updates, 1);
    }

    #[test]
    fn fig2_improves_on_always_sense() {
        let problem = SensingProblem::uniform(fig2(), 0.25).unwrap();
        let init = as_policy(&problem.baseline);
        let base = evaluate_on_roots(&problem, &init).unwrap().values;
        let result = spi(&problem, &init, SpiOptions::default()).unwrap();
        for s in 0..2 {
            assert!(result.values[s] < base[s]);
        }
        let csv = result.trace_csv().unwrap();
        assert!(csv.starts_with("iteration,max_improvement,V0,V1"));
        assert_eq!(csv.lines().count(), 1 + result.trace.len());
    }

    #[test]
    fn fig8_walk_from_root_one() {
        let problem = SensingProblem::uniform(fig8(), 0.005).unwrap();
        let init = as_policy(&problem.baseline);
        let result = spi(&problem, &init, SpiOptions { maxsteps: Some(6), ..Default::default() }).unwrap();
        assert_eq!(result.policy.plans[0].label(&LABELS), "R");
        assert!(result.values[1] <= evaluate_on_roots(&problem, &init).unwrap().values[1]);
    }
}
