//! Opportunistic-sensing policies in their finite form: for every root
//! state, a blind-action prefix followed by exactly one sensing action.
//!
//! Evaluating such a policy at the roots reduces to an `|S|×|S|` linear
//! system. Root `j` with prefix length `m` and sensing action `a` pays
//! `c_j = Z(prefix) + α^m (B_m·C(a) + k'(B_m, a))` before landing on root `i`
//! with probability `(B_m T(a))_i` and discount `α^{m+1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::linalg::{self, dot, solve_discounted_system};
use crate::mdp::BaselineSolution;
use crate::problem::SensingProblem;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub blind_prefix: Vec<usize>,
    pub sense_action: usize,
}

impl Plan {
    pub fn sense(a: usize) -> Self {
        Plan { blind_prefix: Vec::new(), sense_action: a }
    }

    /// Renders the plan with single-letter action labels, e.g. `BRRRR` for
    /// blind `B,R,R,R` followed by sensing with `R`.
    pub fn label(&self, names: &[&str]) -> String {
        self.blind_prefix
            .iter()
            .chain(std::iter::once(&self.sense_action))
            .map(|&a| names.get(a).copied().unwrap_or("?"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingPolicy {
    pub plans: Vec<Plan>,
    pub metadata: String,
}

#[derive(Serialize, Deserialize)]
struct PlanRecord {
    root: usize,
    blind_prefix: Vec<usize>,
    sense_action: usize,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    metadata: String,
    plans: Vec<PlanRecord>,
}

impl SensingPolicy {
    pub fn new(plans: Vec<Plan>, metadata: impl Into<String>) -> Self {
        SensingPolicy { plans, metadata: metadata.into() }
    }

    pub fn max_prefix(&self) -> usize {
        self.plans.iter().map(|p| p.blind_prefix.len()).max().unwrap_or(0)
    }

    pub fn check(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.plans.len() != num_states {
            return Err(Error::Shape(format!(
                "policy has {} plans, expected one per root ({num_states})",
                self.plans.len()
            )));
        }
        for (root, plan) in self.plans.iter().enumerate() {
            if plan.sense_action >= num_actions || plan.blind_prefix.iter().any(|&a| a >= num_actions) {
                return Err(Error::InvalidArgument(format!("plan at root {root} uses an unknown action")));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let file = PolicyFile {
            metadata: self.metadata.clone(),
            plans: self
                .plans
                .iter()
                .enumerate()
                .map(|(root, p)| PlanRecord {
                    root,
                    blind_prefix: p.blind_prefix.clone(),
                    sense_action: p.sense_action,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        let n = file.plans.len();
        let mut plans: Vec<Option<Plan>> = vec![None; n];
        for rec in file.plans {
            let slot = plans.get_mut(rec.root).ok_or_else(|| Error::Schema {
                path: "plans[].root".into(),
                message: format!("root {} out of range", rec.root),
            })?;
            if slot.is_some() {
                return Err(Error::Schema {
                    path: "plans[].root".into(),
                    message: format!("root {} listed twice", rec.root),
                });
            }
            *slot = Some(Plan { blind_prefix: rec.blind_prefix, sense_action: rec.sense_action });
        }
        Ok(SensingPolicy {
            plans: plans.into_iter().map(|p| p.expect("every root filled")).collect(),
            metadata: file.metadata,
        })
    }
}

/// Always-sense: sense at every step with the baseline-optimal action.
pub fn as_policy(solution: &BaselineSolution) -> SensingPolicy {
    SensingPolicy::new(solution.pi_star.iter().map(|&a| Plan::sense(a)).collect(), "AS")
}

/// Values of a policy at the root states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootValueTable {
    pub values: Vec<f64>,
    /// Sup-norm residual of the linear system at the returned values.
    pub residual: f64,
}

impl RootValueTable {
    /// Expected value under a start distribution over roots.
    pub fn fold(&self, dist: &[f64]) -> f64 {
        dot(&self.values, dist)
    }
}

/// Row of the root-level linear system contributed by one plan.
#[derive(Debug, Clone)]
pub struct PlanTerms {
    pub cost: f64,
    /// `α^{m+1}`.
    pub weight: f64,
    pub landing: Vec<(usize, f64)>,
}

pub fn plan_terms(problem: &SensingProblem, root: usize, plan: &Plan) -> PlanTerms {
    let mdp = &problem.mdp;
    let alpha = mdp.discount();
    let node = BeliefState::from_path(mdp, root, &plan.blind_prefix);
    let m = plan.blind_prefix.len() as i32;
    let a = plan.sense_action;
    let step = mdp.expected_cost(&node.belief, a) + problem.cost.cost(&node.belief, a);
    let cost = node.z_cost + alpha.powi(m) * step;
    let landing = mdp
        .propagate(&node.belief, a)
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p != 0.0)
        .collect();
    PlanTerms { cost, weight: alpha.powi(m + 1), landing }
}

/// Policy evaluation settings.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Above this many roots the system is solved by fixed-point iteration.
    pub dense_limit: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { dense_limit: linalg::DEFAULT_DENSE_LIMIT }
    }
}

/// Exact values of a sensing policy at every root.
pub fn evaluate_on_roots(problem: &SensingProblem, policy: &SensingPolicy) -> Result<RootValueTable> {
    evaluate_on_roots_with(problem, policy, EvalOptions::default())
}

pub fn evaluate_on_roots_with(
    problem: &SensingProblem,
    policy: &SensingPolicy,
    opts: EvalOptions,
) -> Result<RootValueTable> {
    Ok(RootSystem::build(problem, policy, opts)?.table())
}

/// The assembled root-level system of one policy, kept around so that
/// single-root plan changes can be evaluated by a rank-one update.
#[derive(Debug, Clone)]
pub struct RootSystem {
    terms: Vec<PlanTerms>,
    values: Vec<f64>,
    residual: f64,
    /// `M^{-1}` for `M = I - diag(w) P`, when the system is small enough.
    inverse: Option<nalgebra::DMatrix<f64>>,
    opts: EvalOptions,
}

impl RootSystem {
    pub fn build(problem: &SensingProblem, policy: &SensingPolicy, opts: EvalOptions) -> Result<Self> {
        let n = problem.num_states();
        policy.check(n, problem.num_actions())?;
        let terms: Vec<PlanTerms> = policy
            .plans
            .par_iter()
            .enumerate()
            .map(|(root, plan)| plan_terms(problem, root, plan))
            .collect();
        Self::from_terms(terms, opts)
    }

    fn from_terms(terms: Vec<PlanTerms>, opts: EvalOptions) -> Result<Self> {
        let n = terms.len();
        let costs: Vec<f64> = terms.iter().map(|t| t.cost).collect();
        let weights: Vec<f64> = terms.iter().map(|t| t.weight).collect();
        let rows: Vec<Vec<(usize, f64)>> = terms.iter().map(|t| t.landing.clone()).collect();
        let (values, inverse) = if n <= opts.dense_limit {
            let mut m = nalgebra::DMatrix::<f64>::identity(n, n);
            for (j, row) in rows.iter().enumerate() {
                for &(i, p) in row {
                    m[(j, i)] -= weights[j] * p;
                }
            }
            let inv = m
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("{n}x{n} root system")))?;
            let rhs = nalgebra::DVector::from_column_slice(&costs);
            let mut v = (&inv * rhs).as_slice().to_vec();
            // One step of iterative refinement against the explicit inverse.
            let r: Vec<f64> = (0..n)
                .map(|j| {
                    let acc: f64 = rows[j].iter().map(|&(i, p)| p * v[i]).sum();
                    costs[j] + weights[j] * acc - v[j]
                })
                .collect();
            let corr = &inv * nalgebra::DVector::from_column_slice(&r);
            v.iter_mut().zip(corr.iter()).for_each(|(x, c)| *x += c);
            (v, Some(inv))
        } else {
            (solve_discounted_system(&costs, &weights, &rows, opts.dense_limit)?.0, None)
        };
        let residual = linalg::residual(&values, &costs, &weights, &rows);
        Ok(RootSystem { terms, values, residual, inverse, opts })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn table(&self) -> RootValueTable {
        RootValueTable { values: self.values.clone(), residual: self.residual }
    }

    /// Value at `root` of the policy obtained by replacing only that root's
    /// plan with `replacement`.
    pub fn value_with_replaced(&self, root: usize, replacement: &PlanTerms) -> Result<f64> {
        let Some(inv) = &self.inverse else {
            let mut terms = self.terms.clone();
            terms[root] = replacement.clone();
            return Ok(Self::from_terms(terms, self.opts)?.values[root]);
        };
        let n = self.values.len();
        let old = &self.terms[root];
        // Row change of M: u = w_old P_old - w_new P_new.
        let mut u = vec![0.0; n];
        for &(i, p) in &old.landing {
            u[i] += old.weight * p;
        }
        for &(i, p) in &replacement.landing {
            u[i] -= replacement.weight * p;
        }
        let col: Vec<f64> = (0..n).map(|i| inv[(i, root)]).collect();
        let dc = replacement.cost - old.cost;
        let x: Vec<f64> = self.values.iter().zip(&col).map(|(v, c)| v + dc * c).collect();
        let denom = 1.0 + dot(&u, &col);
        if denom.abs() < 1e-300 {
            return Err(Error::Singular("rank-one update".into()));
        }
        Ok(x[root] - col[root] * dot(&u, &x) / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::SensingCostModel;
    use crate::envs::fig2;

    #[test]
    fn as_policy_on_fig2() {
        let problem = SensingProblem::uniform(fig2(), 0.25).unwrap();
        let policy = as_policy(&problem.baseline);
        assert_eq!(policy.plans[0], Plan::sense(crate::envs::RED));
        assert_eq!(policy.plans[1], Plan::sense(crate::envs::BLUE));
        let table = evaluate_on_roots(&problem, &policy).unwrap();
        for s in 0..2 {
            let expected = problem.baseline.v_star[s] + 0.25 / 0.5;
            assert!((table.values[s] - expected).abs() < 1e-12);
        }
        assert!(table.residual < 1e-12);
    }

    #[test]
    fn zero_cost_as_is_v_star() {
        let problem = SensingProblem::uniform(fig2(), 0.0).unwrap();
        let table = evaluate_on_roots(&problem, &as_policy(&problem.baseline)).unwrap();
        for s in 0..2 {
            assert!((table.values[s] - problem.baseline.v_star[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_update_matches_full_solve() {
        let problem = SensingProblem::uniform(fig2(), 0.1).unwrap();
        let base = as_policy(&problem.baseline);
        let system = RootSystem::build(&problem, &base, EvalOptions::default()).unwrap();
        let replacement = Plan { blind_prefix: vec![1, 0, 0], sense_action: 1 };
        let terms = plan_terms(&problem, 1, &replacement);
        let fast = system.value_with_replaced(1, &terms).unwrap();
        let mut changed = base.clone();
        changed.plans[1] = replacement;
        let full = evaluate_on_roots(&problem, &changed).unwrap();
        assert!((fast - full.values[1]).abs() < 1e-13);
        let iterative = evaluate_on_roots_with(&problem, &changed, EvalOptions { dense_limit: 0 }).unwrap();
        assert!((iterative.values[1] - full.values[1]).abs() < 1e-10);
    }

    #[test]
    fn policy_json_round_trip() {
        let p = SensingPolicy::new(
            vec![Plan::sense(0), Plan { blind_prefix: vec![1, 0, 0, 0], sense_action: 0 }],
            "truncated-4",
        );
        let text = p.to_json_string();
        assert_eq!(SensingPolicy::from_json_str(&text).unwrap(), p);
        assert_eq!(p.plans[1].label(&["R", "B"]), "BRRRR");
    }

    #[test]
    fn per_action_cost_enters_plan_cost() {
        let mdp = fig2();
        let problem = SensingProblem::new(mdp, SensingCostModel::PerAction(vec![0.2, 0.4])).unwrap();
        let t = plan_terms(&problem, 0, &Plan { blind_prefix: vec![0], sense_action: 1 });
        let b = problem.mdp.propagate(&[1.0, 0.0], 0);
        let expected = problem.mdp.cost(0, 0) + 0.5 * (problem.mdp.expected_cost(&b, 1) + 0.4);
        assert!((t.cost - expected).abs() < 1e-15);
        assert_eq!(t.weight, 0.25);
    }
}
