//! Depth-truncated sensing problems and their optimality certificates.
//!
//! In the depth-`N` truncation the agent may take at most `N` consecutive
//! blind actions; at depth `N` it must sense. Every root therefore owns a
//! finite tree of belief nodes, and the problem is a finite MDP over those
//! trees that can be solved exactly.
//!
//! The solver alternates a backward-induction pass over every root tree
//! (given the current root values as terminal values) with an exact
//! evaluation of the greedy plans, until the greedy pass stops improving.
//!
//! The certificates compare the depth-`N` optimum against the layer of
//! nodes one blind step deeper:
//! - the one-step test asks whether sensing from any depth-`N+1` node could
//!   beat the current root value;
//! - the zero-cost test bounds everything deeper by the always-sense value
//!   with free sensing, `min_a B·Q*(·,a)`, and yields both the gap `ε_N`
//!   and a lower bound on the untruncated optimum.

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{normalize, v_as0, Lookahead, SensingCostModel};
use crate::error::{Error, Result};
use crate::mdp::{BaselineMdp, BaselineSolution};
use crate::policy::{as_policy, evaluate_on_roots, Plan, SensingPolicy};
use crate::problem::SensingProblem;

pub const DEFAULT_BUDGET: u64 = 2_000_000;
/// Slack used for every certificate inequality.
pub const CERT_SLACK: f64 = 1e-9;
/// A node takes a blind step only if that beats sensing by more than this.
const BLIND_MARGIN: f64 = 1e-12;
const MAX_OUTER: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct TruncatedOptions {
    pub tol: f64,
    /// Maximum number of belief nodes in the widest layer enumerated.
    pub budget: u64,
    /// Keep every node's decision in the returned solution.
    pub record_nodes: bool,
}

impl Default for TruncatedOptions {
    fn default() -> Self {
        TruncatedOptions { tol: 1e-10, budget: DEFAULT_BUDGET, record_nodes: true }
    }
}

/// Optimal decision at one belief node of a root tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDecision {
    pub root: usize,
    pub path: Vec<usize>,
    pub action: usize,
    pub sense: bool,
    pub value: f64,
}

impl NodeDecision {
    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

/// Certificate checks for one truncation depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// One-step stability: going one layer deeper cannot lower any root value.
    pub lemma3_holds: bool,
    pub lemma3_per_root: Vec<bool>,
    /// Per root, whether no policy with more than `N` blind steps can beat
    /// the depth-`N` value.
    pub thm4_holds_per_root: Vec<bool>,
    /// `min_i Z(i) + α^{N+1} min_a B(i)·Q*(·,a)` over the depth-`N+1` nodes
    /// of each root.
    pub deep_minimum: Vec<f64>,
    /// `max_j V_N(j) - deep_minimum(j)`; nonpositive exactly when the
    /// zero-cost test holds at every root.
    pub epsilon: f64,
    /// Lower bound on the untruncated optimum at every root.
    pub lower_bound: Vec<f64>,
}

impl Certificate {
    pub fn thm4_holds(&self) -> bool {
        self.thm4_holds_per_root.iter().all(|&h| h)
    }

    /// Certified suboptimality of the depth-`N` policy on the full problem.
    pub fn suboptimality_bound(&self) -> f64 {
        self.epsilon.max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedSolution {
    pub depth: usize,
    pub root_values: Vec<f64>,
    pub policy: SensingPolicy,
    /// Decisions at every node of every root tree, in depth-first order.
    pub layer_policies: Vec<NodeDecision>,
    pub outer_iterations: usize,
    pub certificate: Option<Certificate>,
}

fn layer_size(states: usize, actions: usize, depth: usize) -> (u128, u128) {
    let branching = (actions as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    (branching.saturating_mul(states as u128), branching)
}

/// Fails unless `|S|·|A|^depth` nodes fit in the budget.
pub fn check_budget(states: usize, actions: usize, depth: usize, budget: u64) -> Result<()> {
    let (nodes, branching) = layer_size(states, actions, depth);
    if nodes > budget as u128 {
        return Err(Error::Budget { nodes, states, depth, branching, budget });
    }
    Ok(())
}

fn child_belief(mdp: &BaselineMdp, belief: &[f64], a: usize) -> Vec<f64> {
    let mut next = mdp.propagate(belief, a);
    normalize(&mut next);
    next
}

struct TreeSearch<'a> {
    mdp: &'a BaselineMdp,
    cost: &'a SensingCostModel,
    look: Lookahead,
    depth: usize,
}

/// Optimal plan from a node: the blind actions still to take and the
/// sensing action that ends them.
struct Suffix {
    value: f64,
    blind: Vec<usize>,
    sense: usize,
}

impl TreeSearch<'_> {
    fn solve(&self, belief: &[f64], path: &mut Vec<usize>, root: usize, log: &mut Option<Vec<NodeDecision>>) -> Suffix {
        let (sense_value, sense_action) = self.look.sense(belief, self.cost);
        let mut best = Suffix { value: sense_value, blind: Vec::new(), sense: sense_action };
        let mut chosen_blind = None;
        if path.len() < self.depth {
            let alpha = self.mdp.discount();
            let mut blind: Option<(usize, f64, Suffix)> = None;
            for a in 0..self.mdp.num_actions() {
                let child = child_belief(self.mdp, belief, a);
                path.push(a);
                let sub = self.solve(&child, path, root, log);
                path.pop();
                let value = self.mdp.expected_cost(belief, a) + alpha * sub.value;
                if blind.as_ref().map_or(true, |b| value < b.1) {
                    blind = Some((a, value, sub));
                }
            }
            if let Some((a, value, sub)) = blind {
                if value < sense_value - BLIND_MARGIN {
                    let mut prefix = Vec::with_capacity(sub.blind.len() + 1);
                    prefix.push(a);
                    prefix.extend(sub.blind);
                    best = Suffix { value, blind: prefix, sense: sub.sense };
                    chosen_blind = Some(a);
                }
            }
        }
        if let Some(log) = log {
            log.push(NodeDecision {
                root,
                path: path.clone(),
                action: chosen_blind.unwrap_or(sense_action),
                sense: chosen_blind.is_none(),
                value: best.value,
            });
        }
        best
    }
}

/// One backward-induction pass over every root tree with terminal values
/// `v_root`. Returns the greedy root values and plans, and optionally every
/// node decision.
fn greedy_pass(
    problem: &SensingProblem,
    depth: usize,
    v_root: &[f64],
    record: bool,
) -> (Vec<f64>, Vec<Plan>, Vec<NodeDecision>) {
    let search = TreeSearch {
        mdp: &problem.mdp,
        cost: &problem.cost,
        look: Lookahead::new(&problem.mdp, v_root),
        depth,
    };
    let n = problem.num_states();
    let per_root: Vec<(Suffix, Vec<NodeDecision>)> = (0..n)
        .into_par_iter()
        .map(|root| {
            let mut belief = vec![0.0; n];
            belief[root] = 1.0;
            let mut log = record.then(Vec::new);
            let suffix = search.solve(&belief, &mut Vec::with_capacity(depth), root, &mut log);
            (suffix, log.unwrap_or_default())
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    let mut plans = Vec::with_capacity(n);
    let mut nodes = Vec::new();
    for (suffix, mut log) in per_root {
        values.push(suffix.value);
        plans.push(Plan { blind_prefix: suffix.blind, sense_action: suffix.sense });
        // The search logs each node after its subtree; reverse so the root
        // comes first.
        log.reverse();
        nodes.extend(log);
    }
    (values, plans, nodes)
}

/// Solves the depth-`N` truncation exactly.
pub fn solve_truncated(problem: &SensingProblem, depth: usize, opts: TruncatedOptions) -> Result<TruncatedSolution> {
    let n = problem.num_states();
    check_budget(n, problem.num_actions(), depth, opts.budget)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let alpha = problem.discount();
    let stop = opts.tol * (1.0 - alpha) / (2.0 * alpha);
    let mut policy = as_policy(&problem.baseline);
    let mut values = evaluate_on_roots(problem, &policy)?.values;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (greedy, plans, _) = greedy_pass(problem, depth, &values, false);
        let change = greedy.iter().zip(&values).map(|(g, v)| (g - v).abs()).fold(0.0, f64::max);
        if change <= stop || iterations >= MAX_OUTER {
            break;
        }
        let mut improved = false;
        for (j, plan) in plans.into_iter().enumerate() {
            if greedy[j] < values[j] - BLIND_MARGIN && plan != policy.plans[j] {
                policy.plans[j] = plan;
                improved = true;
            }
        }
        if !improved {
            break;
        }
        values = evaluate_on_roots(problem, &policy)?.values;
    }
    policy.metadata = format!("truncated-{depth}");
    let layer_policies = if opts.record_nodes { greedy_pass(problem, depth, &values, true).2 } else { Vec::new() };
    Ok(TruncatedSolution {
        depth,
        root_values: values,
        policy,
        layer_policies,
        outer_iterations: iterations,
        certificate: None,
    })
}

/// Calls `visit(z, belief)` for every node exactly `depth` blind steps below `root`.
pub fn for_each_descendant(
    mdp: &BaselineMdp,
    root: usize,
    depth: usize,
    visit: &mut impl FnMut(f64, &[f64]),
) {
    fn walk(mdp: &BaselineMdp, belief: &[f64], z: f64, level: usize, depth: usize, visit: &mut impl FnMut(f64, &[f64])) {
        if level == depth {
            visit(z, belief);
            return;
        }
        let scale = mdp.discount().powi(level as i32);
        for a in 0..mdp.num_actions() {
            let child = child_belief(mdp, belief, a);
            walk(mdp, &child, z + scale * mdp.expected_cost(belief, a), level + 1, depth, visit);
        }
    }
    let mut belief = vec![0.0; mdp.num_states()];
    belief[root] = 1.0;
    walk(mdp, &belief, 0.0, 0, depth, visit);
}

/// Minima over the depth-`N+1` nodes of each root of the one-step sensing
/// value and of the zero-cost always-sense value, both including the path cost.
fn deep_layer_minima(problem: &SensingProblem, sol: &TruncatedSolution, budget: u64) -> Result<Vec<(f64, f64)>> {
    let depth = sol.depth + 1;
    let mdp = &problem.mdp;
    check_budget(problem.num_states(), problem.num_actions(), depth, budget)?;
    let look = Lookahead::new(mdp, &sol.root_values);
    let scale = problem.discount().powi(depth as i32);
    Ok((0..problem.num_states())
        .into_par_iter()
        .map(|root| {
            let (mut sense_min, mut free_min) = (f64::INFINITY, f64::INFINITY);
            for_each_descendant(mdp, root, depth, &mut |z, belief| {
                sense_min = sense_min.min(z + scale * look.sense(belief, &problem.cost).0);
                free_min = free_min.min(z + scale * v_as0(belief, &problem.baseline));
            });
            (sense_min, free_min)
        })
        .collect())
}

fn lemma3_flags(sol: &TruncatedSolution, minima: &[(f64, f64)]) -> Vec<bool> {
    minima
        .iter()
        .zip(&sol.root_values)
        .map(|(&(sense_min, _), &v)| sense_min >= v - CERT_SLACK)
        .collect()
}

/// One-step test: sensing from any node one layer below the truncation
/// cannot beat the depth-`N` root value, at every root.
pub fn lemma3_check(problem: &SensingProblem, sol: &TruncatedSolution, budget: u64) -> Result<bool> {
    let minima = deep_layer_minima(problem, sol, budget)?;
    Ok(lemma3_flags(sol, &minima).into_iter().all(|h| h))
}

fn build_certificate(problem: &SensingProblem, sol: &TruncatedSolution, minima: &[(f64, f64)]) -> Certificate {
    let alpha = problem.discount();
    let v = &sol.root_values;
    let deep: Vec<f64> = minima.iter().map(|m| m.1).collect();
    let thm4: Vec<bool> = deep.iter().zip(v).map(|(&m, &vj)| m >= vj - CERT_SLACK).collect();
    let gaps: Vec<f64> = v.iter().zip(&deep).map(|(vj, m)| vj - m).collect();
    let epsilon = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lower_bound = (0..v.len())
        .map(|j| {
            let worst_other = gaps
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != j)
                .map(|(_, g)| g.max(0.0))
                .fold(0.0, f64::max);
            deep[j].min(v[j] - alpha * worst_other)
        })
        .collect();
    let lemma3_per_root = lemma3_flags(sol, minima);
    Certificate {
        lemma3_holds: lemma3_per_root.iter().all(|&h| h),
        lemma3_per_root,
        thm4_holds_per_root: thm4,
        deep_minimum: deep,
        epsilon,
        lower_bound,
    }
}

/// Zero-cost deep-layer certificate: per-root flags, `ε_N` and lower bounds.
pub fn thm4_certificate(problem: &SensingProblem, sol: &TruncatedSolution, budget: u64) -> Result<Certificate> {
    let minima = deep_layer_minima(problem, sol, budget)?;
    Ok(build_certificate(problem, sol, &minima))
}

/// Solves the depth-`N` truncation and attaches its certificate.
pub fn solve_certified(problem: &SensingProblem, depth: usize, opts: TruncatedOptions) -> Result<TruncatedSolution> {
    check_budget(problem.num_states(), problem.num_actions(), depth + 1, opts.budget)?;
    let mut sol = solve_truncated(problem, depth, opts)?;
    let minima = deep_layer_minima(problem, &sol, opts.budget)?;
    sol.certificate = Some(build_certificate(problem, &sol, &minima));
    Ok(sol)
}

/// `ε_0, …, ε_{N_max}`.
pub fn epsilon_sequence(problem: &SensingProblem, max_depth: usize, opts: TruncatedOptions) -> Result<Vec<f64>> {
    let opts = TruncatedOptions { record_nodes: false, ..opts };
    (0..=max_depth)
        .map(|n| Ok(solve_certified(problem, n, opts)?.certificate.expect("attached").epsilon))
        .collect()
}

/// Largest uniform sensing cost below which always-sensing is optimal:
/// `α · min_s min_{a1,a2} Σ_{s'} T(a1)[s,s'] (Q*(s',a2) - V*(s'))`.
/// May be zero or negative, in which case it certifies nothing.
pub fn always_sense_threshold(mdp: &BaselineMdp, solution: &BaselineSolution) -> f64 {
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let gap_columns: Vec<Vec<f64>> = (0..m)
        .map(|a2| (0..n).map(|s| solution.q(s, a2) - solution.v_star[s]).collect())
        .collect();
    let mut best = f64::INFINITY;
    for a1 in 0..m {
        for gaps in &gap_columns {
            for s in 0..n {
                let x: f64 = mdp.row(a1, s).iter().map(|&(j, p)| p * gaps[j]).sum();
                best = best.min(x);
            }
        }
    }
    mdp.discount() * best
}

/// Worst-case value loss from truncating at depth `N`: `α^N k / (1-α)`.
pub fn thm2_bound(depth: usize, k: f64, alpha: f64) -> f64 {
    alpha.powi(depth as i32) * k / (1.0 - alpha)
}

/// Same bound with `k` replaced by the largest sensing cost of the model.
pub fn thm2_bound_for(depth: usize, cost: &SensingCostModel, alpha: f64) -> Option<f64> {
    cost.sup().map(|k| thm2_bound(depth, k, alpha))
}

/// Per-depth certificate summary, as written by `certify`.
#[derive(Debug, Clone, Serialize)]
pub struct DepthReport {
    pub depth: usize,
    pub root_values: Vec<f64>,
    pub plans: Vec<Plan>,
    pub lemma3: bool,
    pub thm4_per_root: Vec<bool>,
    pub thm4: bool,
    pub epsilon: f64,
    pub lower_bound: Vec<f64>,
    pub thm2_bound: Option<f64>,
}

impl DepthReport {
    pub fn new(problem: &SensingProblem, sol: &TruncatedSolution) -> Self {
        let cert = sol.certificate.as_ref().expect("certified solution");
        DepthReport {
            depth: sol.depth,
            root_values: sol.root_values.clone(),
            plans: sol.policy.plans.clone(),
            lemma3: cert.lemma3_holds,
            thm4_per_root: cert.thm4_holds_per_root.clone(),
            thm4: cert.thm4_holds(),
            epsilon: cert.epsilon,
            lower_bound: cert.lower_bound.clone(),
            thm2_bound: thm2_bound_for(sol.depth, &problem.cost, problem.discount()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub env: String,
    pub k: Option<f64>,
    pub depths: Vec<DepthReport>,
}

impl CertificateReport {
    /// Certifies every depth in `depths`.
    pub fn sweep(
        problem: &SensingProblem,
        env: impl Into<String>,
        depths: impl IntoIterator<Item = usize>,
        opts: TruncatedOptions,
    ) -> Result<Self> {
        let opts = TruncatedOptions { record_nodes: false, ..opts };
        let depths = depths
            .into_iter()
            .map(|n| Ok(DepthReport::new(problem, &solve_certified(problem, n, opts)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CertificateReport { env: env.into(), k: problem.cost.nominal_k(), depths })
    }

    pub fn first_lemma3(&self) -> Option<usize> {
        self.depths.iter().find(|d| d.lemma3).map(|d| d.depth)
    }

    pub fn first_thm4(&self) -> Option<usize> {
        self.depths.iter().find(|d| d.thm4).map(|d| d.depth)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-format plot data: `N, root, V_trunc, lower_bound, epsilon`.
    pub fn to_plot_csv(&self, scale: f64) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["N", "root", "V_trunc", "lower_bound", "epsilon"])?;
        for d in &self.depths {
            for (root, (v, lb)) in d.root_values.iter().zip(&d.lower_bound).enumerate() {
                w.write_record([
                    d.depth.to_string(),
                    root.to_string(),
                    (scale * v).to_string(),
                    (scale * lb).to_string(),
                    (scale * d.epsilon).to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
