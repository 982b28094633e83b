//! Belief states of the sensing-augmented MDP and the value primitives built
//! on them: path costs, always-sense values and one-step myopic sensing.
//!
//! A belief state is a root (the last sensed state) plus the blind actions
//! taken since. Its belief vector is `e_root · T(a_1) ··· T(a_n)` and its
//! path cost is the expected discounted cost accumulated along the way.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{argmin, dot};
use crate::mdp::{BaselineMdp, BaselineSolution};

const CLAMP_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub root: usize,
    pub blind_actions: Vec<usize>,
    pub belief: Vec<f64>,
    /// Expected discounted cost of the blind path from the root.
    pub z_cost: f64,
}

impl BeliefState {
    pub fn root(mdp: &BaselineMdp, root: usize) -> Self {
        let mut belief = vec![0.0; mdp.num_states()];
        belief[root] = 1.0;
        BeliefState { root, blind_actions: Vec::new(), belief, z_cost: 0.0 }
    }

    pub fn depth(&self) -> usize {
        self.blind_actions.len()
    }

    /// Takes one blind action.
    pub fn extend(&self, a: usize, mdp: &BaselineMdp) -> Self {
        let step_cost = mdp.expected_cost(&self.belief, a);
        let z_cost = self.z_cost + mdp.discount().powi(self.depth() as i32) * step_cost;
        let mut belief = mdp.propagate(&self.belief, a);
        normalize(&mut belief);
        let mut blind_actions = self.blind_actions.clone();
        blind_actions.push(a);
        BeliefState { root: self.root, blind_actions, belief, z_cost }
    }

    pub fn from_path(mdp: &BaselineMdp, root: usize, actions: &[usize]) -> Self {
        actions.iter().fold(Self::root(mdp, root), |b, &a| b.extend(a, mdp))
    }
}

/// Clamps float-drift negatives to zero and rescales to unit mass.
pub fn normalize(belief: &mut [f64]) {
    let mut sum = 0.0;
    for x in belief.iter_mut() {
        if *x < 0.0 && *x >= -CLAMP_TOL {
            *x = 0.0;
        }
        sum += *x;
    }
    if sum > 0.0 && sum != 1.0 {
        belief.iter_mut().for_each(|x| *x /= sum);
    }
}

/// Expected discounted cost of a blind path:
/// `C(s,a_1) + Σ_{i≥1} α^i B((s,a_1..a_i)) C(a_{i+1})`. The empty path costs 0.
pub fn z_of_path(mdp: &BaselineMdp, root: usize, actions: &[usize]) -> f64 {
    BeliefState::from_path(mdp, root, actions).z_cost
}

/// How much a sensing action costs.
#[derive(Clone)]
pub enum SensingCostModel {
    Uniform(f64),
    PerAction(Vec<f64>),
    /// `k`, except that sensing is free once the belief lies entirely on
    /// terminal states (the episode is over).
    TerminalFree { k: f64, terminal: Arc<[bool]> },
    BeliefDependent(Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for SensingCostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensingCostModel::Uniform(k) => write!(f, "Uniform({k})"),
            SensingCostModel::PerAction(v) => write!(f, "PerAction({v:?})"),
            SensingCostModel::TerminalFree { k, .. } => write!(f, "TerminalFree({k})"),
            SensingCostModel::BeliefDependent(_) => write!(f, "BeliefDependent(..)"),
        }
    }
}

impl SensingCostModel {
    pub fn uniform(k: f64) -> Self {
        SensingCostModel::Uniform(k)
    }

    pub fn belief_dependent(f: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        SensingCostModel::BeliefDependent(Arc::new(f))
    }

    /// Uniform cost `k`, waived on the absorbing zero-cost states of `mdp`.
    pub fn terminal_free(k: f64, mdp: &BaselineMdp) -> Self {
        SensingCostModel::TerminalFree { k, terminal: mdp.terminal_states().into() }
    }

    pub fn cost(&self, belief: &[f64], a: usize) -> f64 {
        match self {
            SensingCostModel::Uniform(k) => *k,
            SensingCostModel::PerAction(v) => v[a],
            SensingCostModel::TerminalFree { k, terminal } => {
                let over = belief.iter().zip(terminal.iter()).all(|(&b, &t)| t || b == 0.0);
                if over {
                    0.0
                } else {
                    *k
                }
            }
            SensingCostModel::BeliefDependent(f) => f(belief, a),
        }
    }

    pub fn uniform_k(&self) -> Option<f64> {
        match self {
            SensingCostModel::Uniform(k) => Some(*k),
            _ => None,
        }
    }

    /// The headline `k` of the uniform and terminal-free models.
    pub fn nominal_k(&self) -> Option<f64> {
        match self {
            SensingCostModel::Uniform(k) | SensingCostModel::TerminalFree { k, .. } => Some(*k),
            _ => None,
        }
    }

    /// Supremum of the sensing cost when it is known without enumeration.
    pub fn sup(&self) -> Option<f64> {
        match self {
            SensingCostModel::Uniform(k) | SensingCostModel::TerminalFree { k, .. } => Some(*k),
            SensingCostModel::PerAction(v) => Some(v.iter().cloned().fold(0.0, f64::max)),
            SensingCostModel::BeliefDependent(_) => None,
        }
    }

    pub fn check(&self, num_states: usize, num_actions: usize) -> Result<()> {
        match self {
            SensingCostModel::Uniform(k) | SensingCostModel::TerminalFree { k, .. }
                if !(k.is_finite() && *k >= 0.0) =>
            {
                Err(Error::InvalidArgument(format!("sensing cost must be finite and >= 0, got {k}")))
            }
            SensingCostModel::PerAction(v) if v.len() != num_actions => Err(Error::Shape(format!(
                "per-action sensing costs have {} entries, expected {num_actions}",
                v.len()
            ))),
            SensingCostModel::TerminalFree { terminal, .. } if terminal.len() != num_states => {
                Err(Error::Shape(format!(
                    "terminal mask has {} entries, expected {num_states}",
                    terminal.len()
                )))
            }
            SensingCostModel::PerAction(v) if v.iter().any(|k| !(k.is_finite() && *k >= 0.0)) => {
                Err(Error::InvalidArgument("per-action sensing costs must be finite and >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `belief · Q*(·, a)` for every action.
fn belief_q(belief: &[f64], solution: &BaselineSolution) -> Vec<f64> {
    let m = solution.num_actions;
    let mut out = vec![0.0; m];
    for (s, &w) in belief.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (a, q) in solution.q_row(s).iter().enumerate() {
            out[a] += w * q;
        }
    }
    out
}

/// Zero-cost always-sense value `min B·Q*`, a lower bound on the optimum.
pub fn v_as0(belief: &[f64], solution: &BaselineSolution) -> f64 {
    argmin(belief_q(belief, solution)).1
}

pub fn pi_as(belief: &[f64], solution: &BaselineSolution) -> usize {
    argmin(belief_q(belief, solution)).0
}

/// Always-sense value `min B·Q* + k/(1-α)`; only defined for a uniform cost.
pub fn v_as(belief: &[f64], solution: &BaselineSolution, cost: &SensingCostModel, discount: f64) -> Result<f64> {
    let k = cost.uniform_k().ok_or(Error::UnsupportedClosedForm)?;
    Ok(v_as0(belief, solution) + k / (1.0 - discount))
}

/// `min_a B·(Q*(·,a) - V*)`, computed as a sum of nonnegative terms so that
/// it is never negative in floating point.
pub fn as_gap(belief: &[f64], solution: &BaselineSolution) -> f64 {
    let m = solution.num_actions;
    let mut gaps = vec![0.0; m];
    for (s, &w) in belief.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let v = solution.v_star[s];
        for (a, q) in solution.q_row(s).iter().enumerate() {
            gaps[a] += w * (q - v);
        }
    }
    gaps.into_iter().fold(f64::INFINITY, f64::min)
}

/// One-step lookahead against a fixed terminal value `v̄` at the roots:
/// `W[a] = C(a) + α T(a) v̄`, so that sensing with `a` from belief `B` is
/// worth `B·W[a]` plus the sensing cost.
#[derive(Debug, Clone)]
pub struct Lookahead {
    pub weights: Vec<Vec<f64>>,
}

impl Lookahead {
    pub fn new(mdp: &BaselineMdp, v_bar: &[f64]) -> Self {
        let alpha = mdp.discount();
        let weights = (0..mdp.num_actions())
            .map(|a| {
                let tv = mdp.apply(a, v_bar);
                (0..mdp.num_states()).map(|s| mdp.cost(s, a) + alpha * tv[s]).collect()
            })
            .collect();
        Lookahead { weights }
    }

    /// Myopic sensing value and action. A uniform cost is added outside the
    /// minimum; other cost models enter inside it.
    pub fn sense(&self, belief: &[f64], cost: &SensingCostModel) -> (f64, usize) {
        match cost {
            SensingCostModel::Uniform(k) => {
                let (a, v) = argmin(self.weights.iter().map(|w| dot(belief, w)));
                (v + k, a)
            }
            _ => {
                let (a, v) = argmin(
                    self.weights
                        .iter()
                        .enumerate()
                        .map(|(a, w)| dot(belief, w) + cost.cost(belief, a)),
                );
                (v, a)
            }
        }
    }
}

/// Myopic sensing value `V_MS(B, v̄)`.
pub fn v_ms(belief: &[f64], v_bar: &[f64], mdp: &BaselineMdp, cost: &SensingCostModel) -> f64 {
    Lookahead::new(mdp, v_bar).sense(belief, cost).0
}

/// Myopic sensing action `π_MS(B, v̄)`, lowest index on ties.
pub fn pi_ms(belief: &[f64], v_bar: &[f64], mdp: &BaselineMdp, cost: &SensingCostModel) -> usize {
    Lookahead::new(mdp, v_bar).sense(belief, cost).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::fig2;
    use crate::mdp::solve_baseline;

    #[test]
    fn extend_from_root_of_fig2() {
        let mdp = fig2();
        let b = BeliefState::root(&mdp, 0).extend(fig2_red(), &mdp);
        assert_eq!(b.depth(), 1);
        assert!((b.belief[0] - 0.7).abs() < 1e-15);
        assert!((b.belief[1] - 0.3).abs() < 1e-15);
        assert_eq!(b.z_cost, 0.0);
    }

    fn fig2_red() -> usize {
        crate::envs::RED
    }

    #[test]
    fn identity_action_keeps_belief() {
        let mdp = BaselineMdp::new(
            "id",
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.5, 0.5], vec![0.1, 0.9]]],
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            0.5,
        )
        .unwrap();
        let b = BeliefState::root(&mdp, 1).extend(1, &mdp);
        let c = b.extend(0, &mdp);
        assert_eq!(b.belief, c.belief);
    }

    #[test]
    fn single_step_path_is_table_cost() {
        let mdp = fig2();
        assert_eq!(z_of_path(&mdp, 0, &[]), 0.0);
        assert_eq!(z_of_path(&mdp, 1, &[0]), mdp.cost(1, 0));
        assert_eq!(z_of_path(&mdp, 0, &[1]), mdp.cost(0, 1));
    }

    #[test]
    fn as_values_at_unit_beliefs() {
        let mdp = fig2();
        let sol = solve_baseline(&mdp, 1e-13).unwrap();
        for s in 0..2 {
            let e: Vec<f64> = (0..2).map(|i| if i == s { 1.0 } else { 0.0 }).collect();
            assert!((v_as0(&e, &sol) - sol.v_star[s]).abs() < 1e-15);
            assert_eq!(pi_as(&e, &sol), sol.pi_star[s]);
            let k = 0.3;
            let v = v_as(&e, &sol, &SensingCostModel::Uniform(k), 0.5).unwrap();
            assert!((v - sol.v_star[s] - k / 0.5).abs() < 1e-14);
            let myopic = v_ms(&e, &sol.v_star, &mdp, &SensingCostModel::Uniform(k));
            assert!((myopic - sol.v_star[s] - k).abs() < 1e-14);
        }
        let err = v_as(&[1.0, 0.0], &sol, &SensingCostModel::PerAction(vec![0.1, 0.2]), 0.5);
        assert!(matches!(err, Err(Error::UnsupportedClosedForm)));
    }

    #[test]
    fn uniform_belief_as_value_by_hand() {
        let mdp = fig2();
        let sol = solve_baseline(&mdp, 1e-13).unwrap();
        let k = 0.1;
        let expected = (0..2)
            .map(|a| 0.5 * sol.q(0, a) + 0.5 * sol.q(1, a))
            .fold(f64::INFINITY, f64::min)
            + k / (1.0 - 0.5);
        let got = v_as(&[0.5, 0.5], &sol, &SensingCostModel::Uniform(k), 0.5).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn per_action_cost_enters_inside_min() {
        let mdp = fig2();
        let v_bar = [0.4, -0.2];
        let b = [0.3, 0.7];
        let cost = SensingCostModel::PerAction(vec![5.0, 0.0]);
        let by_hand: Vec<f64> = (0..2)
            .map(|a| {
                let next = mdp.propagate(&b, a);
                mdp.expected_cost(&b, a) + 0.5 * dot(&next, &v_bar) + [5.0, 0.0][a]
            })
            .collect();
        let (a, v) = argmin(by_hand);
        assert!((v_ms(&b, &v_bar, &mdp, &cost) - v).abs() < 1e-15);
        assert_eq!(pi_ms(&b, &v_bar, &mdp, &cost), a);
    }
}
