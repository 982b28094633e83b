//! Shared instance generators and brute-force oracles for the integration
//! tests and the acceptance binary.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use opsense::envs::random_sparse_mdp;
use opsense::BaselineMdp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub seed: u64,
    pub mdp: BaselineMdp,
    pub k: f64,
}

/// Random instance number `seed` of the small-MDP suite: `|S| ≤ 4`,
/// `|A| ≤ 3`, `k ∈ [0, 1]`, random row support.
pub fn suite_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + seed);
    let states = rng.gen_range(1..=4);
    let actions = rng.gen_range(1..=3);
    let discount = rng.gen_range(0.3..0.95);
    let support = rng.gen_range(1..=states);
    let mdp = random_sparse_mdp(&mut rng, states, actions, discount, support);
    let k = rng.gen_range(0.0..=1.0);
    Instance { seed, mdp, k }
}

pub fn suite(count: u64) -> Vec<Instance> {
    (0..count).map(suite_instance).collect()
}

/// Dense 2-state, 2-action instance for the flat-enumeration oracle.
pub fn two_by_two(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2b2_0000 + seed);
    let discount = rng.gen_range(0.3..0.95);
    let mdp = opsense::envs::random_mdp(&mut rng, 2, 2, discount);
    let k = rng.gen_range(0.0..=0.5);
    Instance { seed, mdp, k }
}

/// A node of the materialized truncated MDP: root, blind path and belief.
struct FlatNode {
    path_len: usize,
    belief: Vec<f64>,
    /// Child index per action when blind steps are still allowed.
    children: Option<Vec<usize>>,
}

fn step(mdp: &BaselineMdp, belief: &[f64], a: usize) -> Vec<f64> {
    let n = mdp.num_states();
    (0..n).map(|t| (0..n).map(|s| belief[s] * mdp.prob(a, s, t)).sum()).collect()
}

fn expected(mdp: &BaselineMdp, belief: &[f64], a: usize) -> f64 {
    belief.iter().enumerate().map(|(s, b)| b * mdp.cost(s, a)).sum()
}

/// Every node of the depth-`depth` truncation; roots come first.
fn materialize(mdp: &BaselineMdp, depth: usize) -> Vec<FlatNode> {
    let n = mdp.num_states();
    let mut nodes: Vec<FlatNode> = (0..n)
        .map(|s| {
            let mut belief = vec![0.0; n];
            belief[s] = 1.0;
            FlatNode { path_len: 0, belief, children: None }
        })
        .collect();
    let mut frontier: Vec<usize> = (0..n).collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for idx in frontier {
            let mut kids = Vec::new();
            for a in 0..mdp.num_actions() {
                let belief = step(mdp, &nodes[idx].belief, a);
                let path_len = nodes[idx].path_len + 1;
                nodes.push(FlatNode { path_len, belief, children: None });
                kids.push(nodes.len() - 1);
            }
            next.extend(&kids);
            nodes[idx].children = Some(kids);
        }
        frontier = next;
    }
    nodes
}

/// Cost and successor distribution of choice `(a, blind)` at a node.
fn transition(mdp: &BaselineMdp, nodes: &[FlatNode], idx: usize, a: usize, blind: bool, k: f64) -> (f64, Vec<(usize, f64)>) {
    let node = &nodes[idx];
    let cost = expected(mdp, &node.belief, a);
    match (&node.children, blind) {
        (Some(kids), true) => (cost, vec![(kids[a], 1.0)]),
        _ => {
            let land = step(mdp, &node.belief, a);
            (cost + k, land.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect())
        }
    }
}

/// Optimal root values of the depth-1 truncation by evaluating every
/// deterministic stationary policy of the flat MDP (`(2|A|)^nodes` of them).
/// At the last layer a blind choice is treated as sensing with the same action.
pub fn flat_enumeration_depth1(mdp: &BaselineMdp, k: f64) -> Vec<f64> {
    let nodes = materialize(mdp, 1);
    let count = nodes.len();
    let choices = 2 * mdp.num_actions();
    let alpha = mdp.discount();
    let total = choices.pow(count as u32);
    let mut best = vec![f64::INFINITY; mdp.num_states()];
    for code in 0..total {
        let mut c = code;
        let mut p = DMatrix::<f64>::identity(count, count);
        let mut rhs = DVector::<f64>::zeros(count);
        for i in 0..count {
            let choice = c % choices;
            c /= choices;
            let (cost, succ) = transition(mdp, &nodes, i, choice / 2, choice % 2 == 1, k);
            rhs[i] = cost;
            for (j, q) in succ {
                p[(i, j)] -= alpha * q;
            }
        }
        let v = p.lu().solve(&rhs).expect("discounted system is nonsingular");
        for s in 0..mdp.num_states() {
            best[s] = best[s].min(v[s]);
        }
    }
    best
}

/// Optimal root values of the depth-`depth` truncation by value iteration
/// over every materialized node.
pub fn flat_value_iteration(mdp: &BaselineMdp, k: f64, depth: usize) -> Vec<f64> {
    let nodes = materialize(mdp, depth);
    let alpha = mdp.discount();
    let tables: Vec<Vec<(f64, Vec<(usize, f64)>)>> = (0..nodes.len())
        .map(|i| {
            (0..mdp.num_actions())
                .flat_map(|a| [false, true].map(|b| (a, b)))
                .filter(|&(_, blind)| !blind || nodes[i].children.is_some())
                .map(|(a, blind)| transition(mdp, &nodes, i, a, blind, k))
                .collect()
        })
        .collect();
    let mut v = vec![0.0; nodes.len()];
    let stop = 1e-13 * (1.0 - alpha) / alpha;
    for _ in 0..1_000_000 {
        let next: Vec<f64> = tables
            .iter()
            .map(|opts| {
                opts.iter()
                    .map(|(c, succ)| c + alpha * succ.iter().map(|&(j, q)| q * v[j]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < stop {
            break;
        }
    }
    v.truncate(mdp.num_states());
    v
}

/// Optimal baseline values by evaluating all `|A|^|S|` deterministic policies.
pub fn baseline_enumeration(mdp: &BaselineMdp) -> Vec<f64> {
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let alpha = mdp.discount();
    let mut best = vec![f64::INFINITY; n];
    for code in 0..m.pow(n as u32) {
        let mut c = code;
        let mut p = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for s in 0..n {
            let a = c % m;
            c /= m;
            rhs[s] = mdp.cost(s, a);
            for t in 0..n {
                p[(s, t)] -= alpha * mdp.prob(a, s, t);
            }
        }
        let v = p.lu().solve(&rhs).expect("nonsingular");
        for s in 0..n {
            best[s] = best[s].min(v[s]);
        }
    }
    best
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
