//! Monte Carlo rollouts of a sensing policy.
//!
//! The hidden state is simulated exactly: blind actions move it without
//! revealing it, and the sensing action at the end of each plan reveals the
//! landing state, which becomes the next root. Used to cross-check the exact
//! evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::mdp::BaselineMdp;
use crate::policy::SensingPolicy;
use crate::problem::SensingProblem;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    pub horizon: usize,
    /// Largest possible discounted cost beyond the horizon.
    pub tail_bound: f64,
}

impl McEstimate {
    /// Whether `value` lies within `z` standard errors of the mean, allowing
    /// for the truncated tail.
    pub fn agrees_with(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.stderr + self.tail_bound + 1e-12
    }
}

fn cost_magnitude(problem: &SensingProblem) -> f64 {
    let (lo, hi) = problem.mdp.cost_range();
    lo.abs().max(hi.abs()) + problem.cost.sup().unwrap_or(0.0)
}

/// Steps after which the discounted tail is below `1e-6`.
pub fn auto_horizon(problem: &SensingProblem) -> usize {
    let range = cost_magnitude(problem);
    let alpha = problem.discount();
    if range == 0.0 {
        return 1;
    }
    let h = ((1e-6 * (1.0 - alpha) / range).ln() / alpha.ln()).ceil();
    (h.max(1.0) as usize).min(1_000_000)
}

fn sample(mdp: &BaselineMdp, a: usize, s: usize, rng: &mut impl Rng) -> usize {
    let row = mdp.row(a, s);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(j, p) in row {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.last().expect("rows are nonempty").0
}

fn sample_start(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (s, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Discounted cost of `episodes` seeded rollouts from `start` (a
/// distribution over roots). `horizon` defaults to [`auto_horizon`].
///
/// Episodes are split into fixed chunks with their own RNG streams, so the
/// estimate does not depend on the number of threads.
pub fn monte_carlo_eval(
    problem: &SensingProblem,
    policy: &SensingPolicy,
    start: &[f64],
    episodes: usize,
    horizon: Option<usize>,
    seed: u64,
) -> Result<McEstimate> {
    let mdp = &problem.mdp;
    let n = mdp.num_states();
    policy.check(n, mdp.num_actions())?;
    if start.len() != n || episodes == 0 {
        return Err(Error::InvalidArgument("start distribution must have |S| entries and episodes > 0".into()));
    }
    let horizon = horizon.unwrap_or_else(|| auto_horizon(problem));
    let alpha = mdp.discount();
    // Sensing cost depends only on the plan's final belief.
    let sense_cost: Vec<f64> = policy
        .plans
        .iter()
        .enumerate()
        .map(|(root, plan)| {
            let b = BeliefState::from_path(mdp, root, &plan.blind_prefix);
            problem.cost.cost(&b.belief, plan.sense_action)
        })
        .collect();

    let chunks = episodes.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(episodes - c * CHUNK);
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..count {
                let mut s = sample_start(start, &mut rng);
                let (mut total, mut g, mut t) = (0.0, 1.0, 0);
                'episode: loop {
                    let root = s;
                    let plan = &policy.plans[root];
                    for &a in &plan.blind_prefix {
                        if t == horizon {
                            break 'episode;
                        }
                        total += g * mdp.cost(s, a);
                        s = sample(mdp, a, s, &mut rng);
                        g *= alpha;
                        t += 1;
                    }
                    if t == horizon {
                        break;
                    }
                    let a = plan.sense_action;
                    total += g * (mdp.cost(s, a) + sense_cost[root]);
                    s = sample(mdp, a, s, &mut rng);
                    g *= alpha;
                    t += 1;
                }
                sum += total;
                sq += total * total;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let m = episodes as f64;
    let mean = sum / m;
    let var = if episodes > 1 { ((sq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
    let tail_bound = alpha.powi(horizon.min(i32::MAX as usize) as i32) * cost_magnitude(problem) / (1.0 - alpha);
    Ok(McEstimate { mean, stderr: (var / m).sqrt(), episodes, horizon, tail_bound })
}
