//! The 5×5 taxi domain.
//!
//! State index is `((row * 5 + col) * 5 + passenger) * 4 + destination`, where
//! passenger 0..4 is a pickup location and 4 means "in the taxi". Actions are
//! SOUTH, NORTH, EAST, WEST, PICKUP, DROPOFF. Each step earns -1, a delivery
//! earns +20 and an illegal pickup or dropoff earns -10. Delivered states
//! (passenger at its destination) are absorbing with zero reward.
//!
//! In the stochastic variant each move goes in the intended direction with
//! probability 0.8 and in each perpendicular direction with probability 0.1.

use crate::mdp::{BaselineMdp, Convention};

pub const SOUTH: usize = 0;
pub const NORTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;
pub const PICKUP: usize = 4;
pub const DROPOFF: usize = 5;
pub const DISCOUNT: f64 = 0.95;
pub const NUM_STATES: usize = 500;

const MAP: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];

pub const LOCATIONS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

pub fn encode(row: usize, col: usize, passenger: usize, dest: usize) -> usize {
    ((row * 5 + col) * 5 + passenger) * 4 + dest
}

pub fn decode(s: usize) -> (usize, usize, usize, usize) {
    let dest = s % 4;
    let rest = s / 4;
    let passenger = rest % 5;
    let rest = rest / 5;
    (rest / 5, rest % 5, passenger, dest)
}

pub fn is_delivered(s: usize) -> bool {
    let (_, _, p, d) = decode(s);
    p == d
}

/// The 300 states an episode can start in: passenger waiting at a pickup
/// location different from its destination.
pub fn is_start_state(s: usize) -> bool {
    let (_, _, p, d) = decode(s);
    p < 4 && p != d
}

fn move_taxi(row: usize, col: usize, dir: usize) -> (usize, usize) {
    let desc = MAP[1 + row].as_bytes();
    match dir {
        SOUTH => ((row + 1).min(4), col),
        NORTH => (row.saturating_sub(1), col),
        EAST if desc[2 * col + 2] == b':' => (row, (col + 1).min(4)),
        WEST if desc[2 * col] == b':' => (row, col.saturating_sub(1)),
        _ => (row, col),
    }
}

fn perpendicular(dir: usize) -> [usize; 2] {
    match dir {
        SOUTH | NORTH => [EAST, WEST],
        _ => [NORTH, SOUTH],
    }
}

/// Builds the taxi MDP in the reward convention with a uniform start over
/// the 300 valid start states.
pub fn gen_taxi(stochastic: bool) -> BaselineMdp {
    let n = NUM_STATES;
    let mut transitions = vec![vec![vec![0.0; n]; n]; 6];
    let mut rewards = vec![vec![0.0; 6]; n];
    for s in 0..n {
        let (row, col, pass, dest) = decode(s);
        for a in 0..6 {
            if is_delivered(s) {
                transitions[a][s][s] = 1.0;
                continue;
            }
            if a < 4 {
                let outcomes: Vec<(usize, f64)> = if stochastic {
                    let [p1, p2] = perpendicular(a);
                    vec![(a, 0.8), (p1, 0.1), (p2, 0.1)]
                } else {
                    vec![(a, 1.0)]
                };
                for (dir, p) in outcomes {
                    let (r, c) = move_taxi(row, col, dir);
                    transitions[a][s][encode(r, c, pass, dest)] += p;
                }
                rewards[s][a] = -1.0;
                continue;
            }
            let taxi = (row, col);
            let (next_pass, reward) = if a == PICKUP {
                if pass < 4 && taxi == LOCATIONS[pass] {
                    (4, -1.0)
                } else {
                    (pass, -10.0)
                }
            } else if pass == 4 && taxi == LOCATIONS[dest] {
                (dest, 20.0)
            } else if pass == 4 && LOCATIONS.contains(&taxi) {
                (LOCATIONS.iter().position(|&l| l == taxi).expect("contained"), -1.0)
            } else {
                (pass, -10.0)
            };
            transitions[a][s][encode(row, col, next_pass, dest)] = 1.0;
            rewards[s][a] = reward;
        }
    }
    let costs = rewards.iter().map(|row| row.iter().map(|r| -r).collect()).collect();
    let starts = (0..n).filter(|&s| is_start_state(s)).count() as f64;
    let init = (0..n).map(|s| if is_start_state(s) { 1.0 / starts } else { 0.0 }).collect();
    let name = if stochastic { "taxi_stochastic" } else { "taxi" };
    BaselineMdp::new(name, transitions, costs, DISCOUNT)
        .expect("consistent shapes")
        .with_convention(Convention::Reward)
        .with_initial_distribution(init)
        .expect("500 entries")
}
