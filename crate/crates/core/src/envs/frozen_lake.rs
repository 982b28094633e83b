//! Frozen Lake grids (`S` start, `F` frozen, `H` hole, `G` goal).
//!
//! Actions are LEFT, DOWN, RIGHT, UP. On slippery ice the intended move and
//! both perpendicular moves each happen with probability 1/3; moving into a
//! wall leaves the agent in place. Entering `G` earns reward 1. Holes and the
//! goal are absorbing with zero reward. States are indexed row-major.

use crate::error::{Error, Result};
use crate::mdp::{BaselineMdp, Convention};

pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;
pub const DISCOUNT: f64 = 0.9;

pub const MAP_4X4_DEFAULT: &str = "SFFF\nFHFH\nFFFH\nHFFG";
pub const MAP_4X4_HARD: &str = "FHSF\nFGHF\nFHHF\nFFFF";
pub const MAP_4X4_HARD_NEAR: &str = "FHFF\nFGHF\nFHHF\nFFFS";
pub const MAP_8X8: &str = "SFFFFFFF\nFFFFFFFF\nFFFHFFFF\nFFFFFHFF\nFFFHFFFF\nFHHFFFHF\nFHFFHFHF\nFFFHFFFG";

pub fn named_map(name: &str) -> Option<&'static str> {
    match name {
        "4x4-default" | "4x4" => Some(MAP_4X4_DEFAULT),
        "4x4-hard" => Some(MAP_4X4_HARD),
        "4x4-hard-near" => Some(MAP_4X4_HARD_NEAR),
        "8x8" | "8x8-default" => Some(MAP_8X8),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<u8>,
}

impl Grid {
    /// Parses rows separated by newlines or `/`; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .split(['\n', '/'])
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(Error::Grid("empty grid".into()));
        }
        let cols = lines[0].len();
        let mut cells = Vec::with_capacity(lines.len() * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.len() != cols {
                return Err(Error::Grid(format!("row {r} has {} cells, expected {cols}", line.len())));
            }
            for (c, ch) in line.bytes().enumerate() {
                if !matches!(ch, b'S' | b'F' | b'H' | b'G') {
                    return Err(Error::Grid(format!("unknown symbol {:?} at ({r}, {c})", ch as char)));
                }
                cells.push(ch);
            }
        }
        for sym in [b'S', b'G'] {
            let count = cells.iter().filter(|&&c| c == sym).count();
            if count != 1 {
                return Err(Error::Grid(format!("expected exactly one {:?}, found {count}", sym as char)));
            }
        }
        Ok(Grid { rows: lines.len(), cols, cells })
    }

    pub fn start(&self) -> usize {
        self.cells.iter().position(|&c| c == b'S').expect("validated")
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        matches!(self.cells[s], b'H' | b'G')
    }

    pub fn step(&self, s: usize, a: usize) -> usize {
        let (mut r, mut c) = (s / self.cols, s % self.cols);
        match a {
            LEFT => c = c.saturating_sub(1),
            DOWN => r = (r + 1).min(self.rows - 1),
            RIGHT => c = (c + 1).min(self.cols - 1),
            UP => r = r.saturating_sub(1),
            _ => unreachable!("four actions"),
        }
        r * self.cols + c
    }
}

/// Builds the Frozen Lake MDP (reward convention, point-mass start on `S`).
pub fn gen_frozen_lake(grid: &Grid, slippery: bool) -> BaselineMdp {
    let n = grid.rows * grid.cols;
    let mut transitions = vec![vec![vec![0.0; n]; n]; 4];
    let mut rewards = vec![vec![0.0; 4]; n];
    for s in 0..n {
        for a in 0..4 {
            if grid.is_terminal(s) {
                transitions[a][s][s] = 1.0;
                continue;
            }
            let moves: Vec<(usize, f64)> = if slippery {
                [(a + 3) % 4, a, (a + 1) % 4].into_iter().map(|b| (b, 1.0 / 3.0)).collect()
            } else {
                vec![(a, 1.0)]
            };
            for (b, p) in moves {
                let next = grid.step(s, b);
                transitions[a][s][next] += p;
                if grid.cells[next] == b'G' {
                    rewards[s][a] += p;
                }
            }
        }
    }
    let costs = rewards.iter().map(|row| row.iter().map(|r| -r).collect()).collect();
    let mut start = vec![0.0; n];
    start[grid.start()] = 1.0;
    let name = if slippery { "frozen_lake" } else { "frozen_lake_deterministic" };
    BaselineMdp::new(name, transitions, costs, DISCOUNT)
        .expect("consistent shapes")
        .with_convention(Convention::Reward)
        .with_initial_distribution(start)
        .expect("start has |S| entries")
}
