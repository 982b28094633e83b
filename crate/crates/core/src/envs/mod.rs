//! Environment generators, the `--env` spec syntax and the MDP file loader.

pub mod frozen_lake;
pub mod inventory;
pub mod random;
pub mod small;
pub mod taxi;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use frozen_lake::{gen_frozen_lake, Grid};
pub use inventory::gen_inventory;
pub use random::{random_mdp, random_sparse_mdp};
pub use small::{fig2, fig8, BLUE, LABELS, RED};
pub use taxi::gen_taxi;

use crate::error::{Error, Result};
use crate::mdp::BaselineMdp;

pub fn load_mdp(path: impl AsRef<Path>) -> Result<BaselineMdp> {
    BaselineMdp::from_json_str(&fs::read_to_string(path)?)
}

pub fn save_mdp(mdp: &BaselineMdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mdp.to_json_string())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    Fig2,
    Fig8,
    FrozenLake { map: String, slippery: bool },
    Taxi { stochastic: bool },
    Inventory,
    Random { states: usize, actions: usize, seed: u64, discount: f64 },
    File { path: PathBuf },
}

/// A named environment plus an optional discount override.
///
/// Accepted forms: `fig2`, `fig8`, `frozen_lake:<map>[:deterministic]`
/// (map is a preset name or rows joined by `/`), `taxi[:deterministic]`,
/// `inventory`, `random:<S>:<A>:<seed>[:<discount>]` and `file:<path>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub discount_override: Option<f64>,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        EnvSpec { kind, discount_override: None }
    }

    pub fn with_discount(mut self, discount: Option<f64>) -> Self {
        self.discount_override = discount;
        self
    }

    pub fn build(&self) -> Result<BaselineMdp> {
        let mdp = match &self.kind {
            EnvKind::Fig2 => fig2(),
            EnvKind::Fig8 => fig8(),
            EnvKind::FrozenLake { map, slippery } => {
                let text = frozen_lake::named_map(map).unwrap_or(map);
                gen_frozen_lake(&Grid::parse(text)?, *slippery)
            }
            EnvKind::Taxi { stochastic } => gen_taxi(*stochastic),
            EnvKind::Inventory => gen_inventory(),
            EnvKind::Random { states, actions, seed, discount } => {
                random_mdp(&mut ChaCha8Rng::seed_from_u64(*seed), *states, *actions, *discount)
            }
            EnvKind::File { path } => load_mdp(path)?,
        };
        match self.discount_override {
            Some(d) => {
                let mdp = mdp.with_discount(d);
                mdp.ensure_valid()?;
                Ok(mdp)
            }
            None => Ok(mdp),
        }
    }

    /// Multiplier applied to reported values (Frozen Lake rewards are tiny).
    pub fn display_scale(&self) -> f64 {
        match self.kind {
            EnvKind::FrozenLake { .. } => 1e3,
            _ => 1.0,
        }
    }

    /// Single-letter action names when the environment has them.
    pub fn action_labels(&self) -> Option<&'static [&'static str]> {
        match self.kind {
            EnvKind::Fig2 | EnvKind::Fig8 => Some(&LABELS),
            EnvKind::FrozenLake { .. } => Some(&["L", "D", "R", "U"]),
            EnvKind::Taxi { .. } => Some(&["S", "N", "E", "W", "P", "D"]),
            _ => None,
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EnvKind::Fig2 => write!(f, "fig2"),
            EnvKind::Fig8 => write!(f, "fig8"),
            EnvKind::FrozenLake { map, slippery } => {
                write!(f, "frozen_lake:{}", map.replace('\n', "/"))?;
                if !slippery {
                    write!(f, ":deterministic")?;
                }
                Ok(())
            }
            EnvKind::Taxi { stochastic: true } => write!(f, "taxi"),
            EnvKind::Taxi { stochastic: false } => write!(f, "taxi:deterministic"),
            EnvKind::Inventory => write!(f, "inventory"),
            EnvKind::Random { states, actions, seed, discount } => {
                write!(f, "random:{states}:{actions}:{seed}:{discount}")
            }
            EnvKind::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized environment spec {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let kind = match parts.as_slice() {
            ["fig2"] => EnvKind::Fig2,
            ["fig8"] => EnvKind::Fig8,
            ["frozen_lake" | "frozenlake"] => {
                EnvKind::FrozenLake { map: "4x4-default".into(), slippery: true }
            }
            ["frozen_lake" | "frozenlake", map] => EnvKind::FrozenLake { map: map.to_string(), slippery: true },
            ["frozen_lake" | "frozenlake", map, "deterministic"] => {
                EnvKind::FrozenLake { map: map.to_string(), slippery: false }
            }
            ["taxi"] => EnvKind::Taxi { stochastic: true },
            ["taxi", "deterministic"] => EnvKind::Taxi { stochastic: false },
            ["inventory"] => EnvKind::Inventory,
            ["random", states, actions, seed, rest @ ..] if rest.len() <= 1 => EnvKind::Random {
                states: states.parse().map_err(|_| bad())?,
                actions: actions.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
                discount: match rest.first() {
                    Some(d) => d.parse().map_err(|_| bad())?,
                    None => 0.9,
                },
            },
            ["file", ..] => EnvKind::File { path: PathBuf::from(&s["file:".len()..]) },
            _ => return Err(bad()),
        };
        if let EnvKind::Random { states: 0, .. } | EnvKind::Random { actions: 0, .. } = kind {
            return Err(bad());
        }
        Ok(EnvSpec::new(kind))
    }
}
