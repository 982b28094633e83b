//! Planning for discounted-cost MDPs in which observing the next state costs
//! extra.
//!
//! The agent may act "blind" for a while, tracking a belief over the hidden
//! state, and pay to sense only when it is worth it. The crate provides the
//! baseline MDP machinery, belief-state algebra, exact evaluation of
//! prefix-then-sense policies, two policy generators (selective policy
//! improvement and act-then-measure), exact solvers for depth-truncated
//! problems together with optimality certificates, benchmark environments
//! and a CLI.

pub mod atm;
pub mod bench;
pub mod belief;
pub mod cli;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod policy;
pub mod problem;
pub mod sim;
pub mod spi;
pub mod truncated;

pub use belief::{BeliefState, SensingCostModel};
pub use error::{Error, Result, Violation};
pub use mdp::{solve_baseline, BaselineMdp, BaselineSolution, Convention};
pub use policy::{as_policy, evaluate_on_roots, Plan, RootValueTable, SensingPolicy};
pub use problem::SensingProblem;
