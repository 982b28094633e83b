use std::fmt;

use thiserror::Error;

/// First broken invariant found by [`BaselineMdp::validate`](crate::mdp::BaselineMdp::validate).
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeProbability { action: usize, row: usize, col: usize, value: f64 },
    RowSum { action: usize, row: usize, sum: f64 },
    NonFiniteCost { state: usize, action: usize },
    Discount(f64),
    InitialDistribution(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeProbability { action, row, col, value } => write!(
                f,
                "T(action {action}) has negative entry {value} at row {row}, column {col}"
            ),
            Violation::RowSum { action, row, sum } => {
                write!(f, "row {row} of T(action {action}) sums to {sum}, expected 1")
            }
            Violation::NonFiniteCost { state, action } => {
                write!(f, "cost C(state {state}, action {action}) is not finite")
            }
            Violation::Discount(d) => write!(f, "discount {d} is outside (0, 1)"),
            Violation::InitialDistribution(msg) => write!(f, "initial distribution: {msg}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(Violation),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("closed form requires a uniform sensing cost")]
    UnsupportedClosedForm,

    #[error(
        "enumeration budget exceeded: {nodes} nodes needed (|S| = {states}, |A|^{depth} = {branching}), budget {budget}"
    )]
    Budget { nodes: u128, states: usize, depth: usize, branching: u128, budget: u64 },

    #[error("malformed grid: {0}")]
    Grid(String),

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
