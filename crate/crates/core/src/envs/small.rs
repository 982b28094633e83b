//! The two-state, two-action example MDPs used throughout the tests.

use crate::mdp::BaselineMdp;

pub const RED: usize = 0;
pub const BLUE: usize = 1;
pub const LABELS: [&str; 2] = ["R", "B"];

/// Two-state example with a small always-sense threshold, discount 0.5.
pub fn fig2() -> BaselineMdp {
    BaselineMdp::new(
        "fig2",
        vec![
            // Red
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            // Blue
            vec![vec![0.3, 0.7], vec![0.9, 0.1]],
        ],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        0.5,
    )
    .expect("static shape")
}

/// Two-state instance whose truncated optima stay put for three depths and
/// then start blinding from root 1; discount 0.5.
pub fn fig8() -> BaselineMdp {
    BaselineMdp::new(
        "fig8",
        vec![
            vec![vec![0.28, 0.72], vec![0.934, 0.066]],
            vec![vec![0.31, 0.69], vec![0.481, 0.519]],
        ],
        vec![vec![0.066, 0.29], vec![0.502, 0.41]],
        0.5,
    )
    .expect("static shape")
}
