use crate::belief::SensingCostModel;
use crate::error::Result;
use crate::mdp::{solve_baseline, BaselineMdp, BaselineSolution};

/// Tolerance used for the baseline solve when none is given.
pub const BASELINE_TOL: f64 = 1e-12;

/// A baseline MDP, its sensing cost model and its solved optimum.
///
/// Every planner in the crate works from one of these so the baseline is
/// solved once.
#[derive(Debug, Clone)]
pub struct SensingProblem {
    pub mdp: BaselineMdp,
    pub cost: SensingCostModel,
    pub baseline: BaselineSolution,
}

impl SensingProblem {
    pub fn new(mdp: BaselineMdp, cost: SensingCostModel) -> Result<Self> {
        Self::with_tolerance(mdp, cost, BASELINE_TOL)
    }

    pub fn with_tolerance(mdp: BaselineMdp, cost: SensingCostModel, tol: f64) -> Result<Self> {
        cost.check(mdp.num_states(), mdp.num_actions())?;
        let baseline = solve_baseline(&mdp, tol)?;
        Ok(SensingProblem { mdp, cost, baseline })
    }

    pub fn uniform(mdp: BaselineMdp, k: f64) -> Result<Self> {
        Self::new(mdp, SensingCostModel::Uniform(k))
    }

    /// Same baseline, different sensing cost; skips re-solving the baseline.
    pub fn with_cost(&self, cost: SensingCostModel) -> Result<Self> {
        cost.check(self.mdp.num_states(), self.mdp.num_actions())?;
        Ok(SensingProblem { mdp: self.mdp.clone(), cost, baseline: self.baseline.clone() })
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    pub fn discount(&self) -> f64 {
        self.mdp.discount()
    }
}
