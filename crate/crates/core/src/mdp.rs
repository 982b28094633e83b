//! Finite baseline MDPs: representation, validation, value iteration and
//! exact policy evaluation, plus the tabular JSON file format.
//!
//! Costs are the internal convention. Files written with
//! `"convention": "reward"` are negated on load and negated back on save.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result, Violation};
use crate::linalg::{self, argmin};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Cost,
    Reward,
}

impl Convention {
    /// Sign that maps an internal cost-valued quantity to the reporting convention.
    pub fn sign(self) -> f64 {
        match self {
            Convention::Cost => 1.0,
            Convention::Reward => -1.0,
        }
    }
}

/// A finite discounted-cost MDP with per-action transition matrices.
///
/// Immutable after construction. A sparse copy of every transition row is
/// kept alongside the dense table because belief propagation dominates the
/// planners' running time.
#[derive(Debug, Clone)]
pub struct BaselineMdp {
    name: String,
    num_states: usize,
    num_actions: usize,
    discount: f64,
    /// Dense `[a][s][s']`.
    transitions: Vec<f64>,
    /// Dense `[s][a]`.
    costs: Vec<f64>,
    convention: Convention,
    initial_distribution: Option<Vec<f64>>,
    /// Indexed by `a * num_states + s`.
    sparse: Vec<Vec<(usize, f64)>>,
}

impl BaselineMdp {
    /// Builds an MDP from `transitions[a][s][s']` and `costs[s][a]`.
    ///
    /// Only shapes are checked here; stochasticity and the discount range are
    /// reported by [`validate`](Self::validate), which every solver runs first.
    pub fn new(
        name: impl Into<String>,
        transitions: Vec<Vec<Vec<f64>>>,
        costs: Vec<Vec<f64>>,
        discount: f64,
    ) -> Result<Self> {
        let num_actions = transitions.len();
        if num_actions == 0 {
            return Err(Error::Shape("at least one action is required".into()));
        }
        let num_states = transitions[0].len();
        if num_states == 0 {
            return Err(Error::Shape("at least one state is required".into()));
        }
        let mut dense = Vec::with_capacity(num_actions * num_states * num_states);
        for (a, matrix) in transitions.iter().enumerate() {
            if matrix.len() != num_states {
                return Err(Error::Shape(format!(
                    "T(action {a}) has {} rows, expected {num_states}",
                    matrix.len()
                )));
            }
            for (s, row) in matrix.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::Shape(format!(
                        "T(action {a}) row {s} has {} entries, expected {num_states}",
                        row.len()
                    )));
                }
                dense.extend_from_slice(row);
            }
        }
        if costs.len() != num_states {
            return Err(Error::Shape(format!(
                "cost table has {} rows, expected {num_states}",
                costs.len()
            )));
        }
        let mut flat_costs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in costs.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Shape(format!(
                    "cost row {s} has {} entries, expected {num_actions}",
                    row.len()
                )));
            }
            flat_costs.extend_from_slice(row);
        }
        Ok(Self::from_flat(name.into(), num_states, num_actions, dense, flat_costs, discount))
    }

    fn from_flat(
        name: String,
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        costs: Vec<f64>,
        discount: f64,
    ) -> Self {
        let sparse = (0..num_actions * num_states)
            .map(|idx| {
                let row = &transitions[idx * num_states..(idx + 1) * num_states];
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect();
        BaselineMdp {
            name,
            num_states,
            num_actions,
            discount,
            transitions,
            costs,
            convention: Convention::Cost,
            initial_distribution: None,
            sparse,
        }
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_initial_distribution(mut self, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != self.num_states {
            return Err(Error::Shape(format!(
                "initial distribution has {} entries, expected {}",
                dist.len(),
                self.num_states
            )));
        }
        self.initial_distribution = Some(dist);
        Ok(self)
    }

    /// Same dynamics and costs under a different discount factor.
    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn convention(&self) -> Convention {
        self.convention
    }
    pub fn initial_distribution(&self) -> Option<&[f64]> {
        self.initial_distribution.as_deref()
    }

    /// The initial distribution, or uniform over states when none is set.
    pub fn start_distribution(&self) -> Vec<f64> {
        match &self.initial_distribution {
            Some(d) => d.clone(),
            None => vec![1.0 / self.num_states as f64; self.num_states],
        }
    }

    /// States that every action maps back to themselves at zero cost.
    pub fn terminal_states(&self) -> Vec<bool> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions).all(|a| self.cost(s, a) == 0.0 && self.row(a, s) == [(s, 1.0)])
            })
            .collect()
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.costs[s * self.num_actions + a]
    }

    pub fn prob(&self, a: usize, s: usize, next: usize) -> f64 {
        self.transitions[(a * self.num_states + s) * self.num_states + next]
    }

    /// Nonzero entries of row `s` of `T(a)`.
    pub fn row(&self, a: usize, s: usize) -> &[(usize, f64)] {
        &self.sparse[a * self.num_states + s]
    }

    /// Cost column `C(a)` as a dense vector over states.
    pub fn cost_column(&self, a: usize) -> Vec<f64> {
        (0..self.num_states).map(|s| self.cost(s, a)).collect()
    }

    pub fn cost_range(&self) -> (f64, f64) {
        let min = self.costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Row vector times `T(a)`.
    pub fn propagate(&self, belief: &[f64], a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        self.propagate_into(belief, a, &mut out);
        out
    }

    pub fn propagate_into(&self, belief: &[f64], a: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (s, &w) in belief.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for &(next, p) in self.row(a, s) {
                out[next] += w * p;
            }
        }
    }

    /// `belief · C(a)`.
    pub fn expected_cost(&self, belief: &[f64], a: usize) -> f64 {
        belief
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(s, &w)| w * self.cost(s, a))
            .sum()
    }

    /// Column vector `T(a) · v`.
    pub fn apply(&self, a: usize, v: &[f64]) -> Vec<f64> {
        (0..self.num_states)
            .map(|s| self.row(a, s).iter().map(|&(j, p)| p * v[j]).sum())
            .collect()
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Violation::Discount(self.discount));
        }
        let n = self.num_states;
        for a in 0..self.num_actions {
            for s in 0..n {
                let row = &self.transitions[(a * n + s) * n..(a * n + s + 1) * n];
                let mut sum = 0.0;
                for (col, &p) in row.iter().enumerate() {
                    if p < 0.0 || !p.is_finite() {
                        return Err(Violation::NegativeProbability { action: a, row: s, col, value: p });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Violation::RowSum { action: a, row: s, sum });
                }
            }
        }
        for s in 0..n {
            for a in 0..self.num_actions {
                if !self.cost(s, a).is_finite() {
                    return Err(Violation::NonFiniteCost { state: s, action: a });
                }
            }
        }
        if let Some(d) = &self.initial_distribution {
            if d.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Violation::InitialDistribution("negative or non-finite entry".into()));
            }
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Violation::InitialDistribution(format!("sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidMdp)
    }

    /// One Bellman backup `Q(s,a) = C(s,a) + α T(a) v` as an `[s][a]` table.
    pub fn backup(&self, v: &[f64]) -> Vec<f64> {
        let (n, m) = (self.num_states, self.num_actions);
        let mut q = vec![0.0; n * m];
        for a in 0..m {
            for s in 0..n {
                let next: f64 = self.row(a, s).iter().map(|&(j, p)| p * v[j]).sum();
                q[s * m + a] = self.cost(s, a) + self.discount * next;
            }
        }
        q
    }

    // ---- JSON file format ----

    pub fn to_json_value(&self) -> Value {
        let file = MdpFile::from(self);
        serde_json::to_value(file).expect("MDP serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&MdpFile::from(self)).expect("MDP serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json_value(&value)
    }

    /// Parses the tabular schema, naming the offending field on failure,
    /// then runs [`validate`](Self::validate).
    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| schema("$", "expected a JSON object"))?;
        let field = |key: &str| obj.get(key).ok_or_else(|| schema(key, "missing required field"));

        let name = field("name")?
            .as_str()
            .ok_or_else(|| schema("name", "expected a string"))?
            .to_string();
        let num_states = as_count(field("num_states")?, "num_states")?;
        let num_actions = as_count(field("num_actions")?, "num_actions")?;
        let discount = field("discount")?
            .as_f64()
            .ok_or_else(|| schema("discount", "expected a number"))?;
        let convention = match field("convention")?.as_str() {
            Some("cost") => Convention::Cost,
            Some("reward") => Convention::Reward,
            _ => return Err(schema("convention", "expected \"cost\" or \"reward\"")),
        };

        let t_json = field("transitions")?
            .as_array()
            .ok_or_else(|| schema("transitions", "expected an array"))?;
        if t_json.len() != num_actions {
            return Err(schema(
                "transitions",
                &format!("expected {num_actions} matrices, found {}", t_json.len()),
            ));
        }
        let mut transitions = Vec::with_capacity(num_actions * num_states * num_states);
        for (a, matrix) in t_json.iter().enumerate() {
            let path = format!("transitions[{a}]");
            let rows = as_array(matrix, &path, num_states)?;
            for (s, row) in rows.iter().enumerate() {
                let path = format!("transitions[{a}][{s}]");
                for (j, x) in as_array(row, &path, num_states)?.iter().enumerate() {
                    transitions.push(as_number(x, &format!("{path}[{j}]"))?);
                }
            }
        }

        let c_json = as_array(field("costs")?, "costs", num_states)?;
        let sign = convention.sign();
        let mut costs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in c_json.iter().enumerate() {
            let path = format!("costs[{s}]");
            for (a, x) in as_array(row, &path, num_actions)?.iter().enumerate() {
                costs.push(sign * as_number(x, &format!("{path}[{a}]"))?);
            }
        }

        let mut mdp = Self::from_flat(name, num_states, num_actions, transitions, costs, discount)
            .with_convention(convention);
        match obj.get("initial_distribution") {
            None | Some(Value::Null) => {}
            Some(v) => {
                let entries = as_array(v, "initial_distribution", num_states)?;
                let dist = entries
                    .iter()
                    .enumerate()
                    .map(|(i, x)| as_number(x, &format!("initial_distribution[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                mdp.initial_distribution = Some(dist);
            }
        }
        mdp.ensure_valid()?;
        Ok(mdp)
    }
}

fn schema(path: &str, message: &str) -> Error {
    Error::Schema { path: path.to_string(), message: message.to_string() }
}

fn as_count(v: &Value, path: &str) -> Result<usize> {
    match v.as_u64() {
        Some(n) if n > 0 => Ok(n as usize),
        _ => Err(schema(path, "expected a positive integer")),
    }
}

fn as_number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(path, "expected a number"))
}

fn as_array<'a>(v: &'a Value, path: &str, len: usize) -> Result<&'a Vec<Value>> {
    let arr = v.as_array().ok_or_else(|| schema(path, "expected an array"))?;
    if arr.len() != len {
        return Err(schema(path, &format!("expected {len} entries, found {}", arr.len())));
    }
    Ok(arr)
}

#[derive(Serialize)]
struct MdpFile {
    name: String,
    num_states: usize,
    num_actions: usize,
    discount: f64,
    transitions: Vec<Vec<Vec<f64>>>,
    costs: Vec<Vec<f64>>,
    convention: Convention,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_distribution: Option<Vec<f64>>,
}

impl From<&BaselineMdp> for MdpFile {
    fn from(m: &BaselineMdp) -> Self {
        let n = m.num_states;
        let sign = m.convention.sign();
        MdpFile {
            name: m.name.clone(),
            num_states: n,
            num_actions: m.num_actions,
            discount: m.discount,
            transitions: (0..m.num_actions)
                .map(|a| (0..n).map(|s| (0..n).map(|j| m.prob(a, s, j)).collect()).collect())
                .collect(),
            costs: (0..n)
                .map(|s| (0..m.num_actions).map(|a| sign * m.cost(s, a)).collect())
                .collect(),
            convention: m.convention,
            initial_distribution: m.initial_distribution.clone(),
        }
    }
}

/// Optimal value and action-value functions of a baseline MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineSolution {
    pub v_star: Vec<f64>,
    /// `[s][a]`, flattened row-major.
    pub q_star: Vec<f64>,
    pub pi_star: Vec<usize>,
    pub num_actions: usize,
    /// Sup-norm Bellman residual of `v_star`.
    pub residual: f64,
}

impl BaselineSolution {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q_star[s * self.num_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q_star[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Builds the solution from a value vector: `Q = backup(v)`, `V* = min_a Q`.
    ///
    /// Taking `V*` as the exact row minimum of `Q*` keeps `Q*(s,a) - V*(s) >= 0`
    /// bit-for-bit, which the sensing tests downstream rely on.
    pub fn from_values(mdp: &BaselineMdp, v: &[f64]) -> Self {
        let q_star = mdp.backup(v);
        let m = mdp.num_actions();
        let (pi_star, v_star): (Vec<usize>, Vec<f64>) = (0..mdp.num_states())
            .map(|s| argmin(q_star[s * m..(s + 1) * m].iter().copied()))
            .unzip();
        let residual = v_star
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        BaselineSolution { v_star, q_star, pi_star, num_actions: m, residual }
    }
}

/// Value iteration until the iterate gap is at most `tol (1-α) / (2α)`, which
/// bounds the sup-norm error of the returned `V*` by `tol`.
pub fn solve_baseline(mdp: &BaselineMdp, tol: f64) -> Result<BaselineSolution> {
    mdp.ensure_valid()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let alpha = mdp.discount();
    let stop = tol * (1.0 - alpha) / (2.0 * alpha);
    let m = mdp.num_actions();
    let mut v = vec![0.0; mdp.num_states()];
    loop {
        let q = mdp.backup(&v);
        let next: Vec<f64> = q.chunks(m).map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        let gap = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if gap <= stop {
            break;
        }
    }
    Ok(BaselineSolution::from_values(mdp, &v))
}

/// Exact value of a stationary baseline policy via a direct solve of
/// `(I - α P_π) V = c_π`.
pub fn evaluate_baseline_policy(mdp: &BaselineMdp, policy: &[usize]) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    if policy.len() != n {
        return Err(Error::Shape(format!("policy has {} entries, expected {n}", policy.len())));
    }
    if let Some(&a) = policy.iter().find(|&&a| a >= mdp.num_actions()) {
        return Err(Error::InvalidArgument(format!("action {a} out of range")));
    }
    let costs: Vec<f64> = (0..n).map(|s| mdp.cost(s, policy[s])).collect();
    let weights = vec![mdp.discount(); n];
    let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|s| mdp.row(policy[s], s).to_vec()).collect();
    let (values, _) = linalg::solve_discounted_system(&costs, &weights, &rows, linalg::DEFAULT_DENSE_LIMIT)?;
    Ok(values)
}

/// Successive value-iteration iterates, for contraction diagnostics.
pub fn value_iteration_trace(mdp: &BaselineMdp, steps: usize) -> Vec<Vec<f64>> {
    let m = mdp.num_actions();
    let mut v = vec![0.0; mdp.num_states()];
    let mut out = vec![v.clone()];
    for _ in 0..steps {
        let q = mdp.backup(&v);
        v = q.chunks(m).map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        out.push(v.clone());
    }
    out
}
