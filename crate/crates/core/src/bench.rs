//! Benchmark harness: every method at every sensing cost on one environment,
//! valued exactly at the environment's start distribution.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::atm::atm_policy;
use crate::belief::SensingCostModel;
use crate::error::{Error, Result};
use crate::mdp::{BaselineMdp, BaselineSolution, Convention};
use crate::policy::{as_policy, evaluate_on_roots, SensingPolicy};
use crate::problem::SensingProblem;
use crate::sim::monte_carlo_eval;
use crate::spi::{spi, SpiOptions};
use crate::truncated::{solve_truncated, TruncatedOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum Method {
    As,
    Atm,
    Spi,
    Truncated,
}

/// Whether sensing is charged once the belief lies entirely on absorbing
/// zero-cost states, i.e. after the episode has ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum TerminalSensing {
    Free,
    Charged,
}

impl TerminalSensing {
    pub fn cost_model(self, k: f64, mdp: &BaselineMdp) -> SensingCostModel {
        match self {
            TerminalSensing::Free if mdp.terminal_states().iter().any(|&t| t) => {
                SensingCostModel::terminal_free(k, mdp)
            }
            _ => SensingCostModel::Uniform(k),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub truncated_depth: usize,
    pub truncated: TruncatedOptions,
    pub spi: SpiOptions,
    pub atm_depth_cap: usize,
    pub terminal_sensing: TerminalSensing,
    /// Record wall-clock seconds (off gives byte-identical output across runs).
    pub timing: bool,
    /// Add Monte Carlo cross-check rows: `(episodes, seed)`.
    pub monte_carlo: Option<(usize, u64)>,
    /// Multiplier applied to reported values.
    pub scale: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::As, Method::Atm, Method::Spi, Method::Truncated],
            truncated_depth: 3,
            truncated: TruncatedOptions { record_nodes: false, ..TruncatedOptions::default() },
            spi: SpiOptions::default(),
            atm_depth_cap: crate::atm::DEFAULT_DEPTH_CAP,
            terminal_sensing: TerminalSensing::Free,
            timing: true,
            monte_carlo: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub env: String,
    pub k: f64,
    pub method: String,
    pub params: String,
    /// Start-distribution value in the environment's own convention
    /// (rewards for reward environments), times the display scale.
    pub value: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
}

struct Cell {
    method: String,
    params: String,
    policy: Option<SensingPolicy>,
    value: f64,
    seconds: f64,
}

fn run_method(problem: &SensingProblem, method: Method, cfg: &BenchConfig, dist: &[f64]) -> Result<Cell> {
    let start = Instant::now();
    let (label, params, policy) = match method {
        Method::As => ("AS".to_string(), String::new(), as_policy(&problem.baseline)),
        Method::Atm => {
            let atm = atm_policy(problem, cfg.atm_depth_cap)?;
            let params = format!(
                "depth_cap={};capped={};bound={:e}",
                cfg.atm_depth_cap,
                atm.capped.len(),
                atm.error_bound
            );
            ("ATM".to_string(), params, atm.policy)
        }
        Method::Spi => {
            let res = spi(problem, &as_policy(&problem.baseline), cfg.spi)?;
            let params = format!("maxsteps={};delta={:e};updates={}", res.maxsteps, cfg.spi.delta, res.updates);
            ("SPI".to_string(), params, res.policy)
        }
        Method::Truncated => {
            let n = cfg.truncated_depth;
            let label = format!("Truncated-{n}");
            match solve_truncated(problem, n, cfg.truncated) {
                Ok(sol) => (label, format!("N={n}"), sol.policy),
                Err(e @ Error::Budget { .. }) => {
                    return Ok(Cell {
                        method: label,
                        params: format!("skipped: {e}"),
                        policy: None,
                        value: f64::NAN,
                        seconds: start.elapsed().as_secs_f64(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    };
    let value = evaluate_on_roots(problem, &policy)?.fold(dist);
    let seconds = start.elapsed().as_secs_f64();
    Ok(Cell { method: label, params, policy: Some(policy), value, seconds })
}

/// Runs every configured method at every `k`.
pub fn run_bench(env: &str, mdp: &BaselineMdp, ks: &[f64], cfg: &BenchConfig) -> Result<BenchmarkReport> {
    let baseline: BaselineSolution = crate::mdp::solve_baseline(mdp, crate::problem::BASELINE_TOL)?;
    let dist = mdp.start_distribution();
    let sign = match mdp.convention() {
        Convention::Cost => 1.0,
        Convention::Reward => -1.0,
    };
    let shown = |v: f64| sign * cfg.scale * v;
    let mut rows = Vec::new();
    for &k in ks {
        let cost = cfg.terminal_sensing.cost_model(k, mdp);
        let problem = SensingProblem { mdp: mdp.clone(), cost, baseline: baseline.clone() };
        problem.cost.check(mdp.num_states(), mdp.num_actions())?;
        for &method in &cfg.methods {
            let cell = run_method(&problem, method, cfg, &dist)?;
            rows.push(BenchRow {
                env: env.to_string(),
                k,
                method: cell.method.clone(),
                params: cell.params.clone(),
                value: shown(cell.value),
                seconds: cfg.timing.then_some(cell.seconds),
            });
            if let (Some((episodes, seed)), Some(policy)) = (cfg.monte_carlo, &cell.policy) {
                let est = monte_carlo_eval(&problem, policy, &dist, episodes, None, seed)?;
                rows.push(BenchRow {
                    env: env.to_string(),
                    k,
                    method: format!("{} MC", cell.method),
                    params: format!(
                        "episodes={episodes};seed={seed};stderr={:e}",
                        cfg.scale * est.stderr
                    ),
                    value: shown(est.mean),
                    seconds: None,
                });
            }
        }
    }
    Ok(BenchmarkReport { rows })
}

impl BenchmarkReport {
    pub fn value(&self, k: f64, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k && r.method == method).map(|r| r.value)
    }

    /// CSV with columns `env, k, method, params, value, seconds`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["env", "k", "method", "params", "value", "seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.env.clone(),
                r.k.to_string(),
                r.method.clone(),
                r.params.clone(),
                r.value.to_string(),
                r.seconds.map(|s| format!("{s:.6}")).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, values to four decimals.
    pub fn to_table(&self) -> String {
        let header = ["env", "k", "method", "value", "seconds", "params"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.env.clone(),
                    r.k.to_string(),
                    r.method.clone(),
                    format!("{:.4}", r.value),
                    r.seconds.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into()),
                    r.params.clone(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 3 || i == 4 { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}
