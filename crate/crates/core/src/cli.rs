//! The `opsense` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad data, 3 enumeration budget
//! exceeded.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::atm::{atm_policy, DEFAULT_DEPTH_CAP};
use crate::bench::{run_bench, BenchConfig, Method, TerminalSensing};
use crate::envs::{save_mdp, EnvSpec};
use crate::error::{Error, Result};
use crate::mdp::{solve_baseline, BaselineMdp, Convention};
use crate::policy::{as_policy, evaluate_on_roots, SensingPolicy};
use crate::problem::{SensingProblem, BASELINE_TOL};
use crate::sim::monte_carlo_eval;
use crate::spi::{spi, SpiOptions};
use crate::truncated::{always_sense_threshold, solve_truncated, CertificateReport, TruncatedOptions, DEFAULT_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "opsense", version, about = "Planning with costly state observations on tabular MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the baseline MDP and dump V*, Q* and the greedy policy.
    Solve {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sensing cost below which always-sensing is optimal.
    Threshold {
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Solve the depth-limited sensing problem at one depth.
    Truncate {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long, default_value = "3")]
        depth: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Certificate sweep over a range of depths.
    Certify {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        cost: CostArgs,
        /// A single depth or an inclusive range `a..b`.
        #[arg(long, default_value = "0..6")]
        depth: DepthRange,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Also write plot data (`N, root, V_trunc, lower_bound, epsilon`).
        #[arg(long)]
        plot: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Selective policy improvement from always-sense.
    Spi {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[command(flatten)]
        spi: SpiArgs,
        /// Write the improvement trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Act-then-measure policy.
    Atm {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH_CAP)]
        depth_cap: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare methods over a list of sensing costs.
    Bench {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "as,atm,spi,truncated")]
        methods: Vec<Method>,
        /// Depth of the truncated solver.
        #[arg(long, default_value = "3")]
        depth: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[command(flatten)]
        spi: SpiArgs,
        /// Add Monte Carlo rows with this many episodes.
        #[arg(long)]
        mc: Option<usize>,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Leave the seconds column blank so output is reproducible.
        #[arg(long)]
        no_timing: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write an environment's MDP as JSON.
    GenEnv {
        #[command(flatten)]
        env: EnvArgs,
        /// Seed for `random:` environments (replaces the one in the spec).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact root values of a policy file.
    EvalPolicy {
        #[command(flatten)]
        env: EnvArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Also run a Monte Carlo check with this many episodes.
        #[arg(long)]
        mc: Option<usize>,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Args)]
pub struct EnvArgs {
    /// Built-in environment, e.g. `fig2`, `frozen_lake:4x4-hard`, `random:10:3:7`.
    #[arg(long, conflicts_with = "mdp", required_unless_present = "mdp")]
    pub env: Option<String>,
    /// MDP JSON file.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub alpha_override: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Sensing cost; repeat or separate with commas for several.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub k: Vec<f64>,
    /// Whether sensing is charged once the episode has ended in an
    /// absorbing zero-cost state.
    #[arg(long, value_enum, default_value = "free")]
    pub terminal_sensing: TerminalSensing,
}

#[derive(Debug, Args)]
pub struct SpiArgs {
    #[arg(long)]
    pub maxsteps: Option<usize>,
    #[arg(long, default_value = "1e-6")]
    pub delta: f64,
    /// Cap on the number of policy updates.
    #[arg(long)]
    pub iters: Option<usize>,
}

impl SpiArgs {
    fn options(&self) -> SpiOptions {
        SpiOptions { maxsteps: self.maxsteps, delta: self.delta, max_updates: self.iters, ..SpiOptions::default() }
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

/// `N` or `a..b` (inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthRange(pub RangeInclusive<usize>);

impl FromStr for DepthRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad depth {t:?}"));
        let range = match s.split_once("..") {
            Some((a, b)) => num(a)?..=num(b.trim_start_matches('='))?,
            None => {
                let n = num(s)?;
                n..=n
            }
        };
        if range.is_empty() {
            return Err(format!("empty depth range {s:?}"));
        }
        Ok(DepthRange(range))
    }
}

struct Loaded {
    name: String,
    mdp: BaselineMdp,
    scale: f64,
    labels: Option<&'static [&'static str]>,
}

impl EnvArgs {
    fn spec(&self) -> Result<Option<EnvSpec>> {
        self.env.as_deref().map(EnvSpec::from_str).transpose()
    }

    fn load(&self) -> Result<Loaded> {
        match self.spec()? {
            Some(spec) => {
                let spec = spec.with_discount(self.alpha_override);
                Ok(Loaded {
                    name: spec.to_string(),
                    mdp: spec.build()?,
                    scale: spec.display_scale(),
                    labels: spec.action_labels(),
                })
            }
            None => {
                let path = self.mdp.as_ref().expect("clap requires --env or --mdp");
                let mut mdp = crate::envs::load_mdp(path)?;
                if let Some(d) = self.alpha_override {
                    mdp = mdp.with_discount(d);
                    mdp.ensure_valid()?;
                }
                Ok(Loaded { name: path.display().to_string(), mdp, scale: 1.0, labels: None })
            }
        }
    }
}

impl CostArgs {
    fn single(&self) -> Result<f64> {
        match self.k.as_slice() {
            [k] => Ok(*k),
            _ => Err(Error::InvalidArgument("this command takes exactly one --k".into())),
        }
    }

    fn problem(&self, mdp: &BaselineMdp, k: f64) -> Result<SensingProblem> {
        SensingProblem::new(mdp.clone(), self.terminal_sensing.cost_model(k, mdp))
    }
}

fn emit(out: &OutArgs, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match &out.out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn plan_labels(policy: &SensingPolicy, labels: Option<&[&str]>) -> Vec<String> {
    policy
        .plans
        .iter()
        .map(|p| match labels {
            Some(names) => p.label(names),
            None => {
                let mut s: Vec<String> = p.blind_prefix.iter().map(|a| a.to_string()).collect();
                s.push(format!("{}!", p.sense_action));
                s.join(" ")
            }
        })
        .collect()
}

/// Root values and plans as `root,value,plan` CSV or an aligned table.
fn policy_text(env: &Loaded, policy: &SensingPolicy, values: &[f64], format: Format, extra: serde_json::Value) -> String {
    let labels = plan_labels(policy, env.labels);
    match format {
        Format::Json => {
            let mut obj = json!({
                "env": env.name,
                "root_values": values,
                "policy": serde_json::from_str::<serde_json::Value>(&policy.to_json_string()).expect("policy json"),
            });
            if let (Some(o), serde_json::Value::Object(e)) = (obj.as_object_mut(), extra) {
                o.extend(e);
            }
            serde_json::to_string_pretty(&obj).expect("json") + "\n"
        }
        Format::Csv => {
            let mut s = String::from("root,value,plan\n");
            for (root, (v, l)) in values.iter().zip(&labels).enumerate() {
                let _ = writeln!(s, "{root},{v},{l}");
            }
            s
        }
        Format::Table => {
            let width = labels.iter().map(String::len).max().unwrap_or(4).max(4);
            let mut s = format!("{:>5}  {:>14}  {:<width$}\n", "root", "value", "plan");
            for (root, (v, l)) in values.iter().zip(&labels).enumerate() {
                let _ = writeln!(s, "{root:>5}  {v:>14.8}  {l:<width$}");
            }
            if let serde_json::Value::Object(e) = extra {
                for (key, v) in e {
                    let _ = writeln!(s, "{key}: {v}");
                }
            }
            s
        }
    }
}

fn display_value(mdp: &BaselineMdp, scale: f64, v: f64) -> f64 {
    let sign = match mdp.convention() {
        Convention::Cost => 1.0,
        Convention::Reward => -1.0,
    };
    sign * scale * v
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Solve { env, out } => {
            let env = env.load()?;
            let sol = solve_baseline(&env.mdp, BASELINE_TOL)?;
            let n = env.mdp.num_actions();
            let text = match out.format {
                Format::Json => serde_json::to_string_pretty(&json!({
                    "env": env.name,
                    "v_star": sol.v_star,
                    "q_star": (0..env.mdp.num_states()).map(|s| sol.q_row(s).to_vec()).collect::<Vec<_>>(),
                    "pi_star": sol.pi_star,
                }))? + "\n",
                Format::Csv | Format::Table => {
                    let mut s = String::from("state,V,pi");
                    for a in 0..n {
                        let _ = write!(s, ",Q{a}");
                    }
                    s.push('\n');
                    for (st, v) in sol.v_star.iter().enumerate() {
                        let _ = write!(s, "{st},{v},{}", sol.pi_star[st]);
                        for q in sol.q_row(st) {
                            let _ = write!(s, ",{q}");
                        }
                        s.push('\n');
                    }
                    s
                }
            };
            emit(&out, &text, stdout)
        }
        Command::Threshold { env } => {
            let env = env.load()?;
            let sol = solve_baseline(&env.mdp, BASELINE_TOL)?;
            writeln!(stdout, "{}", always_sense_threshold(&env.mdp, &sol))?;
            Ok(())
        }
        Command::Truncate { env, cost, depth, budget, out } => {
            let env = env.load()?;
            let problem = cost.problem(&env.mdp, cost.single()?)?;
            let opts = TruncatedOptions { budget, ..TruncatedOptions::default() };
            let sol = solve_truncated(&problem, depth, opts)?;
            let text = match out.format {
                Format::Json => serde_json::to_string_pretty(&json!({
                    "env": env.name,
                    "depth": sol.depth,
                    "root_values": sol.root_values,
                    "outer_iterations": sol.outer_iterations,
                    "policy": serde_json::from_str::<serde_json::Value>(&sol.policy.to_json_string())?,
                    "nodes": sol.layer_policies,
                }))? + "\n",
                format => policy_text(&env, &sol.policy, &sol.root_values, format, json!({ "depth": depth })),
            };
            emit(&out, &text, stdout)
        }
        Command::Certify { env, cost, depth, budget, plot, out } => {
            let env = env.load()?;
            let problem = cost.problem(&env.mdp, cost.single()?)?;
            let opts = TruncatedOptions { budget, ..TruncatedOptions::default() };
            let report = CertificateReport::sweep(&problem, env.name.clone(), depth.0, opts)?;
            if let Some(path) = plot {
                std::fs::write(path, report.to_plot_csv(1.0)?)?;
            }
            let text = match out.format {
                Format::Json => report.to_json_string() + "\n",
                Format::Csv => report.to_plot_csv(1.0)?,
                Format::Table => {
                    let mut s = String::new();
                    let _ = writeln!(s, "{:>3}  {:>7}  {:>12}  {:>14}  root values", "N", "lemma3", "thm4", "epsilon");
                    for d in &report.depths {
                        let per_root: String = d.thm4_per_root.iter().map(|&h| if h { 'Y' } else { 'n' }).collect();
                        let values: Vec<String> = d.root_values.iter().map(|v| format!("{v:.8}")).collect();
                        let _ = writeln!(
                            s,
                            "{:>3}  {:>7}  {:>12}  {:>14.6e}  {}",
                            d.depth,
                            d.lemma3,
                            format!("{} {per_root}", d.thm4),
                            d.epsilon,
                            values.join(" ")
                        );
                    }
                    let first = |x: Option<usize>| x.map_or("none".to_string(), |n| n.to_string());
                    let _ = writeln!(s, "lemma3 first holds at N = {}", first(report.first_lemma3()));
                    let _ = writeln!(s, "thm4 first holds at N = {}", first(report.first_thm4()));
                    s
                }
            };
            emit(&out, &text, stdout)
        }
        Command::Spi { env, cost, spi: args, trace, out } => {
            let env = env.load()?;
            let problem = cost.problem(&env.mdp, cost.single()?)?;
            let res = spi(&problem, &as_policy(&problem.baseline), args.options())?;
            if let Some(path) = trace {
                std::fs::write(path, res.trace_csv()?)?;
            }
            let start = display_value(&env.mdp, env.scale, dot(&res.values, &env.mdp.start_distribution()));
            let extra = json!({ "updates": res.updates, "maxsteps": res.maxsteps, "start_value": start });
            emit(&out, &policy_text(&env, &res.policy, &res.values, out.format, extra), stdout)
        }
        Command::Atm { env, cost, depth_cap, out } => {
            let env = env.load()?;
            let problem = cost.problem(&env.mdp, cost.single()?)?;
            let atm = atm_policy(&problem, depth_cap)?;
            let values = evaluate_on_roots(&problem, &atm.policy)?.values;
            let start = display_value(&env.mdp, env.scale, dot(&values, &env.mdp.start_distribution()));
            let extra = json!({ "capped": atm.capped, "error_bound": atm.error_bound, "start_value": start });
            emit(&out, &policy_text(&env, &atm.policy, &values, out.format, extra), stdout)
        }
        Command::Bench { env, cost, methods, depth, budget, spi: args, mc, seed, no_timing, out } => {
            let env = env.load()?;
            let cfg = BenchConfig {
                methods,
                truncated_depth: depth,
                truncated: TruncatedOptions { budget, record_nodes: false, ..TruncatedOptions::default() },
                spi: args.options(),
                terminal_sensing: cost.terminal_sensing,
                timing: !no_timing,
                monte_carlo: mc.map(|e| (e, seed)),
                scale: env.scale,
                ..BenchConfig::default()
            };
            let report = run_bench(&env.name, &env.mdp, &cost.k, &cfg)?;
            let text = match out.format {
                Format::Csv => report.to_csv()?,
                Format::Json => report.to_json_string() + "\n",
                Format::Table => report.to_table(),
            };
            emit(&out, &text, stdout)
        }
        Command::GenEnv { env, seed, out } => {
            let mut spec = match env.spec()? {
                Some(spec) => spec,
                None => return Err(Error::InvalidArgument("gen-env needs --env".into())),
            };
            if let (Some(s), crate::envs::EnvKind::Random { seed: slot, .. }) = (seed, &mut spec.kind) {
                *slot = s;
            }
            let mdp = spec.with_discount(env.alpha_override).build()?;
            match out {
                Some(path) => save_mdp(&mdp, path)?,
                None => writeln!(stdout, "{}", mdp.to_json_string())?,
            }
            Ok(())
        }
        Command::EvalPolicy { env, cost, policy, mc, seed, out } => {
            let env = env.load()?;
            let problem = cost.problem(&env.mdp, cost.single()?)?;
            let policy = SensingPolicy::from_json_str(&std::fs::read_to_string(policy)?)?;
            let values = evaluate_on_roots(&problem, &policy)?.values;
            let dist = env.mdp.start_distribution();
            let mut extra = json!({ "start_value": display_value(&env.mdp, env.scale, dot(&values, &dist)) });
            if let Some(episodes) = mc {
                let est = monte_carlo_eval(&problem, &policy, &dist, episodes, None, seed)?;
                extra["mc_mean"] = json!(display_value(&env.mdp, env.scale, est.mean));
                extra["mc_stderr"] = json!(env.scale * est.stderr);
            }
            emit(&out, &policy_text(&env, &policy, &values, out.format, extra), stdout)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Budget { .. } => EXIT_BUDGET,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("opsense").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn depth_ranges() {
        assert_eq!("3".parse::<DepthRange>().unwrap().0, 3..=3);
        assert_eq!("0..6".parse::<DepthRange>().unwrap().0, 0..=6);
        assert_eq!("2..=4".parse::<DepthRange>().unwrap().0, 2..=4);
        assert!("5..2".parse::<DepthRange>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_str(&["threshold", "--env", "fig2"]).0, EXIT_OK);
        assert_eq!(run_str(&["threshold", "--env", "fig2", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["threshold", "--env", "nowhere"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["--help"]).0, EXIT_OK);
        let (code, _, err) = run_str(&["truncate", "--env", "taxi", "--k", "0.1", "--depth", "9"]);
        assert_eq!(code, EXIT_BUDGET);
        assert!(err.contains("budget"));
    }
}
