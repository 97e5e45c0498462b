use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bsel_core::checks::{run_suite, Suite};
use bsel_core::harness::{self, fmt_sig6, ExperimentPlan};
use bsel_core::{Algorithm, Error};
use clap::{Args, Parser, Subcommand};

const OUT_ENV: &str = "BSEL_OUT";

#[derive(Parser)]
#[command(
    name = "bsel",
    version,
    about = "Base-station selection experiments for clustered massive MIMO"
)]
struct Cli {
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment plan and write CSV results.
    Run {
        #[command(flatten)]
        plan: PlanArgs,
        /// Output directory (default: $BSEL_OUT, then the plan's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Re-run one drop and print per-user details.
    Replay {
        #[command(flatten)]
        plan: PlanArgs,
        /// Sweep point by index.
        #[arg(long, conflicts_with = "sweep_value")]
        sweep: Option<usize>,
        /// Sweep point by value, as printed in the CSVs.
        #[arg(long)]
        sweep_value: Option<f64>,
        #[arg(long)]
        drop: usize,
        /// Restrict to these algorithms (repeatable; default: the plan's).
        #[arg(long = "algorithm")]
        algorithms: Vec<Algorithm>,
    },
    /// Run invariant suites: covariance, precoding, theorem1, laslnr-bound, ordering, or all.
    Check {
        #[arg(required = true)]
        suites: Vec<String>,
    },
    /// List built-in plans, or print one as TOML.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct PlanArgs {
    /// Plan file (TOML).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in plan name.
    #[arg(long)]
    preset: Option<String>,
    /// Override a plan field, e.g. `--set num_drops=5` or `--set network.num_antennas=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (same as `--set network.rng_seed=...`).
    #[arg(long)]
    seed: Option<u64>,
}

impl PlanArgs {
    fn load(&self) -> Result<ExperimentPlan, Failure> {
        let base = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentPlan::load(path).map_err(Failure::validation)?,
            (None, Some(name)) => harness::preset(name)
                .ok_or_else(|| Failure::Validation(anyhow!("unknown preset `{name}`; see `bsel presets`")))?,
            (None, None) => unreachable!("clap requires --config or --preset"),
        };
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("network.rng_seed={seed}"));
        }
        base.with_overrides(&overrides).map_err(Failure::validation)
    }
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
    Check,
}

impl Failure {
    fn validation(e: Error) -> Self {
        Failure::Validation(e.into())
    }

    fn from_core(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } | Error::Parse(_) | Error::Io { .. } => Failure::Validation(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { plan, out, workers } => run(&plan, out, workers, cli.quiet),
        Command::Replay {
            plan,
            sweep,
            sweep_value,
            drop,
            algorithms,
        } => replay(&plan, sweep, sweep_value, drop, &algorithms),
        Command::Check { suites } => check(&suites, cli.quiet),
        Command::Presets { name } => presets(name.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => ExitCode::from(3),
    }
}

fn run(args: &PlanArgs, out: Option<PathBuf>, workers: usize, quiet: bool) -> Result<(), Failure> {
    let plan = args.load()?;
    let dir = out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&plan.output));
    harness::prepare_output_dir(&dir).map_err(Failure::validation)?;
    if !quiet {
        eprintln!(
            "running {} sweep points x {} drops ({} category) into {}",
            plan.sweep_values.len(),
            plan.num_drops,
            plan.category.as_str(),
            dir.display()
        );
    }
    let output = harness::run_experiment(&plan, workers).map_err(Failure::from_core)?;
    let paths = harness::write_outputs(&plan, &output, &dir).map_err(Failure::from_core)?;
    if !quiet {
        println!(
            "{:>12}  {:<14}  {:>12}  {:>10}  {:>5}",
            plan.sweep_var.as_str(),
            "algorithm",
            "sum_rate",
            "stderr",
            "drops"
        );
        for r in &output.rows {
            println!(
                "{:>12}  {:<14}  {:>12}  {:>10}  {:>5}",
                fmt_sig6(r.sweep_value),
                r.algorithm.as_str(),
                fmt_sig6(r.mean_sum_rate),
                fmt_sig6(r.stderr),
                r.drops
            );
        }
        eprintln!("wrote {}", paths.results.display());
    }
    if !output.failures.is_empty() {
        return Err(Failure::Runtime(anyhow!(
            "{} (drop, algorithm) runs failed; see {}",
            output.failures.len(),
            paths.failed.display()
        )));
    }
    Ok(())
}

fn replay(
    args: &PlanArgs,
    sweep: Option<usize>,
    sweep_value: Option<f64>,
    drop: usize,
    algorithms: &[Algorithm],
) -> Result<(), Failure> {
    let plan = args.load()?;
    let sweep = match (sweep, sweep_value) {
        (Some(i), _) => i,
        (None, Some(v)) => plan
            .sweep_values
            .iter()
            .position(|&x| x == v || fmt_sig6(x) == fmt_sig6(v))
            .ok_or_else(|| Failure::Validation(anyhow!("unknown drop: sweep value {v} is not in the plan")))?,
        (None, None) => 0,
    };
    if sweep >= plan.sweep_values.len() || drop >= plan.num_drops {
        return Err(Failure::Validation(anyhow!(
            "unknown drop: sweep {sweep}, drop {drop} (plan has {} sweep points x {} drops)",
            plan.sweep_values.len(),
            plan.num_drops
        )));
    }
    let algorithms = if algorithms.is_empty() {
        &plan.algorithms[..]
    } else {
        algorithms
    };
    let outcome = harness::simulate_drop(&plan, sweep, drop, algorithms, true).map_err(Failure::from_core)?;

    println!(
        "{} = {}, drop {}, drop_seed {}, category {}",
        plan.sweep_var.as_str(),
        fmt_sig6(plan.sweep_values[sweep]),
        drop,
        outcome.seed,
        plan.category.as_str()
    );
    if let Some(s) = &outcome.scenario {
        for (c, cl) in s.clusters.iter().enumerate() {
            println!(
                "cluster {c} at ({:.1}, {:.1}) m, candidate BSs {:?}",
                cl.position[0],
                cl.position[1],
                s.candidates(c)
            );
        }
    }
    let mut failed = false;
    for a in &outcome.algorithms {
        println!();
        match &a.result {
            Err(e) => {
                failed = true;
                println!("[{}] error {}: {e}", a.algorithm, e.kind());
            }
            Ok(rate) => {
                println!("[{}] sum_rate {}", a.algorithm, fmt_sig6(*rate));
                for (d, detail) in a.draws.iter().enumerate() {
                    let sel = &detail.selection;
                    println!(
                        "  draw {d}: assignment {:?}, {} evaluations",
                        sel.assignment.cluster_to_bs, sel.evaluations
                    );
                    if let Some(obj) = sel.objective {
                        println!("  objective {}", fmt_sig6(obj));
                    }
                    for (c, row) in sel.scores.iter().enumerate() {
                        let cells: Vec<String> = row
                            .iter()
                            .map(|s| s.map_or_else(|| "-".to_string(), fmt_sig6))
                            .collect();
                        println!("  scores cluster {c}: [{}]", cells.join(", "));
                    }
                    for (u, s) in detail.evaluation.users.iter().zip(&detail.slnr) {
                        println!(
                            "  cluster {} user {} bs {}: sinr {} slnr {} rate {}",
                            u.cluster,
                            u.user,
                            u.bs,
                            fmt_sig6(u.sinr),
                            fmt_sig6(s.slnr),
                            fmt_sig6(u.rate)
                        );
                    }
                }
            }
        }
    }
    if failed {
        return Err(Failure::Runtime(anyhow!("drop failed for at least one algorithm")));
    }
    Ok(())
}

fn check(names: &[String], quiet: bool) -> Result<(), Failure> {
    let mut suites = Vec::new();
    for name in names {
        if name == "all" {
            suites.extend(Suite::ALL);
        } else {
            suites.push(
                name.parse::<Suite>()
                    .map_err(|_| Failure::Validation(anyhow!("unknown suite `{name}`")))?,
            );
        }
    }
    let mut all_passed = true;
    for suite in suites {
        let report = run_suite(suite)
            .with_context(|| format!("suite {suite}"))
            .map_err(Failure::Runtime)?;
        for a in &report.assertions {
            if !quiet || !a.passed {
                println!(
                    "{} {suite}: {}{}",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    if a.detail.is_empty() {
                        String::new()
                    } else {
                        format!(" ({})", a.detail)
                    }
                );
            }
        }
        println!(
            "{suite}: {}/{} passed",
            report.assertions.len() - report.failures(),
            report.assertions.len()
        );
        all_passed &= report.passed();
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn presets(name: Option<&str>) -> Result<(), Failure> {
    match name {
        None => {
            for (n, p) in harness::presets() {
                println!(
                    "{n:<20} {} over {:?}, N = {}, {} drops",
                    p.sweep_var.as_str(),
                    p.sweep_values,
                    p.network.num_antennas,
                    p.num_drops
                );
            }
            Ok(())
        }
        Some(n) => {
            let plan = harness::preset(n)
                .ok_or_else(|| Failure::Validation(anyhow!("unknown preset `{n}`; see `bsel presets`")))?;
            print!("{}", plan.to_toml().map_err(Failure::from_core)?);
            Ok(())
        }
    }
}
