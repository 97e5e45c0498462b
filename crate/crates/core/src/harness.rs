//! Monte Carlo experiment runner.
//!
//! Drops are independent work units seeded from `(master seed, sweep index,
//! drop index)`, so any single drop can be replayed in isolation and the
//! output is identical for any worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{slnr_from_gains, SlnrRecord};
use crate::params::ModelParams;
use crate::pipeline::{channel_rng, drop_seed, selection_rng, DropSetup, Evaluation};
use crate::precoding::{clone_error, Category};
use crate::scenario::{NetworkConfig, Scenario};
use crate::selection::{Algorithm, SelectionResult, DEFAULT_MAX_ENUMERATION};

pub const RESULTS_HEADER: &str =
    "sweep_var,sweep_value,algorithm,category,mean_sum_rate,stderr,mean_per_cluster_rate,drops,seed";
pub const DROPS_HEADER: &str = "sweep_value,drop,algorithm,sum_rate,drop_seed";
pub const FAILED_HEADER: &str = "sweep_value,drop,algorithm,error_kind";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Per-user transmit power in dB relative to the noise power.
    PtDb,
    NumClusters,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::PtDb => "pt_db",
            SweepVar::NumClusters => "num_clusters",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub sweep_var: SweepVar,
    pub sweep_values: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub category: Category,
    pub num_drops: usize,
    #[serde(default = "one")]
    pub draws_per_drop: usize,
    #[serde(default = "default_max_enumeration")]
    pub max_enumeration: u64,
    #[serde(default = "default_output")]
    pub output: String,
    pub network: NetworkConfig,
    #[serde(default)]
    pub model: ModelParams,
}

fn one() -> usize {
    1
}

fn default_max_enumeration() -> u64 {
    DEFAULT_MAX_ENUMERATION as u64
}

fn default_output() -> String {
    "results".into()
}

impl ExperimentPlan {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let plan: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Applies `key=value` overrides addressed by dotted path
    /// (`num_drops`, `network.num_antennas`, ...). Unknown keys are rejected.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item, "override must look like key=value"))?;
            let key = key.trim();
            let mut slot = &mut root;
            for part in key.split('.') {
                slot = slot
                    .as_table_mut()
                    .and_then(|t| t.get_mut(part))
                    .ok_or_else(|| Error::config(key, "unknown key"))?;
            }
            *slot = parse_override_value(raw.trim());
        }
        let plan: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_drops == 0 {
            return Err(Error::config("num_drops", "must be at least 1"));
        }
        if self.draws_per_drop == 0 {
            return Err(Error::config("draws_per_drop", "must be at least 1"));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::config("sweep_values", "must not be empty"));
        }
        if self.sweep_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sweep_values", "must be strictly increasing"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "must not be empty"));
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(Error::config("algorithms", "duplicate entry"));
        }
        self.model.validate().map_err(|e| prefix_field(e, "model"))?;
        for i in 0..self.sweep_values.len() {
            let cfg = self.config_at(i)?;
            cfg.validate().map_err(|e| prefix_field(e, "network"))?;
            if self.algorithms.contains(&Algorithm::Exhaustive) {
                let bound = (cfg.num_bs as f64).powi(cfg.num_clusters as i32);
                if bound > self.max_enumeration as f64 {
                    return Err(Error::config(
                        "algorithms",
                        format!(
                            "exhaustive search over {}^{} assignments exceeds max_enumeration {}",
                            cfg.num_bs, cfg.num_clusters, self.max_enumeration
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Network configuration at sweep point `index`.
    pub fn config_at(&self, index: usize) -> Result<NetworkConfig> {
        let v = *self
            .sweep_values
            .get(index)
            .ok_or_else(|| Error::config("sweep_index", format!("{index} out of range")))?;
        let mut cfg = self.network.clone();
        match self.sweep_var {
            SweepVar::PtDb => cfg.per_user_power = cfg.noise_power * 10f64.powf(v / 10.0),
            SweepVar::NumClusters => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::config(
                        "sweep_values",
                        format!("cluster count {v} is not a positive integer"),
                    ));
                }
                cfg.num_clusters = v as usize;
            }
        }
        Ok(cfg)
    }

    pub fn master_seed(&self) -> u64 {
        self.network.rng_seed
    }
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    toml::from_str::<toml::Table>(&doc)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Named ready-to-run plans.
pub fn presets() -> Vec<(&'static str, ExperimentPlan)> {
    let power_sweep = |category, antennas| ExperimentPlan {
        sweep_var: SweepVar::PtDb,
        sweep_values: vec![0.0, 10.0, 20.0, 30.0],
        algorithms: Algorithm::ALL.to_vec(),
        category,
        num_drops: 200,
        draws_per_drop: 1,
        max_enumeration: default_max_enumeration(),
        output: default_output(),
        network: NetworkConfig {
            num_clusters: 8,
            num_antennas: antennas,
            ..Default::default()
        },
        model: ModelParams::default(),
    };
    let cluster_sweep = |category, antennas| ExperimentPlan {
        sweep_var: SweepVar::NumClusters,
        sweep_values: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0],
        algorithms: vec![
            Algorithm::GreedySlnr,
            Algorithm::GreedyLaslnr,
            Algorithm::LargestEnergy,
            Algorithm::Random,
        ],
        category,
        num_drops: 200,
        draws_per_drop: 1,
        max_enumeration: default_max_enumeration(),
        output: default_output(),
        network: NetworkConfig {
            per_user_power: 100.0,
            num_antennas: antennas,
            ..Default::default()
        },
        model: ModelParams::default(),
    };
    vec![
        ("power-first", power_sweep(Category::First, 64)),
        ("power-second", power_sweep(Category::Second, 64)),
        ("clusters-first", cluster_sweep(Category::First, 64)),
        ("clusters-second", cluster_sweep(Category::Second, 64)),
        ("power-first-n128", power_sweep(Category::First, 128)),
        ("power-second-n128", power_sweep(Category::Second, 128)),
        ("clusters-first-n128", cluster_sweep(Category::First, 128)),
        ("clusters-second-n128", cluster_sweep(Category::Second, 128)),
    ]
}

pub fn preset(name: &str) -> Option<ExperimentPlan> {
    presets().into_iter().find(|(n, _)| *n == name).map(|(_, p)| p)
}

/// Details of one algorithm on one channel draw.
#[derive(Clone, Debug)]
pub struct DrawDetail {
    pub selection: SelectionResult<f64>,
    pub evaluation: Evaluation<f64>,
    /// SLNR of every user at its chosen BS.
    pub slnr: Vec<SlnrRecord<f64>>,
}

#[derive(Debug)]
pub struct AlgorithmOutcome {
    pub algorithm: Algorithm,
    /// Sum-rate averaged over the drop's channel draws, or the first error.
    pub result: Result<f64>,
    pub per_cluster: f64,
    pub draws: Vec<DrawDetail>,
}

#[derive(Debug)]
pub struct DropOutcome {
    pub sweep_index: usize,
    pub drop: usize,
    pub seed: u64,
    pub scenario: Option<Scenario>,
    pub algorithms: Vec<AlgorithmOutcome>,
}

/// Runs one drop of a plan. With `detail` the per-draw selections are kept.
pub fn simulate_drop(
    plan: &ExperimentPlan,
    sweep_index: usize,
    drop: usize,
    algorithms: &[Algorithm],
    detail: bool,
) -> Result<DropOutcome> {
    let cfg = plan.config_at(sweep_index)?;
    let seed = drop_seed(plan.master_seed(), sweep_index, drop);
    let fail_all = |e: &Error| {
        algorithms
            .iter()
            .map(|&algorithm| AlgorithmOutcome {
                algorithm,
                result: Err(clone_error(e)),
                per_cluster: f64::NAN,
                draws: Vec::new(),
            })
            .collect()
    };

    let setup = match DropSetup::<f64>::generate(&cfg, &plan.model, plan.category, seed) {
        Ok(s) => s,
        Err(e) => {
            return Ok(DropOutcome {
                sweep_index,
                drop,
                seed,
                scenario: None,
                algorithms: fail_all(&e),
            })
        }
    };

    let mut totals: Vec<Result<f64>> = algorithms.iter().map(|_| Ok(0.0)).collect();
    let mut details: Vec<Vec<DrawDetail>> = algorithms.iter().map(|_| Vec::new()).collect();
    let mut select_rng = selection_rng(seed);
    for d in 0..plan.draws_per_drop {
        let draw = setup.draw(&mut channel_rng(seed, d));
        for (i, &alg) in algorithms.iter().enumerate() {
            let outcome = setup
                .select(&draw, alg, plan.max_enumeration as u128, &mut select_rng)
                .and_then(|sel| setup.evaluate(&draw, &sel.assignment).map(|ev| (sel, ev)));
            match (outcome, &mut totals[i]) {
                (Ok((sel, ev)), Ok(acc)) => {
                    *acc += ev.rate.system;
                    if detail {
                        let slnr = sel
                            .assignment
                            .cluster_to_bs
                            .iter()
                            .enumerate()
                            .flat_map(|(c, &l)| slnr_from_gains(&draw.gains, c, l, setup.noise()).unwrap_or_default())
                            .collect();
                        details[i].push(DrawDetail {
                            selection: sel,
                            evaluation: ev,
                            slnr,
                        });
                    }
                }
                (Err(e), slot @ Ok(_)) => *slot = Err(e),
                _ => {}
            }
        }
    }

    let c = cfg.num_clusters as f64;
    let outcomes = algorithms
        .iter()
        .zip(totals)
        .zip(details)
        .map(|((&algorithm, total), draws)| {
            let result = total.map(|t| t / plan.draws_per_drop as f64);
            let per_cluster = result.as_ref().map_or(f64::NAN, |r| r / c);
            AlgorithmOutcome {
                algorithm,
                result,
                per_cluster,
                draws,
            }
        })
        .collect();
    Ok(DropOutcome {
        sweep_index,
        drop,
        seed,
        scenario: Some(setup.scenario),
        algorithms: outcomes,
    })
}

/// Per-drop sum-rate of one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct DropRecord {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub drop: usize,
    pub algorithm: Algorithm,
    pub sum_rate: f64,
    pub per_cluster: f64,
    pub drop_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FailureRecord {
    pub sweep_value: f64,
    pub drop: usize,
    pub algorithm: Algorithm,
    pub error_kind: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub category: Category,
    pub mean_sum_rate: f64,
    pub stderr: f64,
    pub mean_per_cluster_rate: f64,
    pub drops: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub drops: Vec<DropRecord>,
    pub failures: Vec<FailureRecord>,
}

/// Runs every (sweep point, drop) of `plan` on `workers` threads (0 = all cores).
pub fn run_experiment(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentOutput> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
    let units: Vec<(usize, usize)> = (0..plan.sweep_values.len())
        .flat_map(|s| (0..plan.num_drops).map(move |d| (s, d)))
        .collect();
    let outcomes: Vec<DropOutcome> = pool.install(|| {
        units
            .par_iter()
            .map(|&(s, d)| simulate_drop(plan, s, d, &plan.algorithms, false))
            .collect::<Result<_>>()
    })?;

    let mut out = ExperimentOutput::default();
    for o in outcomes {
        let sweep_value = plan.sweep_values[o.sweep_index];
        for a in o.algorithms {
            match a.result {
                Ok(sum_rate) => out.drops.push(DropRecord {
                    sweep_index: o.sweep_index,
                    sweep_value,
                    drop: o.drop,
                    algorithm: a.algorithm,
                    sum_rate,
                    per_cluster: a.per_cluster,
                    drop_seed: o.seed,
                }),
                Err(e) => out.failures.push(FailureRecord {
                    sweep_value,
                    drop: o.drop,
                    algorithm: a.algorithm,
                    error_kind: e.kind(),
                    message: e.to_string(),
                }),
            }
        }
    }
    out.rows = result_rows(plan, &out.drops);
    Ok(out)
}

/// Mean, standard error and count of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Sample mean and standard error (`s / √n`, `n − 1` denominator; 0 for a
/// single sample).
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(Summary {
        mean,
        stderr,
        count: values.len(),
    })
}

/// Groups drop records by (sweep index, algorithm) and summarises each group.
pub fn aggregate(records: &[DropRecord]) -> Result<BTreeMap<(usize, Algorithm), Summary>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<(usize, Algorithm), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((r.sweep_index, r.algorithm)).or_default().push(r.sum_rate);
    }
    groups.into_iter().map(|(k, v)| summarize(&v).map(|s| (k, s))).collect()
}

fn result_rows(plan: &ExperimentPlan, records: &[DropRecord]) -> Vec<ResultRow> {
    let summaries = aggregate(records).unwrap_or_default();
    let mut rows = Vec::new();
    for (s, &sweep_value) in plan.sweep_values.iter().enumerate() {
        let clusters = plan.config_at(s).map(|c| c.num_clusters as f64).unwrap_or(f64::NAN);
        for &algorithm in &plan.algorithms {
            let summary = summaries.get(&(s, algorithm)).copied().unwrap_or(Summary {
                mean: f64::NAN,
                stderr: f64::NAN,
                count: 0,
            });
            rows.push(ResultRow {
                sweep_var: plan.sweep_var,
                sweep_value,
                algorithm,
                category: plan.category,
                mean_sum_rate: summary.mean,
                stderr: summary.stderr,
                mean_per_cluster_rate: summary.mean / clusters,
                drops: summary.count,
                seed: plan.master_seed(),
            });
        }
    }
    rows
}

/// Formats with 6 significant digits, `%g` style.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.sweep_var.as_str(),
            fmt_sig6(r.sweep_value),
            r.algorithm,
            r.category.as_str(),
            fmt_sig6(r.mean_sum_rate),
            fmt_sig6(r.stderr),
            fmt_sig6(r.mean_per_cluster_rate),
            r.drops,
            r.seed
        );
    }
    s
}

pub fn drops_csv(records: &[DropRecord]) -> String {
    let mut s = String::from(DROPS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_sig6(r.sweep_value),
            r.drop,
            r.algorithm,
            fmt_sig6(r.sum_rate),
            r.drop_seed
        );
    }
    s
}

pub fn failed_csv(failures: &[FailureRecord]) -> String {
    let mut s = String::from(FAILED_HEADER);
    s.push('\n');
    for f in failures {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_sig6(f.sweep_value),
            f.drop,
            f.algorithm,
            f.error_kind
        );
    }
    s
}

/// Paths written by [`write_outputs`].
#[derive(Clone, Debug)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub drops: PathBuf,
    pub failed: PathBuf,
    pub plan: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            results: dir.join("results.csv"),
            drops: dir.join("drops.csv"),
            failed: dir.join("failed.csv"),
            plan: dir.join("plan.toml"),
        }
    }
}

/// Creates `dir` and checks it is writable.
pub fn prepare_output_dir(dir: &Path) -> Result<OutputPaths> {
    let io = |source| Error::Io {
        path: dir.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(io)?;
    fs::remove_file(&probe).map_err(io)?;
    Ok(OutputPaths::in_dir(dir))
}

pub fn write_outputs(plan: &ExperimentPlan, output: &ExperimentOutput, dir: &Path) -> Result<OutputPaths> {
    let paths = prepare_output_dir(dir)?;
    let write = |path: &Path, text: String| {
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write(&paths.results, results_csv(&output.rows))?;
    write(&paths.drops, drops_csv(&output.drops))?;
    write(&paths.failed, failed_csv(&output.failures))?;
    write(&paths.plan, plan.to_toml()?)?;
    Ok(paths)
}
