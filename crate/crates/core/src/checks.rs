//! Self-contained invariant suites with fixed seeds, runnable from the CLI.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{build_covariance, build_covariance_with, complex_gaussian, eigen_truncate, RankRule};
use crate::error::{Error, Result};
use crate::harness::{preset, run_experiment, summarize, SweepVar};
use crate::metrics::{compute_laslnr, slnr_from_gains};
use crate::params::ModelParams;
use crate::pipeline::{channel_rng, drop_seed, DropSetup};
use crate::precoding::{bd_prebeamformer, zf_inner_precoder, Category};
use crate::quadrature::GaussLegendre;
use crate::scalar::Cplx;
use crate::scenario::NetworkConfig;
use crate::selection::{exhaustive_sinr_select, greedy_slnr_select, Algorithm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Covariance,
    Precoding,
    Theorem1,
    LaslnrBound,
    Ordering,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Covariance,
        Suite::Precoding,
        Suite::Theorem1,
        Suite::LaslnrBound,
        Suite::Ordering,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Covariance => "covariance",
            Suite::Precoding => "precoding",
            Suite::Theorem1 => "theorem1",
            Suite::LaslnrBound => "laslnr-bound",
            Suite::Ordering => "ordering",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub assertions: Vec<Assertion>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> usize {
        self.assertions.iter().filter(|a| !a.passed).count()
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        suite,
        assertions: Vec::new(),
    };
    match suite {
        Suite::Covariance => covariance(&mut report)?,
        Suite::Precoding => precoding(&mut report)?,
        Suite::Theorem1 => theorem1(&mut report)?,
        Suite::LaslnrBound => laslnr_bound(&mut report)?,
        Suite::Ordering => ordering(&mut report)?,
    }
    Ok(report)
}

type CMat = DMatrix<Cplx<f64>>;

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn covariance(report: &mut SuiteReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0C0);
    let double = GaussLegendre::new(400);
    for i in 0..20 {
        let theta = rng.random_range(-1.2..1.2);
        let delta = rng.random_range(0.01..0.5);
        let n = rng.random_range(2..=32);
        let cov = build_covariance(theta, delta, n, 0.5)?;
        let r = &cov.matrix;
        let tag = format!("#{i} θ={theta:.3} Δ={delta:.3} N={n}");

        let herm = max_abs(&(r - r.adjoint()));
        report.check(
            format!("hermitian {tag}"),
            herm <= 1e-14,
            format!("max |R - Rᴴ| = {herm:.2e}"),
        );
        let mut toeplitz = 0.0f64;
        for p in 1..n {
            for q in 1..n {
                toeplitz = toeplitz.max((r[(p, q)] - r[(p - 1, q - 1)]).norm());
            }
        }
        report.check(format!("toeplitz {tag}"), toeplitz <= 1e-14, format!("{toeplitz:.2e}"));
        let diag = (0..n)
            .map(|d| (r[(d, d)] - Cplx::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max);
        report.check(format!("unit diagonal {tag}"), diag <= 1e-14, format!("{diag:.2e}"));
        let basis = eigen_truncate(r, RankRule::Exact)?;
        let min_eig = r.clone().symmetric_eigenvalues().min();
        report.check(format!("psd {tag}"), min_eig >= -1e-10, format!("λmin = {min_eig:.2e}"));
        let trace_gap = (basis.trace - n as f64).abs();
        report.check(
            format!("trace {tag}"),
            trace_gap <= 1e-9,
            format!("|tr R - N| = {trace_gap:.2e}"),
        );
        let fine = build_covariance_with(theta, delta, n, 0.5, &double)?;
        let conv = max_abs(&(r - &fine.matrix));
        report.check(format!("node doubling {tag}"), conv <= 1e-10, format!("{conv:.2e}"));
    }
    Ok(())
}

fn precoding(report: &mut SuiteReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0D1);
    for i in 0..20 {
        let bases: Vec<_> = (0..3)
            .map(|_| {
                let theta = rng.random_range(-1.0..1.0);
                let delta = rng.random_range(0.05..0.15);
                build_covariance(theta, delta, 64, 0.5).and_then(|c| eigen_truncate(&c.matrix, RankRule::Mass(1e-3)))
            })
            .collect::<Result<_>>()?;
        let b = match bd_prebeamformer(&bases[0], &[&bases[1], &bases[2]], 3) {
            Ok(p) => p.matrix,
            Err(Error::InfeasibleNullSpace { .. }) => continue,
            Err(e) => return Err(e),
        };
        let null = bases[1..]
            .iter()
            .map(|e| max_abs(&(e.vectors.adjoint() * &b)))
            .fold(0.0, f64::max);
        report.check(
            format!("bd nulling #{i}"),
            null <= 1e-8,
            format!("max |Eᴴ B| = {null:.2e}"),
        );
        let ortho = max_abs(&(b.adjoint() * &b - CMat::identity(3, 3)));
        report.check(format!("bd orthonormal #{i}"), ortho <= 1e-10, format!("{ortho:.2e}"));
    }
    for i in 0..20 {
        let k = rng.random_range(1..=4);
        let m = rng.random_range(k..=6);
        let h = CMat::from_fn(k, m, |_, _| complex_gaussian(&mut rng));
        let power = 10f64.powf(rng.random_range(-1.0..3.0));
        let v = zf_inner_precoder(&h, power)?.matrix;
        let hv = &h * &v;
        let diag_max = (0..k).map(|j| hv[(j, j)].norm()).fold(0.0, f64::max);
        let mut off = 0.0f64;
        for p in 0..k {
            for q in 0..k {
                if p != q {
                    off = off.max(hv[(p, q)].norm());
                }
            }
        }
        report.check(
            format!("zf off-diagonal #{i}"),
            off <= 1e-8 * diag_max,
            format!("{:.2e} relative", off / diag_max),
        );
        let pw = v
            .column_iter()
            .map(|c| (c.norm_squared() / power - 1.0).abs())
            .fold(0.0, f64::max);
        report.check(
            format!("zf column power #{i}"),
            pw <= 1e-10,
            format!("{pw:.2e} relative"),
        );
    }
    let singular = CMat::from_fn(2, 3, |_, j| Cplx::new(j as f64 + 1.0, 0.0));
    report.check(
        "zf rejects rank-deficient channel",
        matches!(zf_inner_precoder(&singular, 1.0), Err(Error::RankDeficient { .. })),
        "",
    );
    Ok(())
}

fn theorem1(report: &mut SuiteReport) -> Result<()> {
    let params = ModelParams {
        exact_rank: true,
        ..ModelParams::default()
    };
    let mut seed = 0u64;
    let mut redraws = 0;
    for i in 0..100 {
        let config = NetworkConfig {
            num_clusters: 2 + i % 5,
            ..NetworkConfig::default()
        };
        loop {
            let s = drop_seed(0x7E01, 0, seed as usize);
            seed += 1;
            let setup = DropSetup::<f64>::generate(&config, &params, Category::First, s)?;
            let draw = setup.draw(&mut channel_rng(s, 0));
            let (greedy, exhaustive) = match (
                greedy_slnr_select(&draw.gains, setup.noise()),
                exhaustive_sinr_select(&draw.gains, setup.noise(), 1_000_000),
            ) {
                (Ok(g), Ok(e)) => (g, e),
                (Err(Error::NoFeasibleBs { .. }), _) | (_, Err(Error::NoFeasibleBs { .. })) => {
                    redraws += 1;
                    continue;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let g = draw
                .gains
                .sum_sinr(&greedy.assignment.cluster_to_bs, setup.noise())
                .expect("greedy assignment is feasible");
            let e = exhaustive.objective.expect("exhaustive reports its objective");
            let rel = (g - e).abs() / e.abs().max(f64::MIN_POSITIVE);
            report.check(
                format!("instance {i} (C={})", config.num_clusters),
                rel <= 1e-9,
                format!("greedy {g:.9e} exhaustive {e:.9e} rel {rel:.1e}"),
            );
            break;
        }
    }
    report.check("infeasible instances redrawn", true, format!("{redraws} redraws"));
    Ok(())
}

fn laslnr_bound(report: &mut SuiteReport) -> Result<()> {
    const DRAWS: usize = 2000;
    let config = NetworkConfig {
        num_clusters: 4,
        num_antennas: 32,
        ..NetworkConfig::default()
    };
    let params = ModelParams::default();
    let mut done = 0;
    let mut drop = 0;
    while done < 20 {
        let s = drop_seed(0x1A51, 0, drop);
        drop += 1;
        let category = if done % 2 == 0 {
            Category::First
        } else {
            Category::Second
        };
        let setup = DropSetup::<f64>::generate(&config, &params, category, s)?;
        let bases = setup.model.bases();
        let sizes = setup.sizes();
        // Only pairs with a positive bound make the comparison informative.
        let Some((c, l, bound)) = (0..config.num_clusters)
            .flat_map(|c| (0..config.num_bs).map(move |l| (c, l)))
            .filter(|&(c, l)| (c + l + drop) % 2 == 0)
            .find_map(|(c, l)| match &setup.prebeamformers[c][l] {
                Some(Ok(p)) => {
                    let at_bs: Vec<_> = bases.iter().map(|row| row[l]).collect();
                    let bound = compute_laslnr(&at_bs, &p.matrix, c, &sizes, setup.power(), setup.noise());
                    (bound > 0.0).then_some((c, l, bound))
                }
                _ => None,
            })
        else {
            continue;
        };

        let mut per_user = vec![Vec::with_capacity(DRAWS); config.users_per_cluster];
        for d in 0..DRAWS {
            let draw = setup.draw(&mut channel_rng(s, d));
            if let Some(records) = slnr_from_gains(&draw.gains, c, l, setup.noise()) {
                for r in records {
                    per_user[r.user].push(r.slnr);
                }
            }
        }
        let mut worst = f64::INFINITY;
        for samples in &per_user {
            let sum = summarize(samples)?;
            worst = worst.min(sum.mean + 3.0 * sum.stderr - bound);
        }
        report.check(
            format!("triple {done} (cluster {c}, bs {l}, {})", category.as_str()),
            worst >= 0.0,
            format!("LASLNR {bound:.4e}, worst margin {worst:.4e}"),
        );
        done += 1;
    }
    Ok(())
}

fn ordering(report: &mut SuiteReport) -> Result<()> {
    let mut plan = preset("power-first").expect("built-in preset");
    plan.sweep_var = SweepVar::PtDb;
    plan.sweep_values = vec![20.0];
    plan.num_drops = 50;
    let out = run_experiment(&plan, 0)?;
    let row = |a: Algorithm| out.rows.iter().find(|r| r.algorithm == a).expect("row per algorithm");
    for proposed in [Algorithm::GreedySlnr, Algorithm::GreedyLaslnr] {
        for baseline in [Algorithm::Random, Algorithm::LargestEnergy] {
            let (p, b) = (row(proposed), row(baseline));
            let pooled = (p.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            report.check(
                format!("{proposed} > {baseline}"),
                p.mean_sum_rate - b.mean_sum_rate > 2.0 * pooled,
                format!(
                    "{:.3} vs {:.3}, pooled SE {pooled:.3}",
                    p.mean_sum_rate, b.mean_sum_rate
                ),
            );
        }
    }
    let mut mismatches = 0;
    for d in out.drops.iter().filter(|d| d.algorithm == Algorithm::Exhaustive) {
        let g = out
            .drops
            .iter()
            .find(|x| x.algorithm == Algorithm::GreedySlnr && x.drop == d.drop)
            .map(|x| x.sum_rate);
        if g.is_none_or(|g| (g - d.sum_rate).abs() > 1e-9 * d.sum_rate.abs()) {
            mismatches += 1;
        }
    }
    report.check(
        "exhaustive = greedy-slnr per drop",
        mismatches == 0,
        format!("{mismatches} mismatches"),
    );
    report.check(
        "no failed drops",
        out.failures.is_empty(),
        format!("{} failures", out.failures.len()),
    );
    Ok(())
}
