//! Base-station selection strategies.
//!
//! Every strategy returns a partition of clusters onto BSs. Candidate sets
//! exclude BSs that cannot serve a cluster (out of sector, or no feasible
//! precoder). Ties always go to the lowest BS index, or for the exhaustive
//! search to the lexicographically smallest assignment.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, ChannelRealization, EigenBasis};
use crate::error::{Error, Result};
use crate::metrics::{compute_laslnr, slnr_from_gains, GainTable};
use crate::precoding::PrebeamformerTable;
use crate::scalar::{lit, Real};

pub const DEFAULT_MAX_ENUMERATION: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Exhaustive,
    GreedySlnr,
    GreedyLaslnr,
    LargestEnergy,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Exhaustive,
        Algorithm::GreedySlnr,
        Algorithm::GreedyLaslnr,
        Algorithm::LargestEnergy,
        Algorithm::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Exhaustive => "exhaustive",
            Algorithm::GreedySlnr => "greedy-slnr",
            Algorithm::GreedyLaslnr => "greedy-laslnr",
            Algorithm::LargestEnergy => "largest-energy",
            Algorithm::Random => "random",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm `{s}`")))
    }
}

/// Which BS serves each cluster.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub cluster_to_bs: Vec<usize>,
}

impl Assignment {
    pub fn new(cluster_to_bs: Vec<usize>) -> Self {
        Self { cluster_to_bs }
    }

    pub fn bs_of(&self, cluster: usize) -> usize {
        self.cluster_to_bs[cluster]
    }

    /// The cluster sets `C_1 … C_L`.
    pub fn served_sets(&self, num_bs: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); num_bs];
        for (c, &l) in self.cluster_to_bs.iter().enumerate() {
            sets[l].push(c);
        }
        sets
    }

    /// Checks that every cluster sits on one of its candidates.
    pub fn validate(&self, candidates: &[Vec<usize>]) -> Result<()> {
        if self.cluster_to_bs.len() != candidates.len() {
            return Err(Error::config("assignment", "does not cover every cluster"));
        }
        for (c, (&l, cand)) in self.cluster_to_bs.iter().zip(candidates).enumerate() {
            if !cand.contains(&l) {
                return Err(Error::NoFeasibleBs { cluster: c });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SelectionResult<T> {
    pub assignment: Assignment,
    /// Sum-SINR (exhaustive), sum-SLNR (greedy SLNR), Σ K_c·LASLNR (greedy
    /// LASLNR) or Σ ‖H‖²_F (largest energy) of the chosen assignment.
    pub objective: Option<T>,
    /// Per-cluster score of every candidate BS examined, `[cluster][bs]`.
    pub scores: Vec<Vec<Option<T>>>,
    pub algorithm: Algorithm,
    /// Candidate evaluations performed.
    pub evaluations: u128,
}

/// Cluster by cluster in index order, pick the BS with the highest score.
/// Strict comparison keeps the lowest index on ties.
pub fn greedy_by_scores<T: Real>(scores: &[Vec<Option<T>>]) -> Result<Vec<usize>> {
    scores
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let mut best: Option<(usize, T)> = None;
            for (l, s) in row.iter().enumerate() {
                if let Some(s) = *s {
                    if best.is_none_or(|(_, b)| s > b) {
                        best = Some((l, s));
                    }
                }
            }
            best.map(|(l, _)| l).ok_or(Error::NoFeasibleBs { cluster: c })
        })
        .collect()
}

fn finish_greedy<T: Real>(scores: Vec<Vec<Option<T>>>, algorithm: Algorithm) -> Result<SelectionResult<T>> {
    let choice = greedy_by_scores(&scores)?;
    let objective = choice
        .iter()
        .enumerate()
        .map(|(c, &l)| scores[c][l].expect("chosen score exists"))
        .fold(T::zero(), |a, b| a + b);
    let evaluations = scores.iter().flatten().filter(|s| s.is_some()).count() as u128;
    Ok(SelectionResult {
        assignment: Assignment::new(choice),
        objective: Some(objective),
        scores,
        algorithm,
        evaluations,
    })
}

/// Each cluster picks the BS maximising its own sum-SLNR.
pub fn greedy_slnr_select<T: Real>(gains: &GainTable<T>, noise: T) -> Result<SelectionResult<T>> {
    let scores = (0..gains.num_clusters())
        .map(|c| {
            (0..gains.num_bs())
                .map(|l| slnr_from_gains(gains, c, l, noise).map(|recs| recs.iter().fold(T::zero(), |a, r| a + r.slnr)))
                .collect()
        })
        .collect();
    finish_greedy(scores, Algorithm::GreedySlnr)
}

/// Each cluster picks the BS maximising `K_c · LASLNR`. Uses only
/// covariances and prebeamformers, no channel realization.
pub fn greedy_laslnr_select<T: Real>(
    model: &ChannelModel<T>,
    prebeamformers: &PrebeamformerTable<T>,
    sizes: &[usize],
    power: T,
    noise: T,
) -> Result<SelectionResult<T>> {
    let nl = model.num_bs();
    let per_bs: Vec<Vec<Option<&EigenBasis<T>>>> = (0..nl)
        .map(|l| (0..model.num_clusters()).map(|c| model.basis(c, l)).collect())
        .collect();
    let scores = prebeamformers
        .iter()
        .enumerate()
        .map(|(c, row)| {
            row.iter()
                .enumerate()
                .map(|(l, pb)| {
                    let pb = pb.as_ref()?.as_ref().ok()?;
                    let v = compute_laslnr(&per_bs[l], &pb.matrix, c, sizes, power, noise);
                    Some(lit::<T>(sizes[c] as f64) * v)
                })
                .collect()
        })
        .collect();
    finish_greedy(scores, Algorithm::GreedyLaslnr)
}

/// Each cluster picks the feasible BS with the largest `‖H_c^l‖²_F`.
pub fn largest_energy_select<T: Real>(
    realization: &ChannelRealization<T>,
    candidates: &[Vec<usize>],
) -> Result<SelectionResult<T>> {
    let scores = candidates
        .iter()
        .enumerate()
        .map(|(c, cand)| {
            (0..realization.num_bs())
                .map(|l| {
                    if !cand.contains(&l) {
                        return None;
                    }
                    realization.link(c, l).map(|ch| ch.frobenius_sq())
                })
                .collect()
        })
        .collect();
    finish_greedy(scores, Algorithm::LargestEnergy)
}

/// Uniform choice among each cluster's candidates.
pub fn random_select<T: Real, R: Rng + ?Sized>(candidates: &[Vec<usize>], rng: &mut R) -> Result<SelectionResult<T>> {
    let choice = candidates
        .iter()
        .enumerate()
        .map(|(c, cand)| {
            if cand.is_empty() {
                Err(Error::NoFeasibleBs { cluster: c })
            } else {
                Ok(cand[rng.random_range(0..cand.len())])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionResult {
        assignment: Assignment::new(choice),
        objective: None,
        scores: Vec::new(),
        algorithm: Algorithm::Random,
        evaluations: 0,
    })
}

/// Feasible candidate BSs per cluster according to a gain table.
pub fn candidates_from_gains<T: Real>(gains: &GainTable<T>) -> Vec<Vec<usize>> {
    (0..gains.num_clusters())
        .map(|c| (0..gains.num_bs()).filter(|&l| gains.signal(c, l).is_some()).collect())
        .collect()
}

/// Number of assignments the exhaustive search would evaluate.
pub fn enumeration_size(candidates: &[Vec<usize>]) -> u128 {
    candidates
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX)
}

/// Decodes the `index`-th assignment in lexicographic order (cluster 0 most
/// significant, candidates ascending).
pub fn decode_assignment(candidates: &[Vec<usize>], mut index: u128) -> Vec<usize> {
    let mut out = vec![0; candidates.len()];
    for (c, cand) in candidates.iter().enumerate().rev() {
        let radix = cand.len() as u128;
        out[c] = cand[(index % radix) as usize];
        index /= radix;
    }
    out
}

/// Maximises sum-SINR over every feasible assignment. Precoders are shared
/// across assignments through the gain table, so each evaluation is only a
/// table lookup and a sum.
pub fn exhaustive_sinr_select<T: Real>(
    gains: &GainTable<T>,
    noise: T,
    max_enumeration: u128,
) -> Result<SelectionResult<T>> {
    let candidates = candidates_from_gains(gains);
    if let Some(c) = candidates.iter().position(Vec::is_empty) {
        return Err(Error::NoFeasibleBs { cluster: c });
    }
    let count = enumeration_size(&candidates);
    if count > max_enumeration {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: max_enumeration,
        });
    }

    let best = (0..count as u64)
        .into_par_iter()
        .map(|idx| {
            let a = decode_assignment(&candidates, idx as u128);
            let v = gains.sum_sinr(&a, noise).expect("candidates are feasible");
            (v, idx)
        })
        .reduce_with(|x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x })
        .expect("at least one assignment");

    Ok(SelectionResult {
        assignment: Assignment::new(decode_assignment(&candidates, best.1 as u128)),
        objective: Some(best.0),
        scores: Vec::new(),
        algorithm: Algorithm::Exhaustive,
        evaluations: count,
    })
}
