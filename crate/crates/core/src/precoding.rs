//! Two-stage precoding: statistical prebeamformers (exact and approximate
//! block diagonalization) followed by a zero-forcing inner precoder on the
//! reduced effective channel.

use nalgebra::{DMatrix, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fix_phase, hermitian_eigen_desc, ChannelModel, ChannelRealization, EigenBasis};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::scalar::{lit, subspace_tol, to_f64, Cplx, Real};
use crate::scenario::Scenario;

const SVD_MAX_ITER: usize = 10_000;

/// Which family a prebeamformer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    /// Exact nulling of every other cluster's eigenspace (BD).
    First,
    /// Nulling of the dominant part only (approximate BD).
    Second,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::First => "first",
            Category::Second => "second",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "bd" => Ok(Category::First),
            "second" | "abd" => Ok(Category::Second),
            _ => Err(Error::Parse(format!("unknown category `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Prebeamformer<T: Real> {
    /// `N × M`, orthonormal columns.
    pub matrix: DMatrix<Cplx<T>>,
    pub category: Category,
    /// Dimension of the subspace that was nulled.
    pub nulled_rank: usize,
}

impl<T: Real> Prebeamformer<T> {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Exact block diagonalization: the `m` dominant directions of the target's
/// covariance after projection onto the orthogonal complement of every
/// interferer's eigenspace.
pub fn bd_prebeamformer<T: Real>(
    target: &EigenBasis<T>,
    interferers: &[&EigenBasis<T>],
    m: usize,
) -> Result<Prebeamformer<T>> {
    let spaces: Vec<_> = interferers.iter().map(|b| b.vectors.clone()).collect();
    project_dominant(target, &spaces, m, Category::First)
}

/// Approximate block diagonalization: each interferer only contributes the
/// eigenvectors holding `energy` of its eigenvalue mass.
pub fn abd_prebeamformer<T: Real>(
    target: &EigenBasis<T>,
    interferers: &[&EigenBasis<T>],
    m: usize,
    energy: f64,
) -> Result<Prebeamformer<T>> {
    let spaces: Vec<_> = interferers
        .iter()
        .map(|b| b.leading(b.count_for_energy(energy)))
        .collect();
    project_dominant(target, &spaces, m, Category::Second)
}

fn project_dominant<T: Real>(
    target: &EigenBasis<T>,
    interference: &[DMatrix<Cplx<T>>],
    m: usize,
    category: Category,
) -> Result<Prebeamformer<T>> {
    let n = target.dim();
    let (complement, nulled_rank) = orthogonal_complement(n, interference)?;
    let available = complement.ncols();
    if available < m {
        return Err(Error::InfeasibleNullSpace { needed: m, available });
    }

    // Compress the target's covariance into the complement and keep its top-m eigenvectors.
    let g = complement.adjoint() * target.sqrt_factor();
    let compressed = &g * g.adjoint();
    let (_, y) = hermitian_eigen_desc(&compressed)?;
    let mut matrix = complement * y.columns(0, m);
    fix_phase(&mut matrix);
    Ok(Prebeamformer {
        matrix,
        category,
        nulled_rank,
    })
}

/// Orthonormal basis of the complement of the span of `spaces`, and the rank
/// of that span.
fn orthogonal_complement<T: Real>(n: usize, spaces: &[DMatrix<Cplx<T>>]) -> Result<(DMatrix<Cplx<T>>, usize)> {
    let cols: usize = spaces.iter().map(|s| s.ncols()).sum();
    if cols == 0 {
        return Ok((DMatrix::identity(n, n), 0));
    }
    // Zero padding to at least n columns makes the SVD return a full n × n U.
    let width = cols.max(n);
    let mut stacked = DMatrix::zeros(n, width);
    let mut at = 0;
    for s in spaces {
        stacked.columns_mut(at, s.ncols()).copy_from(s);
        at += s.ncols();
    }
    let svd = SVD::try_new(stacked, true, false, T::default_epsilon(), SVD_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("SVD of interference space did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let tol = subspace_tol::<T>() * sigma_max.max(T::one());
    let null_idx: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= tol).collect();
    let mut complement = DMatrix::zeros(n, null_idx.len());
    for (j, &i) in null_idx.iter().enumerate() {
        complement.set_column(j, &u.column(i));
    }
    Ok((complement, n - null_idx.len()))
}

/// Zero-forcing precoder on a `K × M` effective channel.
#[derive(Clone, Debug)]
pub struct InnerPrecoder<T: Real> {
    /// `M × K`; column `k` has squared norm `power`.
    pub matrix: DMatrix<Cplx<T>>,
    pub power: T,
}

/// `V₀ = H̄^H (H̄ H̄^H)^{-1}` via the SVD pseudo-inverse, columns rescaled to
/// squared norm `power`.
pub fn zf_inner_precoder<T: Real>(effective: &DMatrix<Cplx<T>>, power: T) -> Result<InnerPrecoder<T>> {
    let (k, m) = effective.shape();
    if k == 0 {
        return Ok(InnerPrecoder {
            matrix: DMatrix::zeros(m, 0),
            power,
        });
    }
    if m < k {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let svd = SVD::try_new(effective.clone(), true, true, T::default_epsilon(), SVD_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("SVD of effective channel did not converge".into()))?;
    let s = &svd.singular_values;
    let smax = s.iter().fold(T::zero(), |a, &b| a.max(b));
    let smin = s.iter().fold(smax, |a, &b| a.min(b));
    let floor = lit::<T>(1e-10).max(T::default_epsilon() * lit(100.0));
    if smax == T::zero() || smin < floor * smax {
        let condition = if smin == T::zero() {
            f64::INFINITY
        } else {
            to_f64(smax / smin)
        };
        return Err(Error::RankDeficient { condition });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    // pinv = V Σ^{-1} U^H
    let mut scaled = v_t.adjoint();
    for (j, &sv) in s.iter().enumerate() {
        scaled.column_mut(j).scale_mut(T::one() / sv);
    }
    let mut matrix = scaled * u.adjoint();
    let target = power.sqrt();
    for mut col in matrix.column_iter_mut() {
        let norm = col.norm();
        col.scale_mut(target / norm);
    }
    Ok(InnerPrecoder { matrix, power })
}

/// Prebeamformer for `cluster` at `bs`, nulling every other cluster the BS
/// can see. Independent of which clusters the BS ends up serving.
pub fn prebeamformer_for<T: Real>(
    model: &ChannelModel<T>,
    scenario: &Scenario,
    cluster: usize,
    bs: usize,
    m: usize,
    category: Category,
    params: &ModelParams,
) -> Option<Result<Prebeamformer<T>>> {
    if !scenario.is_active(cluster, bs) {
        return None;
    }
    let target = model.basis(cluster, bs)?;
    let interferers: Vec<&EigenBasis<T>> = (0..model.num_clusters())
        .filter(|&c| c != cluster && scenario.is_active(c, bs))
        .filter_map(|c| model.basis(c, bs))
        .collect();
    let built = match category {
        Category::First => bd_prebeamformer(target, &interferers, m),
        Category::Second => abd_prebeamformer(target, &interferers, m, params.abd_energy),
    };
    Some(built.map_err(|e| e.at(bs, cluster)))
}

/// Prebeamformers for every active (cluster, BS) pair, indexed `[cluster][bs]`.
pub type PrebeamformerTable<T> = Vec<Vec<Option<Result<Prebeamformer<T>>>>>;

/// Builds all candidate prebeamformers with `M = K_c`.
pub fn build_prebeamformers<T: Real>(
    model: &ChannelModel<T>,
    scenario: &Scenario,
    category: Category,
    params: &ModelParams,
) -> PrebeamformerTable<T> {
    let (nc, nl) = (scenario.num_clusters(), scenario.num_bs());
    let m = scenario.config.users_per_cluster;
    let flat: Vec<_> = (0..nc * nl)
        .into_par_iter()
        .map(|idx| prebeamformer_for(model, scenario, idx / nl, idx % nl, m, category, params))
        .collect();
    let mut it = flat.into_iter();
    (0..nc).map(|_| it.by_ref().take(nl).collect()).collect()
}

/// Full two-stage precoder of one cluster at one BS.
#[derive(Clone, Debug)]
pub struct LinkPrecoder<T: Real> {
    pub prebeamformer: Prebeamformer<T>,
    pub inner: InnerPrecoder<T>,
    /// `P = B V`, `N × K`.
    pub combined: DMatrix<Cplx<T>>,
}

/// Builds the inner precoder on `H̄ = H B` for a realized channel.
pub fn link_precoder<T: Real>(
    prebeamformer: &Prebeamformer<T>,
    channel: &crate::channel::LinkChannel<T>,
    power: T,
) -> Result<LinkPrecoder<T>> {
    let effective = channel.downlink() * &prebeamformer.matrix;
    let inner = zf_inner_precoder(&effective, power)?;
    let combined = &prebeamformer.matrix * &inner.matrix;
    Ok(LinkPrecoder {
        prebeamformer: prebeamformer.clone(),
        inner,
        combined,
    })
}

/// Precoders of every candidate (cluster, BS) pair for one realization.
/// `None` marks pairs that are not candidates; `Some(Err)` marks candidates
/// whose precoder cannot be built.
#[derive(Debug)]
pub struct PrecoderSet<T: Real> {
    pub links: Vec<Vec<Option<Result<LinkPrecoder<T>>>>>,
}

impl<T: Real> PrecoderSet<T> {
    pub fn build(prebeamformers: &PrebeamformerTable<T>, realization: &ChannelRealization<T>, power: T) -> Self {
        let links = prebeamformers
            .iter()
            .enumerate()
            .map(|(c, row)| {
                row.iter()
                    .enumerate()
                    .map(|(l, pb)| {
                        let pb = pb.as_ref()?;
                        Some(match pb {
                            Err(e) => Err(clone_error(e)),
                            Ok(pb) => {
                                let ch = realization.link(c, l).expect("active link has a channel");
                                link_precoder(pb, ch, power).map_err(|e| e.at(l, c))
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        Self { links }
    }

    pub fn get(&self, cluster: usize, bs: usize) -> Option<&LinkPrecoder<T>> {
        self.links[cluster][bs].as_ref().and_then(|r| r.as_ref().ok())
    }

    pub fn is_feasible(&self, cluster: usize, bs: usize) -> bool {
        self.get(cluster, bs).is_some()
    }

    /// Feasible candidate BSs per cluster, ascending.
    pub fn feasible_candidates(&self) -> Vec<Vec<usize>> {
        self.links
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| matches!(p, Some(Ok(_))))
                    .map(|(l, _)| l)
                    .collect()
            })
            .collect()
    }

    /// Whether `cluster` has at least one feasible BS.
    pub fn has_feasible(&self, cluster: usize) -> bool {
        self.links[cluster].iter().any(|p| matches!(p, Some(Ok(_))))
    }

    /// Precoders of an assignment, erroring on any infeasible pair.
    pub fn for_assignment(&self, cluster_to_bs: &[usize]) -> Result<Vec<&LinkPrecoder<T>>> {
        cluster_to_bs
            .iter()
            .enumerate()
            .map(|(c, &l)| match self.links[c][l].as_ref() {
                Some(Ok(p)) => Ok(p),
                Some(Err(e)) => Err(clone_error(e)),
                None => Err(Error::NoFeasibleBs { cluster: c }),
            })
            .collect()
    }
}

/// Errors carry an `io::Error` variant and are not `Clone`; this rebuilds the
/// numeric variants verbatim.
pub(crate) fn clone_error(e: &Error) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: field.clone(),
            reason: reason.clone(),
        },
        Error::DegenerateGeometry { distance, ring_radius } => Error::DegenerateGeometry {
            distance: *distance,
            ring_radius: *ring_radius,
        },
        Error::InvalidSpread { spread } => Error::InvalidSpread { spread: *spread },
        Error::NumericalFailure(s) => Error::NumericalFailure(s.clone()),
        Error::InfeasibleNullSpace { needed, available } => Error::InfeasibleNullSpace {
            needed: *needed,
            available: *available,
        },
        Error::RankDeficient { condition } => Error::RankDeficient { condition: *condition },
        Error::NoFeasibleBs { cluster } => Error::NoFeasibleBs { cluster: *cluster },
        Error::EnumerationTooLarge { count, limit } => Error::EnumerationTooLarge {
            count: *count,
            limit: *limit,
        },
        Error::EmptyInput => Error::EmptyInput,
        Error::AtPair { bs, cluster, source } => Error::AtPair {
            bs: *bs,
            cluster: *cluster,
            source: Box::new(clone_error(source)),
        },
        Error::Io { path, source } => Error::Io {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
        Error::Parse(s) => Error::Parse(s.clone()),
    }
}
