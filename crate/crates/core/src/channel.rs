//! One-ring channel covariance, its truncated eigenstructure, and
//! Karhunen-Loeve sampling of correlated channels.
//!
//! Convention: `h` is the per-user channel vector with `E{h h^H} = R`; the
//! downlink row a user sees is `h^H`, so a precoder column `p` delivers
//! amplitude `h^H p`. Nulling with `E^H B = 0` then removes the channel
//! exactly, and every power expectation reads `tr(B^H R B)`.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quadrature::GaussLegendre;
use crate::scalar::{exact_rank_floor, lit, phase_pivot_tol, to_f64, Cplx, Real};
use crate::scenario::Scenario;

/// Largest phase excursion (radians) one quadrature panel is asked to resolve.
const MAX_PHASE_PER_PANEL: f64 = 150.0;

const EIGEN_MAX_ITER: usize = 10_000;

/// Hermitian Toeplitz covariance of a one-ring link.
#[derive(Clone, Debug)]
pub struct Covariance<T: Real> {
    pub matrix: DMatrix<Cplx<T>>,
    pub azimuth: T,
    pub spread: T,
    pub spacing_ratio: T,
}

impl<T: Real> Covariance<T> {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// First column `[R]_{d,0}` for `d = 0..N`.
    pub fn first_column(&self) -> Vec<Cplx<T>> {
        self.matrix.column(0).iter().copied().collect()
    }
}

/// Builds the covariance with the default 200-node rule.
pub fn build_covariance<T: Real>(azimuth: T, spread: T, n: usize, spacing_ratio: T) -> Result<Covariance<T>> {
    build_covariance_with(azimuth, spread, n, spacing_ratio, &GaussLegendre::new(200))
}

/// Entry `(p, q)` is the average of `exp(-2iπ (p-q) sin(α) τ/λ)` over
/// `α ∈ [θ-Δ, θ+Δ]`. The interval is split into equal panels so that no
/// panel sees more than 150 radians of phase.
pub fn build_covariance_with<T: Real>(
    azimuth: T,
    spread: T,
    n: usize,
    spacing_ratio: T,
    rule: &GaussLegendre<T>,
) -> Result<Covariance<T>> {
    let half_pi = T::frac_pi_2();
    if !(spread >= T::zero() && spread < half_pi) {
        return Err(Error::InvalidSpread { spread: to_f64(spread) });
    }
    assert!(n >= 1, "covariance needs at least one antenna");
    let two_pi = T::two_pi();

    let column: Vec<Cplx<T>> = if spread == T::zero() {
        let s = azimuth.sin();
        (0..n)
            .map(|d| {
                let phase = -two_pi * lit::<T>(d as f64) * s * spacing_ratio;
                Cplx::new(phase.cos(), phase.sin())
            })
            .collect()
    } else {
        let max_phase = to_f64(two_pi * spacing_ratio * spread * lit(2.0)) * (n.saturating_sub(1)) as f64;
        let panels = ((max_phase / MAX_PHASE_PER_PANEL).ceil() as usize).max(1);
        let lo = azimuth - spread;
        let width = spread * lit(2.0) / lit(panels as f64);
        let mut acc = vec![Cplx::new(T::zero(), T::zero()); n];
        for panel in 0..panels {
            let a = lo + width * lit(panel as f64);
            let b = a + width;
            for (alpha, w) in rule.mapped(a, b) {
                let base = -two_pi * alpha.sin() * spacing_ratio;
                for (d, slot) in acc.iter_mut().enumerate().skip(1) {
                    let phase = base * lit(d as f64);
                    *slot += Cplx::new(phase.cos() * w, phase.sin() * w);
                }
            }
        }
        let norm = T::one() / (spread * lit(2.0));
        acc[0] = Cplx::new(T::one(), T::zero());
        for slot in acc.iter_mut().skip(1) {
            *slot *= norm;
        }
        acc
    };

    let matrix = DMatrix::from_fn(n, n, |p, q| if p >= q { column[p - q] } else { column[q - p].conj() });
    Ok(Covariance {
        matrix,
        azimuth,
        spread,
        spacing_ratio,
    })
}

/// How many eigenpairs to retain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankRule {
    /// Smallest rank keeping at least `1 - eps` of the trace.
    Mass(f64),
    /// Every eigenvalue above `1e-12`.
    Exact,
}

/// Truncated eigenpairs of a covariance, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct EigenBasis<T: Real> {
    /// `N × r`, orthonormal columns.
    pub vectors: DMatrix<Cplx<T>>,
    pub values: Vec<T>,
    /// Largest eigenvalue of the untruncated matrix.
    pub largest: T,
    pub trace: T,
}

impl<T: Real> EigenBasis<T> {
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `E Λ^{1/2}`, the `N × r` square-root factor of the truncated covariance.
    pub fn sqrt_factor(&self) -> DMatrix<Cplx<T>> {
        let mut f = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let s = v.max(T::zero()).sqrt();
            f.column_mut(j).scale_mut(s);
        }
        f
    }

    /// `E Λ E^H`.
    pub fn reconstruct(&self) -> DMatrix<Cplx<T>> {
        let f = self.sqrt_factor();
        &f * f.adjoint()
    }

    /// The leading `count` eigenvectors.
    pub fn leading(&self, count: usize) -> DMatrix<Cplx<T>> {
        self.vectors.columns(0, count.min(self.rank())).into_owned()
    }

    /// Smallest number of leading eigenpairs holding `fraction` of the
    /// retained eigenvalue mass.
    pub fn count_for_energy(&self, fraction: f64) -> usize {
        if fraction >= 1.0 {
            return self.rank();
        }
        let total: T = self.values.iter().fold(T::zero(), |a, &b| a + b);
        let target = total * lit(fraction);
        let mut acc = T::zero();
        for (i, &v) in self.values.iter().enumerate() {
            acc += v;
            if acc >= target {
                return i + 1;
            }
        }
        self.rank()
    }
}

/// Hermitian eigendecomposition of `r`, truncated by `rule`.
pub fn eigen_truncate<T: Real>(r: &DMatrix<Cplx<T>>, rule: RankRule) -> Result<EigenBasis<T>> {
    let (values, vectors) = hermitian_eigen_desc(r)?;
    let trace = (0..r.nrows()).fold(T::zero(), |a, i| a + r[(i, i)].re);
    let largest = values.first().copied().unwrap_or(T::zero()).max(T::zero());

    let keep = match rule {
        RankRule::Exact => {
            let floor = exact_rank_floor::<T>();
            values.iter().take_while(|&&v| v > floor).count()
        }
        RankRule::Mass(eps) => {
            let target = trace * lit(1.0 - eps);
            let mut acc = T::zero();
            let mut k = 0;
            for &v in &values {
                if acc >= target || v <= T::zero() {
                    break;
                }
                acc += v;
                k += 1;
            }
            k
        }
    };

    Ok(EigenBasis {
        vectors: vectors.columns(0, keep).into_owned(),
        values: values[..keep].to_vec(),
        largest,
        trace,
    })
}

/// Eigenvalues (negatives clamped to zero) in descending order with
/// eigenvectors normalised by [`fix_phase`].
pub(crate) fn hermitian_eigen_desc<T: Real>(m: &DMatrix<Cplx<T>>) -> Result<(Vec<T>, DMatrix<Cplx<T>>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    // Symmetrise away round-off before decomposing.
    let herm = (m + m.adjoint()) * Cplx::new(lit::<T>(0.5), T::zero());
    let eig = SymmetricEigen::try_new(herm, T::default_epsilon(), EIGEN_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure(format!("Hermitian eigensolver did not converge (n = {n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    fix_phase(&mut vectors);
    Ok((values, vectors))
}

/// Rotates every column so its first non-negligible entry is real positive.
pub fn fix_phase<T: Real>(m: &mut DMatrix<Cplx<T>>) {
    let tol = phase_pivot_tol::<T>();
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm == T::zero() {
            continue;
        }
        if let Some(pivot) = col.iter().find(|z| z.modulus() > tol * norm).copied() {
            let rot = pivot.conj() / Cplx::new(pivot.modulus(), T::zero());
            col *= rot;
        }
    }
}

/// Covariances and eigenbases for every modelled (cluster, BS) link.
#[derive(Clone, Debug)]
pub struct ChannelModel<T: Real> {
    /// Indexed `[cluster][bs]`; `None` for links that are not modelled.
    pub links: Vec<Vec<Option<LinkModel<T>>>>,
    pub num_antennas: usize,
}

#[derive(Clone, Debug)]
pub struct LinkModel<T: Real> {
    pub covariance: Covariance<T>,
    pub basis: EigenBasis<T>,
}

impl<T: Real> ChannelModel<T> {
    /// Builds every link that is active (in sector, or all links when
    /// `full_interference` is set).
    pub fn build(scenario: &Scenario, params: &ModelParams) -> Result<Self> {
        let n = scenario.config.num_antennas;
        let spacing = lit::<T>(scenario.config.antenna_spacing_ratio);
        let rule = GaussLegendre::<T>::new(params.quad_nodes);
        let rank_rule = params.rank_rule();
        let (nc, nl) = (scenario.num_clusters(), scenario.num_bs());

        let flat: Vec<Option<LinkModel<T>>> = (0..nc * nl)
            .into_par_iter()
            .map(|idx| {
                let (c, l) = (idx / nl, idx % nl);
                if !(scenario.is_active(c, l) || params.full_interference) {
                    return Ok(None);
                }
                let g = scenario.link(c, l);
                let covariance =
                    build_covariance_with(lit(g.azimuth), lit(g.spread), n, spacing, &rule).map_err(|e| e.at(l, c))?;
                let basis = eigen_truncate(&covariance.matrix, rank_rule).map_err(|e| e.at(l, c))?;
                Ok(Some(LinkModel { covariance, basis }))
            })
            .collect::<Result<_>>()?;

        let mut it = flat.into_iter();
        let links = (0..nc).map(|_| it.by_ref().take(nl).collect()).collect();
        Ok(Self { links, num_antennas: n })
    }

    pub fn num_clusters(&self) -> usize {
        self.links.len()
    }

    pub fn num_bs(&self) -> usize {
        self.links.first().map_or(0, Vec::len)
    }

    pub fn link(&self, cluster: usize, bs: usize) -> Option<&LinkModel<T>> {
        self.links[cluster][bs].as_ref()
    }

    pub fn basis(&self, cluster: usize, bs: usize) -> Option<&EigenBasis<T>> {
        self.link(cluster, bs).map(|m| &m.basis)
    }

    pub fn bases(&self) -> Vec<Vec<Option<&EigenBasis<T>>>> {
        self.links
            .iter()
            .map(|row| row.iter().map(|m| m.as_ref().map(|m| &m.basis)).collect())
            .collect()
    }
}

/// Channels of every user of one cluster toward one BS.
#[derive(Clone, Debug)]
pub struct LinkChannel<T: Real> {
    /// `N × K`: column `k` is `h_k = E Λ^{1/2} w_k`.
    pub vectors: DMatrix<Cplx<T>>,
    /// `r × K` whitened coefficients.
    pub whitened: DMatrix<Cplx<T>>,
}

impl<T: Real> LinkChannel<T> {
    /// `K × N` downlink matrix whose row `k` is `h_k^H`.
    pub fn downlink(&self) -> DMatrix<Cplx<T>> {
        self.vectors.adjoint()
    }

    pub fn frobenius_sq(&self) -> T {
        self.vectors.norm_squared()
    }
}

/// One realization of every modelled link.
#[derive(Clone, Debug)]
pub struct ChannelRealization<T: Real> {
    /// Indexed `[cluster][bs]`.
    pub links: Vec<Vec<Option<LinkChannel<T>>>>,
    pub users_per_cluster: Vec<usize>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn link(&self, cluster: usize, bs: usize) -> Option<&LinkChannel<T>> {
        self.links[cluster][bs].as_ref()
    }

    pub fn num_clusters(&self) -> usize {
        self.links.len()
    }

    pub fn num_bs(&self) -> usize {
        self.links.first().map_or(0, Vec::len)
    }
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Cplx<T> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Cplx::new(lit(re * s), lit(im * s))
}

/// Draws `h = E Λ^{1/2} w` for each user. Draw order is cluster-major,
/// then BS, then user, then eigen-coefficient.
pub fn sample_channels<T: Real, R: Rng + ?Sized>(
    bases: &[Vec<Option<&EigenBasis<T>>>],
    users_per_cluster: &[usize],
    rng: &mut R,
) -> ChannelRealization<T> {
    let links = bases
        .iter()
        .zip(users_per_cluster)
        .map(|(row, &k)| row.iter().map(|basis| basis.map(|b| sample_link(b, k, rng))).collect())
        .collect();
    ChannelRealization {
        links,
        users_per_cluster: users_per_cluster.to_vec(),
    }
}

pub fn sample_link<T: Real, R: Rng + ?Sized>(basis: &EigenBasis<T>, users: usize, rng: &mut R) -> LinkChannel<T> {
    let r = basis.rank();
    let mut whitened = DMatrix::zeros(r, users);
    for k in 0..users {
        for i in 0..r {
            whitened[(i, k)] = complex_gaussian(rng);
        }
    }
    let vectors = basis.sqrt_factor() * &whitened;
    LinkChannel { vectors, whitened }
}
