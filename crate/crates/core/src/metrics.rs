//! Per-user SINR and SLNR, the covariance-only LASLNR lower bound, and
//! Shannon sum-rates.
//!
//! Every received power is `|h^H B v|²` (see the channel module for the
//! conjugation convention). A [`GainTable`] caches all cross-link powers of a
//! realization so assignments can be scored without touching the channels
//! again.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{ChannelRealization, EigenBasis};
use crate::precoding::PrecoderSet;
use crate::scalar::{lit, Cplx, Real};

/// Received powers between precoders and users of one realization.
#[derive(Clone, Debug)]
pub struct GainTable<T: Real> {
    /// `[cluster][bs][user]`: desired power when `cluster` is served by `bs`.
    signal: Vec<Vec<Option<Vec<T>>>>,
    /// `[victim][bs][aggressor]`: per victim user, power received from all
    /// streams of the aggressor's precoder at `bs`.
    incoming: Vec<Vec<Vec<Option<Vec<T>>>>>,
    /// `[victim][bs][aggressor]`: per aggressor stream, power leaked onto all
    /// users of the victim.
    outgoing: Vec<Vec<Vec<Option<Vec<T>>>>>,
    sizes: Vec<usize>,
}

impl<T: Real> GainTable<T> {
    pub fn build(realization: &ChannelRealization<T>, precoders: &PrecoderSet<T>) -> Self {
        let nc = realization.num_clusters();
        let nl = realization.num_bs();
        let sizes = realization.users_per_cluster.clone();

        // One (victim, bs) slot per parallel task.
        let rows: Vec<_> = (0..nc * nl)
            .into_par_iter()
            .map(|idx| {
                let (v, l) = (idx / nl, idx % nl);
                let mut incoming = vec![None; nc];
                let mut outgoing = vec![None; nc];
                let mut signal = None;
                if let Some(ch) = realization.link(v, l) {
                    let rows = ch.downlink();
                    for a in 0..nc {
                        let Some(p) = precoders.get(a, l) else { continue };
                        let g = power_matrix(&rows, &p.combined);
                        if a == v {
                            signal = Some((0..g.nrows()).map(|k| g[(k, k)]).collect());
                        }
                        incoming[a] = Some(g.row_iter().map(|r| r.sum()).collect());
                        outgoing[a] = Some(g.column_iter().map(|c| c.sum()).collect());
                    }
                }
                (signal, incoming, outgoing)
            })
            .collect();

        let mut signal = vec![vec![None; nl]; nc];
        let mut incoming = vec![vec![Vec::new(); nl]; nc];
        let mut outgoing = vec![vec![Vec::new(); nl]; nc];
        for (idx, (s, i, o)) in rows.into_iter().enumerate() {
            let (v, l) = (idx / nl, idx % nl);
            signal[v][l] = s;
            incoming[v][l] = i;
            outgoing[v][l] = o;
        }
        Self {
            signal,
            incoming,
            outgoing,
            sizes,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_bs(&self) -> usize {
        self.signal.first().map_or(0, Vec::len)
    }

    pub fn users(&self, cluster: usize) -> usize {
        self.sizes[cluster]
    }

    /// Desired power per user of `cluster` if served by `bs`.
    pub fn signal(&self, cluster: usize, bs: usize) -> Option<&[T]> {
        self.signal[cluster][bs].as_deref()
    }

    /// Power reaching each user of `victim` from the precoder `aggressor` uses at `bs`.
    pub fn incoming(&self, victim: usize, bs: usize, aggressor: usize) -> Option<&[T]> {
        self.incoming[victim][bs].get(aggressor)?.as_deref()
    }

    /// Per stream of `cluster` at `bs`, power leaked onto all other clusters'
    /// users that have a channel to `bs`.
    pub fn leakage(&self, cluster: usize, bs: usize) -> Option<Vec<T>> {
        self.signal(cluster, bs)?;
        let mut acc = vec![T::zero(); self.sizes[cluster]];
        for v in (0..self.num_clusters()).filter(|&v| v != cluster) {
            if let Some(out) = self.outgoing[v][bs].get(cluster).and_then(|o| o.as_ref()) {
                for (a, &x) in acc.iter_mut().zip(out) {
                    *a += x;
                }
            }
        }
        Some(acc)
    }

    /// Inter-cluster interference on each user of `cluster` under `assignment`.
    pub fn interference(&self, cluster: usize, assignment: &[usize]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.sizes[cluster]];
        for (a, &la) in assignment.iter().enumerate() {
            if a == cluster {
                continue;
            }
            if let Some(inc) = self.incoming(cluster, la, a) {
                for (x, &y) in acc.iter_mut().zip(inc) {
                    *x += y;
                }
            }
        }
        acc
    }

    /// Σ SINR over all users of an assignment; `None` if any pair is infeasible.
    pub fn sum_sinr(&self, assignment: &[usize], noise: T) -> Option<T> {
        let mut total = T::zero();
        for (c, &l) in assignment.iter().enumerate() {
            let sig = self.signal(c, l)?;
            let gamma = self.interference(c, assignment);
            for (s, g) in sig.iter().zip(gamma) {
                total += *s / (g + noise);
            }
        }
        Some(total)
    }
}

fn power_matrix<T: Real>(rows: &DMatrix<Cplx<T>>, precoder: &DMatrix<Cplx<T>>) -> DMatrix<T> {
    (rows * precoder).map(|z| z.norm_sqr())
}

/// SINR record of one served user.
#[derive(Clone, Debug, PartialEq)]
pub struct SinrRecord<T> {
    pub cluster: usize,
    pub user: usize,
    pub bs: usize,
    pub signal: T,
    /// Inter-cluster interference power γ.
    pub interference: T,
    pub sinr: T,
    pub rate: T,
}

/// SLNR record of one user for a candidate BS.
#[derive(Clone, Debug, PartialEq)]
pub struct SlnrRecord<T> {
    pub cluster: usize,
    pub user: usize,
    pub bs: usize,
    pub signal: T,
    /// Leaked power ζ.
    pub leakage: T,
    pub slnr: T,
}

/// `log₂(1 + x)`.
pub fn shannon_rate<T: Real>(sinr: T) -> T {
    (T::one() + sinr).log2()
}

/// SINR of every user under `assignment`. `None` if a pair of the assignment
/// has no precoder.
pub fn compute_sinr<T: Real>(
    realization: &ChannelRealization<T>,
    precoders: &PrecoderSet<T>,
    assignment: &[usize],
    noise: T,
) -> Option<Vec<SinrRecord<T>>> {
    sinr_from_gains(&GainTable::build(realization, precoders), assignment, noise)
}

pub fn sinr_from_gains<T: Real>(gains: &GainTable<T>, assignment: &[usize], noise: T) -> Option<Vec<SinrRecord<T>>> {
    let mut out = Vec::new();
    for (c, &l) in assignment.iter().enumerate() {
        let sig = gains.signal(c, l)?;
        let gamma = gains.interference(c, assignment);
        for (k, (&s, g)) in sig.iter().zip(gamma).enumerate() {
            let sinr = s / (g + noise);
            out.push(SinrRecord {
                cluster: c,
                user: k,
                bs: l,
                signal: s,
                interference: g,
                sinr,
                rate: shannon_rate(sinr),
            });
        }
    }
    Some(out)
}

/// SLNR of every user of `cluster` if it were served by `bs`. Needs no
/// knowledge of where other clusters are served.
pub fn compute_slnr<T: Real>(
    realization: &ChannelRealization<T>,
    precoders: &PrecoderSet<T>,
    cluster: usize,
    bs: usize,
    noise: T,
) -> Option<Vec<SlnrRecord<T>>> {
    slnr_from_gains(&GainTable::build(realization, precoders), cluster, bs, noise)
}

pub fn slnr_from_gains<T: Real>(
    gains: &GainTable<T>,
    cluster: usize,
    bs: usize,
    noise: T,
) -> Option<Vec<SlnrRecord<T>>> {
    let sig = gains.signal(cluster, bs)?;
    let leak = gains.leakage(cluster, bs)?;
    Some(
        sig.iter()
            .zip(leak)
            .enumerate()
            .map(|(k, (&s, z))| SlnrRecord {
                cluster,
                user: k,
                bs,
                signal: s,
                leakage: z,
                slnr: s / (z + noise),
            })
            .collect(),
    )
}

/// `tr(B^H R B)` for `R = E Λ E^H`.
pub fn projected_power<T: Real>(basis: &EigenBasis<T>, prebeamformer: &DMatrix<Cplx<T>>) -> T {
    (prebeamformer.adjoint() * basis.sqrt_factor()).norm_squared()
}

/// Lower bound on the average SLNR of any user of `cluster` at a BS:
///
/// `[tr(BᴴR_cB) − (K_c − 1)λ_c] / [Σ_{c'≠c} K_{c'} tr(BᴴR_{c'}B) + σ²/P_t]`
///
/// `bases` holds the eigenbasis of every cluster at that BS (`None` for
/// clusters the BS does not see). Not clamped: a negative value is returned
/// as is.
pub fn compute_laslnr<T: Real>(
    bases: &[Option<&EigenBasis<T>>],
    prebeamformer: &DMatrix<Cplx<T>>,
    cluster: usize,
    sizes: &[usize],
    power: T,
    noise: T,
) -> T {
    let own = bases[cluster].expect("target cluster must have a covariance at this BS");
    let numerator = projected_power(own, prebeamformer) - lit::<T>(sizes[cluster] as f64 - 1.0) * own.largest;
    let leak = bases
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != cluster)
        .filter_map(|(c, b)| b.map(|b| lit::<T>(sizes[c] as f64) * projected_power(b, prebeamformer)))
        .fold(T::zero(), |a, b| a + b);
    numerator / (leak + noise / power)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SumRate<T> {
    /// bits/s/Hz over all served users
    pub system: T,
    /// `system / C`
    pub per_cluster: T,
}

pub fn sum_rate<T: Real>(sinrs: impl IntoIterator<Item = T>, num_clusters: usize) -> SumRate<T> {
    let system = sinrs.into_iter().map(shannon_rate).fold(T::zero(), |a, b| a + b);
    SumRate {
        system,
        per_cluster: system / lit(num_clusters.max(1) as f64),
    }
}
