//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use bsel_core::channel::ChannelRealization;
use bsel_core::precoding::PrecoderSet;
use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;

/// First column of the one-ring covariance by a midpoint rule on `panels`
/// equal sub-intervals.
pub fn riemann_column(theta: f64, delta: f64, n: usize, ratio: f64, panels: usize) -> Vec<C64> {
    let mut acc = vec![C64::new(0.0, 0.0); n];
    let h = 2.0 * delta / panels as f64;
    for i in 0..panels {
        let alpha = theta - delta + (i as f64 + 0.5) * h;
        let step = C64::from_polar(1.0, -2.0 * PI * alpha.sin() * ratio);
        // Recomputing the power every 8 entries keeps the recurrence error
        // near machine precision.
        let mut z = C64::new(1.0, 0.0);
        for (d, slot) in acc.iter_mut().enumerate() {
            if d % 8 == 0 {
                z = C64::from_polar(1.0, -2.0 * PI * alpha.sin() * ratio * d as f64);
            }
            *slot += z;
            z *= step;
        }
    }
    acc.iter().map(|z| z / panels as f64).collect()
}

pub fn toeplitz_from_column(col: &[C64]) -> DMatrix<C64> {
    let n = col.len();
    DMatrix::from_fn(n, n, |p, q| if p >= q { col[p - q] } else { col[q - p].conj() })
}

/// `|aᴴ b|²` by explicit summation.
pub fn inner_power(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

pub fn column(m: &DMatrix<C64>, j: usize) -> Vec<C64> {
    m.column(j).iter().copied().collect()
}

/// Per-user SINR of `assignment`, straight from channel vectors and precoder
/// columns. Interference on cluster `c` comes from every other cluster `c'`
/// through the channel between `c` and the BS serving `c'`.
pub fn brute_sinr(
    realization: &ChannelRealization<f64>,
    precoders: &PrecoderSet<f64>,
    assignment: &[usize],
    noise: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    for (c, &l) in assignment.iter().enumerate() {
        let own = realization.link(c, l).expect("served link exists");
        let p = &precoders.get(c, l).expect("served precoder exists").combined;
        for k in 0..own.vectors.ncols() {
            let h = column(&own.vectors, k);
            let signal = inner_power(&h, &column(p, k));
            let mut gamma = 0.0;
            for (c2, &l2) in assignment.iter().enumerate() {
                if c2 == c {
                    continue;
                }
                let Some(link) = realization.link(c, l2) else { continue };
                let h2 = column(&link.vectors, k);
                let p2 = &precoders.get(c2, l2).unwrap().combined;
                for j in 0..p2.ncols() {
                    gamma += inner_power(&h2, &column(p2, j));
                }
            }
            out.push(signal / (gamma + noise));
        }
    }
    out
}

/// Per-user SLNR of cluster `c` served by `l`: leakage is the power its
/// streams put on every other cluster's users that have a channel to `l`.
pub fn brute_slnr(
    realization: &ChannelRealization<f64>,
    precoders: &PrecoderSet<f64>,
    c: usize,
    l: usize,
    noise: f64,
) -> Vec<f64> {
    let own = realization.link(c, l).expect("link exists");
    let p = &precoders.get(c, l).expect("precoder exists").combined;
    (0..own.vectors.ncols())
        .map(|k| {
            let pk = column(p, k);
            let signal = inner_power(&column(&own.vectors, k), &pk);
            let mut leak = 0.0;
            for c2 in (0..realization.num_clusters()).filter(|&x| x != c) {
                if let Some(link) = realization.link(c2, l) {
                    for j in 0..link.vectors.ncols() {
                        leak += inner_power(&column(&link.vectors, j), &pk);
                    }
                }
            }
            signal / (leak + noise)
        })
        .collect()
}

/// Every assignment over `candidates`, in lexicographic order.
pub fn all_assignments(candidates: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for cand in candidates {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                cand.iter().map(move |&l| {
                    let mut p = prefix.clone();
                    p.push(l);
                    p
                })
            })
            .collect();
    }
    out
}

/// Sample mean and standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
