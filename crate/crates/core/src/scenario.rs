//! Network geometry: base stations on the cell boundary with 120° sector
//! antennas, uniformly dropped clusters, and the one-ring parameters each
//! (cluster, BS) link feeds into the channel model.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-opening of a sector antenna (60°).
pub const SECTOR_HALF_WIDTH: f64 = PI / 3.0;

const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

/// Physical description of one network instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// meters
    pub cell_radius: f64,
    pub num_bs: usize,
    pub num_clusters: usize,
    pub users_per_cluster: usize,
    pub num_antennas: usize,
    /// antenna spacing over carrier wavelength
    pub antenna_spacing_ratio: f64,
    /// meters
    pub ring_radius: f64,
    /// linear
    pub noise_power: f64,
    /// linear, per user
    pub per_user_power: f64,
    pub rng_seed: u64,
    /// Lets every BS serve and interfere with every cluster regardless of sector.
    pub ignore_sectors: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            cell_radius: 1000.0,
            num_bs: 3,
            num_clusters: 8,
            users_per_cluster: 3,
            num_antennas: 64,
            antenna_spacing_ratio: 0.5,
            ring_radius: 100.0,
            noise_power: 1.0,
            per_user_power: 100.0,
            rng_seed: 1,
            ignore_sectors: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_radius", self.cell_radius),
            ("ring_radius", self.ring_radius),
            ("noise_power", self.noise_power),
            ("per_user_power", self.per_user_power),
            ("antenna_spacing_ratio", self.antenna_spacing_ratio),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive and finite, got {v}")));
            }
        }
        for (field, v) in [
            ("num_bs", self.num_bs),
            ("num_clusters", self.num_clusters),
            ("users_per_cluster", self.users_per_cluster),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        let users = self.num_clusters * self.users_per_cluster;
        if self.num_antennas < users {
            return Err(Error::config(
                "num_antennas",
                format!("{} antennas cannot serve {users} users from one BS", self.num_antennas),
            ));
        }
        if self.ring_radius >= self.cell_radius {
            return Err(Error::config("ring_radius", "must be smaller than cell_radius"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: [f64; 2],
    /// Absolute direction of the array broadside, radians.
    pub boresight: f64,
}

/// One-ring parameters of a (cluster, BS) link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    /// Azimuth of the ring center relative to the BS boresight, radians.
    pub azimuth: f64,
    /// Half-width of the angular spread, radians.
    pub spread: f64,
    pub distance: f64,
    pub in_sector: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    pub position: [f64; 2],
    /// Indexed by BS.
    pub links: Vec<LinkGeometry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: NetworkConfig,
    pub base_stations: Vec<BaseStation>,
    pub clusters: Vec<ClusterGeometry>,
}

impl Scenario {
    pub fn num_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn link(&self, cluster: usize, bs: usize) -> &LinkGeometry {
        &self.clusters[cluster].links[bs]
    }

    /// Whether BS `bs` may serve or interfere with `cluster`.
    pub fn is_active(&self, cluster: usize, bs: usize) -> bool {
        self.config.ignore_sectors || self.clusters[cluster].links[bs].in_sector
    }

    /// Activity mask indexed `[cluster][bs]`.
    pub fn activity(&self) -> Vec<Vec<bool>> {
        (0..self.num_clusters())
            .map(|c| (0..self.num_bs()).map(|l| self.is_active(c, l)).collect())
            .collect()
    }

    /// BSs allowed to serve `cluster`, ascending.
    pub fn candidates(&self, cluster: usize) -> Vec<usize> {
        (0..self.num_bs()).filter(|&l| self.is_active(cluster, l)).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Places BSs and clusters using a generator seeded from `config.rng_seed`.
pub fn place_network(config: &NetworkConfig) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    place_network_with(config, &mut rng)
}

pub fn place_network_with<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Scenario> {
    config.validate()?;
    let base_stations = bs_positions(config.num_bs, config.cell_radius);

    let mut clusters = Vec::with_capacity(config.num_clusters);
    for _ in 0..config.num_clusters {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let position = uniform_in_disc(rng, config.cell_radius);
            if let Some(geom) = try_cluster(config, &base_stations, position) {
                placed = Some(geom);
                break;
            }
        }
        clusters.push(
            placed.ok_or_else(|| Error::config("cell_radius", "could not place a cluster that any BS can serve"))?,
        );
    }

    Ok(Scenario {
        config: config.clone(),
        base_stations,
        clusters,
    })
}

/// BSs equally spaced on the cell boundary, each looking at the center.
pub fn bs_positions(num_bs: usize, cell_radius: f64) -> Vec<BaseStation> {
    (0..num_bs)
        .map(|l| {
            let phi = PI / 2.0 + 2.0 * PI * l as f64 / num_bs as f64;
            BaseStation {
                position: [cell_radius * phi.cos(), cell_radius * phi.sin()],
                boresight: wrap_angle(phi + PI),
            }
        })
        .collect()
}

/// Uniform point in a disc of radius `r` centered at the origin.
pub fn uniform_in_disc<R: Rng + ?Sized>(rng: &mut R, r: f64) -> [f64; 2] {
    let rho = r * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [rho * phi.cos(), rho * phi.sin()]
}

fn try_cluster(config: &NetworkConfig, bss: &[BaseStation], position: [f64; 2]) -> Option<ClusterGeometry> {
    let links = bss
        .iter()
        .map(|bs| derive_one_ring_params(bs.position, bs.boresight, position, config.ring_radius).ok())
        .collect::<Option<Vec<_>>>()?;
    if !config.ignore_sectors && !links.iter().any(|g| g.in_sector) {
        return None;
    }
    Some(ClusterGeometry { position, links })
}

/// Azimuth, spread and sector membership of a ring of radius `ring_radius`
/// centered at `cluster`, seen from a BS at `bs` with broadside `boresight`.
pub fn derive_one_ring_params(
    bs: [f64; 2],
    boresight: f64,
    cluster: [f64; 2],
    ring_radius: f64,
) -> Result<LinkGeometry> {
    let dx = cluster[0] - bs[0];
    let dy = cluster[1] - bs[1];
    let distance = dx.hypot(dy);
    if distance <= ring_radius {
        return Err(Error::DegenerateGeometry { distance, ring_radius });
    }
    let azimuth = wrap_angle(dy.atan2(dx) - boresight);
    let spread = (ring_radius / distance).asin();
    Ok(LinkGeometry {
        azimuth,
        spread,
        distance,
        in_sector: azimuth.abs() <= SECTOR_HALF_WIDTH,
    })
}

/// Wraps into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}
