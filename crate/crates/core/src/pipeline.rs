//! One Monte Carlo drop, end to end: geometry, channel model, candidate
//! precoders, channel draw, selection and final SINR evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{sample_channels, ChannelModel, ChannelRealization};
use crate::error::{Error, Result};
use crate::metrics::{sinr_from_gains, sum_rate, GainTable, SinrRecord, SumRate};
use crate::params::ModelParams;
use crate::precoding::{build_prebeamformers, Category, PrebeamformerTable, PrecoderSet};
use crate::scalar::{lit, Real};
use crate::scenario::{place_network_with, NetworkConfig, Scenario};
use crate::selection::{
    exhaustive_sinr_select, greedy_laslnr_select, greedy_slnr_select, largest_energy_select, random_select, Algorithm,
    Assignment, SelectionResult,
};

/// ChaCha stream ids carved out of one drop seed.
const STREAM_GEOMETRY: u64 = 0;
const STREAM_RANDOM_SELECT: u64 = 1;
const STREAM_CHANNEL_BASE: u64 = 2;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of drop `drop` at sweep point `sweep` under `master`.
pub fn drop_seed(master: u64, sweep: usize, drop: usize) -> u64 {
    mix(mix(mix(master) ^ sweep as u64) ^ (drop as u64).rotate_left(32))
}

pub fn geometry_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, STREAM_GEOMETRY)
}

pub fn selection_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, STREAM_RANDOM_SELECT)
}

pub fn channel_rng(seed: u64, draw: usize) -> ChaCha8Rng {
    stream_rng(seed, STREAM_CHANNEL_BASE + draw as u64)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything about a drop that depends on geometry only.
#[derive(Debug)]
pub struct DropSetup<T: Real> {
    pub scenario: Scenario,
    pub params: ModelParams,
    pub category: Category,
    pub model: ChannelModel<T>,
    pub prebeamformers: PrebeamformerTable<T>,
}

impl<T: Real> DropSetup<T> {
    /// Places a fresh geometry from `seed` and builds its statistics.
    pub fn generate(config: &NetworkConfig, params: &ModelParams, category: Category, seed: u64) -> Result<Self> {
        let scenario = place_network_with(config, &mut geometry_rng(seed))?;
        Self::from_scenario(scenario, params, category)
    }

    pub fn from_scenario(scenario: Scenario, params: &ModelParams, category: Category) -> Result<Self> {
        params.validate()?;
        let model = ChannelModel::build(&scenario, params)?;
        let prebeamformers = build_prebeamformers(&model, &scenario, category, params);
        Ok(Self {
            scenario,
            params: params.clone(),
            category,
            model,
            prebeamformers,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        vec![self.scenario.config.users_per_cluster; self.scenario.num_clusters()]
    }

    pub fn power(&self) -> T {
        lit(self.scenario.config.per_user_power)
    }

    pub fn noise(&self) -> T {
        lit(self.scenario.config.noise_power)
    }

    /// Draws one channel realization and builds its precoders.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DropDraw<T> {
        let realization = sample_channels(&self.model.bases(), &self.sizes(), rng);
        let precoders = PrecoderSet::build(&self.prebeamformers, &realization, self.power());
        let gains = GainTable::build(&realization, &precoders);
        DropDraw {
            realization,
            precoders,
            gains,
        }
    }

    /// Runs one selection algorithm on a draw.
    pub fn select<R: Rng + ?Sized>(
        &self,
        draw: &DropDraw<T>,
        algorithm: Algorithm,
        max_enumeration: u128,
        rng: &mut R,
    ) -> Result<SelectionResult<T>> {
        let noise = self.noise();
        match algorithm {
            Algorithm::Exhaustive => exhaustive_sinr_select(&draw.gains, noise, max_enumeration),
            Algorithm::GreedySlnr => greedy_slnr_select(&draw.gains, noise),
            Algorithm::GreedyLaslnr => {
                greedy_laslnr_select(&self.model, &self.prebeamformers, &self.sizes(), self.power(), noise)
            }
            Algorithm::LargestEnergy => largest_energy_select(&draw.realization, &draw.precoders.feasible_candidates()),
            Algorithm::Random => random_select(&draw.precoders.feasible_candidates(), rng),
        }
    }

    /// Per-user SINR and sum-rate of `assignment` on `draw`.
    pub fn evaluate(&self, draw: &DropDraw<T>, assignment: &Assignment) -> Result<Evaluation<T>> {
        draw.precoders.for_assignment(&assignment.cluster_to_bs)?;
        let users = sinr_from_gains(&draw.gains, &assignment.cluster_to_bs, self.noise())
            .ok_or_else(|| Error::NumericalFailure("assignment uses a pair without precoder".into()))?;
        let rate = sum_rate(users.iter().map(|u| u.sinr), self.scenario.num_clusters());
        Ok(Evaluation { users, rate })
    }
}

/// Realization-dependent part of a drop.
#[derive(Debug)]
pub struct DropDraw<T: Real> {
    pub realization: ChannelRealization<T>,
    pub precoders: PrecoderSet<T>,
    pub gains: GainTable<T>,
}

#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub users: Vec<SinrRecord<T>>,
    pub rate: SumRate<T>,
}
