//! Base-station selection for clustered massive MIMO downlinks.
//!
//! Clusters of users see each BS through a one-ring spatial covariance. Each
//! (cluster, BS) pair gets a two-stage precoder: a statistical prebeamformer
//! that nulls the other clusters' eigenspaces, then zero-forcing on the
//! effective channel. Selection algorithms then decide which BS serves which
//! cluster.
//!
//! The numeric core is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix it to `f64`.

pub mod channel;
pub mod checks;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod precoding;
pub mod quadrature;
pub mod scalar;
pub mod scenario;
pub mod selection;

pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentPlan};
pub use params::ModelParams;
pub use precoding::Category;
pub use scenario::{NetworkConfig, Scenario};
pub use selection::{Algorithm, Assignment};

pub type Cplx64 = scalar::Cplx<f64>;
pub type Covariance64 = channel::Covariance<f64>;
pub type EigenBasis64 = channel::EigenBasis<f64>;
pub type ChannelModel64 = channel::ChannelModel<f64>;
pub type ChannelRealization64 = channel::ChannelRealization<f64>;
pub type Prebeamformer64 = precoding::Prebeamformer<f64>;
pub type PrecoderSet64 = precoding::PrecoderSet<f64>;
pub type GainTable64 = metrics::GainTable<f64>;
pub type SelectionResult64 = selection::SelectionResult<f64>;
pub type DropSetup64 = pipeline::DropSetup<f64>;
