use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical knobs of the channel and precoding models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Fraction of covariance trace allowed to be discarded by rank truncation.
    pub eps_rank: f64,
    /// Keep every eigenvalue above `1e-12` instead of truncating by mass.
    pub exact_rank: bool,
    /// Eigenvalue-mass fraction of each interferer nulled by approximate BD.
    pub abd_energy: f64,
    /// Gauss-Legendre nodes per panel for the covariance integral.
    pub quad_nodes: usize,
    /// Sum interference over out-of-sector links too (validation mode).
    pub full_interference: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            eps_rank: 1e-3,
            exact_rank: false,
            abd_energy: 0.95,
            quad_nodes: 200,
            full_interference: false,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.eps_rank) {
            return Err(Error::config("eps_rank", "must lie in [0, 1)"));
        }
        if !(self.abd_energy > 0.0 && self.abd_energy <= 1.0) {
            return Err(Error::config("abd_energy", "must lie in (0, 1]"));
        }
        if self.quad_nodes < 2 {
            return Err(Error::config("quad_nodes", "must be at least 2"));
        }
        Ok(())
    }

    pub fn rank_rule(&self) -> crate::channel::RankRule {
        if self.exact_rank {
            crate::channel::RankRule::Exact
        } else {
            crate::channel::RankRule::Mass(self.eps_rank)
        }
    }
}
