//! Two-stage posterior inference with an exact-conditional Gibbs sampler.
//!
//! Stage one ([`fit_credibility_stage`]) is the conjugate Beta update of each
//! credibility cell from votes on objects with known labels. Stage two
//! ([`gibbs_fit`]) samples `(Z, Θ, π)` for the unknown objects by blocked
//! Gibbs sweeps; every full conditional is available in closed form because
//! the model is conjugate once `Z` is fixed.

mod credibility;
mod diagnostics;
mod sampler;
mod summary;

use serde::{Deserialize, Serialize};

pub use credibility::fit_credibility_stage;
pub use diagnostics::{diagnose_run, gelman_rubin, DiagnosticReport, DiagnosticRow, ReportStatus, VariableKind, PSRF_THRESHOLD};
pub use sampler::{gibbs_fit, gibbs_fit_joint, gibbs_fit_problem, ChainTrace, PosteriorSamples};
pub use summary::{summarize_posterior, CellMoments, CredibilitySummary, PosteriorSummary};


use crate::error::{Error, Result};

/// Multi-chain sampler settings. Defaults: 10 chains, 1500 burn-in sweeps,
/// 3000 retained sweeps, no thinning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub n_iterations: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 10,
            burn_in: 1500,
            n_iterations: 3000,
            thinning: 1,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_iterations == 0 || self.thinning == 0 {
            return Err(Error::invalid(
                "chain config needs n_chains ≥ 1, n_iterations ≥ 1 and thinning ≥ 1",
            ));
        }
        Ok(())
    }

    /// Number of samples kept per chain.
    pub fn retained(&self) -> usize {
        self.n_iterations.div_ceil(self.thinning)
    }
}
