//! Black-box variational inference for the labeling stage.
//!
//! The posterior over `(Θ, Z, π)` is approximated by a fully factorized
//! family: `q(θ_c) = Beta(α_c, β_c)` per credibility cell,
//! `q(z_i) = Categorical(p_i)` per unknown object and `q(π) = Dirichlet(d)`.
//! Every variational parameter lives in unconstrained space and is mapped
//! through soft-plus (normalized soft-plus for `p_i`). The ELBO gradient is
//! estimated with the score-function identity
//! `∇L = E_q[∇ ln q(x) (ln p(x) − ln q(x))]` and applied with AdaGrad.

mod factors;
mod fit;
mod optimizer;
mod state;

use serde::{Deserialize, Serialize};

pub use factors::{
    beta_log_q, beta_score, beta_score_unconstrained, categorical_log_q, categorical_score,
    categorical_score_unconstrained, dirichlet_log_q, dirichlet_score, dirichlet_score_unconstrained,
};
pub use fit::{
    elbo_estimate, estimate_gradient, fit_bbvi, fit_bbvi_joint, fit_bbvi_problem, fit_credibility_bbvi,
    score_gradient_step, stage1_parameter_count, stage2_parameter_count, BbviFit, StepReport,
};
pub use optimizer::AdaGrad;
pub use state::{Sample, VariationalState};

use crate::error::{Error, Result};

/// Which model terms weight the score of each factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientEstimator {
    /// Every score is weighted by the full `ln p(x) − ln q(x)`.
    Global,
    /// Each factor's score is weighted only by the joint terms that mention
    /// its variable (its Markov blanket) minus its own `ln q`. Under a
    /// mean-field `q` the dropped terms have zero expected contribution, so
    /// the estimator stays unbiased with a much smaller variance.
    Local,
}

/// When optimization stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Stopping {
    /// Stop once the moving average of the per-step ELBO estimate changes by
    /// less than `tolerance · |ELBO|` across one window, or at `max_steps`.
    Plateau { window: usize, tolerance: f64 },
    /// Run exactly `max_steps` steps.
    FixedSteps,
}

/// AdaGrad base rates per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub theta: f64,
    pub z: f64,
    pub pi: f64,
}

impl LearningRates {
    pub fn global(rate: f64) -> Self {
        Self {
            theta: rate,
            z: rate,
            pi: rate,
        }
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        Self::global(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbviConfig {
    /// Monte-Carlo samples per gradient step.
    pub samples: usize,
    pub max_steps: usize,
    pub stopping: Stopping,
    pub rates: LearningRates,
    pub estimator: GradientEstimator,
    pub seed: u64,
}

impl Default for BbviConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            max_steps: 3000,
            stopping: Stopping::Plateau {
                window: 50,
                tolerance: 1e-4,
            },
            rates: LearningRates::default(),
            estimator: GradientEstimator::Global,
            seed: 0,
        }
    }
}

impl BbviConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::invalid("BBVI needs at least 2 samples per step"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("BBVI max_steps must be positive"));
        }
        let r = self.rates;
        if !(r.theta > 0.0 && r.z > 0.0 && r.pi > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if let Stopping::Plateau { window, tolerance } = self.stopping {
            if window == 0 || !(tolerance > 0.0) {
                return Err(Error::invalid("plateau window and tolerance must be positive"));
            }
        }
        Ok(())
    }
}
