use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sampler::PosteriorSamples;
use crate::error::{Error, Result};
use crate::model::{BetaParams, Credibilities, CredibilityMatrix, CredibilityPosterior, LabelPosterior, LabelerId};

/// Posterior mean and variance of one credibility cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMoments {
    pub mean: f64,
    pub variance: f64,
}

impl CellMoments {
    /// Beta distribution with the same first two moments. Degenerate variances
    /// are capped at a concentration of 1e6.
    pub fn to_beta(&self) -> BetaParams {
        let m = self.mean.clamp(1e-9, 1.0 - 1e-9);
        let max_var = m * (1.0 - m);
        let strength = if self.variance > 0.0 && self.variance < max_var {
            (max_var / self.variance - 1.0).min(1e6)
        } else if self.variance > 0.0 {
            1e-3
        } else {
            1e6
        };
        BetaParams::new(m * strength, (1.0 - m) * strength).expect("positive moment-matched parameters")
    }
}

/// Per-labeler K×K grid of cell moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilitySummary {
    pub num_classes: usize,
    pub cells: BTreeMap<LabelerId, Vec<CellMoments>>,
}

impl CredibilitySummary {
    pub fn means(&self) -> Credibilities {
        self.cells
            .iter()
            .map(|(j, g)| {
                let values = g.iter().map(|c| c.mean).collect();
                (j.clone(), CredibilityMatrix::new(self.num_classes, values).expect("means lie in [0,1]"))
            })
            .collect()
    }

    pub fn to_beta_posterior(&self) -> CredibilityPosterior {
        let mut out = CredibilityPosterior::new(self.num_classes);
        for (j, g) in &self.cells {
            out.insert(j.clone(), g.iter().map(CellMoments::to_beta).collect())
                .expect("grid size matches K");
        }
        out
    }
}

/// Pooled summary of all retained draws.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Label frequencies of every object whose label was sampled.
    pub labels: LabelPosterior,
    pub theta: CredibilitySummary,
    pub pi_mean: Vec<f64>,
    pub pi_variance: Vec<f64>,
}

fn moments(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
    let mean = sum / n;
    (mean, (sum_sq / n - mean * mean).max(0.0))
}

/// Pools every retained draw of every chain into label frequencies and
/// moment summaries of θ and π.
pub fn summarize_posterior(samples: &PosteriorSamples) -> Result<PosteriorSummary> {
    let problem = &samples.problem;
    let draws: usize = samples.chains.iter().map(|c| c.len).sum();
    if draws == 0 {
        return Err(Error::invalid("posterior samples are empty"));
    }
    let k = problem.num_classes;
    let n_objects = problem.objects.len();
    let cells = problem.num_cells();
    let mut label_counts = vec![0usize; n_objects * k];
    let mut theta_sum = vec![0.0; cells];
    let mut theta_sq = vec![0.0; cells];
    let mut pi_sum = vec![0.0; k];
    let mut pi_sq = vec![0.0; k];
    for (c, chain) in samples.chains.iter().enumerate() {
        for t in 0..chain.len {
            for (i, &z) in samples.z(c, t).iter().enumerate() {
                label_counts[i * k + z as usize] += 1;
            }
            for (n, &v) in samples.theta(c, t).iter().enumerate() {
                theta_sum[n] += v;
                theta_sq[n] += v * v;
            }
            for (n, &v) in samples.pi(c, t).iter().enumerate() {
                pi_sum[n] += v;
                pi_sq[n] += v * v;
            }
        }
    }
    let total = draws as f64;
    let mut labels = LabelPosterior::new();
    for i in problem.free_objects() {
        let probs = label_counts[i * k..(i + 1) * k]
            .iter()
            .map(|&c| c as f64 / total)
            .collect();
        labels.insert(problem.objects[i].clone(), probs)?;
    }
    let kk = k * k;
    let grid: BTreeMap<LabelerId, Vec<CellMoments>> = problem
        .labelers
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let g = (j * kk..(j + 1) * kk)
                .map(|n| {
                    let (mean, variance) = moments(theta_sum[n], theta_sq[n], total);
                    CellMoments { mean, variance }
                })
                .collect();
            (id.clone(), g)
        })
        .collect();
    let (pi_mean, pi_variance) = (0..k).map(|n| moments(pi_sum[n], pi_sq[n], total)).unzip();
    Ok(PosteriorSummary {
        labels,
        theta: CredibilitySummary { num_classes: k, cells: grid },
        pi_mean,
        pi_variance,
    })
}
