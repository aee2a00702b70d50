//! Log-densities of the yes/no model, normalizing constants included.

use super::labels::LabelAssignment;
use super::params::{check_simplex, BetaParams, ClassPrior, Credibilities, CredibilityPosterior};
use super::votes::{ResponsePair, VoteTable};
use crate::error::{Error, Result};
use crate::math::{ln_beta, ln_gamma};

fn check_open_unit(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability {theta} outside (0,1)")))
    }
}

/// `r[0]·ln θ + r[1]·ln(1−θ)`; exactly zero for an unasked pair.
pub fn yn_log_likelihood_single(r: ResponsePair, theta: f64) -> Result<f64> {
    check_open_unit(theta)?;
    Ok(if r.is_yes() {
        theta.ln()
    } else if r.no_bit() == 1 {
        (1.0 - theta).ln()
    } else {
        0.0
    })
}

fn table_log_likelihood(
    votes: &VoteTable,
    credibilities: &Credibilities,
    labels: &LabelAssignment,
    what: &str,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, i, k, r) in votes.yn_votes() {
        let theta = credibilities
            .get(j)
            .ok_or_else(|| Error::consistency(format!("no credibility matrix for labeler {j}")))?;
        let z = labels
            .get(i)
            .ok_or_else(|| Error::consistency(format!("object {i} has no {what}")))?;
        if z >= theta.num_classes() || k >= theta.num_classes() {
            return Err(Error::consistency(format!(
                "class index out of range for labeler {j}'s credibility matrix"
            )));
        }
        total += yn_log_likelihood_single(r, theta.get(z, k))?;
    }
    Ok(total)
}

/// Log-likelihood of every yes/no vote given credibilities and labels.
/// Full-question entries are ignored.
pub fn yn_log_likelihood_table(
    votes: &VoteTable,
    credibilities: &Credibilities,
    labels: &LabelAssignment,
) -> Result<f64> {
    table_log_likelihood(votes, credibilities, labels, "label")
}

/// Log-likelihood of votes on objects whose labels are observed.
pub fn stage1_log_likelihood(
    votes: &VoteTable,
    known_labels: &LabelAssignment,
    credibilities: &Credibilities,
) -> Result<f64> {
    table_log_likelihood(votes, credibilities, known_labels, "known label")
}

/// Beta log-density.
pub fn log_prior_theta(theta: f64, prior: BetaParams) -> Result<f64> {
    check_open_unit(theta)?;
    BetaParams::new(prior.alpha, prior.beta)?;
    Ok((prior.alpha - 1.0) * theta.ln() + (prior.beta - 1.0) * (1.0 - theta).ln()
        - ln_beta(prior.alpha, prior.beta))
}

/// Dirichlet log-density of `pi` under concentration `rho`.
pub fn log_prior_pi(pi: &[f64], rho: &[f64]) -> Result<f64> {
    if pi.len() != rho.len() {
        return Err(Error::domain("π and ρ have different lengths"));
    }
    check_simplex(pi)?;
    if rho.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::domain("Dirichlet concentration must be positive"));
    }
    let mut lp = ln_gamma(rho.iter().sum());
    for (&p, &r) in pi.iter().zip(rho) {
        lp -= ln_gamma(r);
        if r != 1.0 {
            lp += (r - 1.0) * p.ln();
        }
    }
    Ok(lp)
}

/// Categorical log-probability of class `z` under proportions `pi`.
pub fn log_prior_z(z: usize, pi: &[f64]) -> Result<f64> {
    check_simplex(pi)?;
    pi.get(z)
        .map(|p| p.ln())
        .ok_or_else(|| Error::domain(format!("class index {z} out of range")))
}

/// Hyperparameters of the full joint: a Beta prior per credibility cell and
/// the Dirichlet concentration of `π`.
#[derive(Debug, Clone)]
pub struct JointPriors {
    pub theta: CredibilityPosterior,
    pub rho: ClassPrior,
}

/// `ln p(R, Z, Θ, π)`: all credibility priors, the class-proportion prior,
/// the categorical label terms and the vote likelihood.
pub fn joint_log_density(
    votes: &VoteTable,
    credibilities: &Credibilities,
    labels: &LabelAssignment,
    pi: &[f64],
    priors: &JointPriors,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, theta) in credibilities {
        let grid = priors
            .theta
            .grid(j)
            .ok_or_else(|| Error::consistency(format!("no credibility prior for labeler {j}")))?;
        if grid.len() != theta.values().len() {
            return Err(Error::consistency(format!("prior grid size mismatch for labeler {j}")));
        }
        for (&t, &prior) in theta.values().iter().zip(grid) {
            total += log_prior_theta(t, prior)?;
        }
    }
    total += log_prior_pi(pi, priors.rho.rho())?;
    for (_, z) in labels.iter() {
        total += log_prior_z(z, pi)?;
    }
    total += yn_log_likelihood_table(votes, credibilities, labels)?;
    Ok(total)
}
