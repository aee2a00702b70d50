use rand::Rng;
use rayon::prelude::*;

use super::factors::dirichlet_log_q;
use super::optimizer::AdaGrad;
use super::state::{Prepared, Sample, VariationalState};
use super::{BbviConfig, GradientEstimator, Stopping};
use crate::error::{Error, Result};
use crate::math::ln_beta;
use crate::gibbs::{CellMoments, CredibilitySummary, PosteriorSummary};
use crate::model::{
    BetaParams, ClassPrior, CredibilityPosterior, LabelAssignment, LabelPosterior, LabelingProblem, VoteTable,
};
use crate::rng::{self, StreamRng};

/// Free parameters of the credibility stage: an `(α, β)` pair per cell.
pub fn stage1_parameter_count(labelers: usize, classes: usize) -> usize {
    labelers * classes * classes * 2
}

/// Free parameters of the labeling stage: cell pairs, a `K`-vector per
/// unknown object and the Dirichlet vector.
pub fn stage2_parameter_count(labelers: usize, classes: usize, objects: usize) -> usize {
    stage1_parameter_count(labelers, classes) + objects * classes + classes
}

/// Log-joint pieces of one sample.
struct ModelTerms {
    total: f64,
    /// Prior plus likelihood of the votes governed by each cell.
    cell: Vec<f64>,
    /// `ln π_{z_i}` plus likelihood of the votes on each object.
    object: Vec<f64>,
    /// `ln Dir(π | ρ) + Σ_i ln π_{z_i}`.
    pi: f64,
}

fn prior_norms(problem: &LabelingProblem) -> Vec<f64> {
    problem.theta_prior.iter().map(|p| ln_beta(p.alpha, p.beta)).collect()
}

fn model_terms(problem: &LabelingProblem, prior_norm: &[f64], include_pi: bool, sample: &Sample) -> ModelTerms {
    let mut cell: Vec<f64> = problem
        .theta_prior
        .iter()
        .zip(&sample.theta)
        .zip(prior_norm)
        .map(|((p, &t), norm)| (p.alpha - 1.0) * t.ln() + (p.beta - 1.0) * (1.0 - t).ln() - norm)
        .collect();
    let mut total: f64 = cell.iter().sum();
    let mut object = vec![0.0; problem.objects.len()];
    for vote in &problem.votes {
        let z = sample.z[vote.object as usize] as usize;
        let c = problem.cell(vote.labeler as usize, z, vote.class as usize);
        let t = sample.theta[c];
        let ll = if vote.yes { t.ln() } else { (1.0 - t).ln() };
        cell[c] += ll;
        object[vote.object as usize] += ll;
        total += ll;
    }
    let mut pi = 0.0;
    if include_pi {
        pi = dirichlet_log_q(&problem.rho, &sample.pi);
        total += pi;
        for (o, &z) in object.iter_mut().zip(&sample.z) {
            let lp = sample.pi[z as usize].ln();
            *o += lp;
            pi += lp;
            total += lp;
        }
    }
    ModelTerms { total, cell, object, pi }
}

/// Score-weighted gradient contribution and `ln p − ln q` of one sample.
fn sample_contribution(
    state: &VariationalState,
    prepared: &Prepared,
    prior_norm: &[f64],
    problem: &LabelingProblem,
    estimator: GradientEstimator,
    sample: &Sample,
    grad: &mut [f64],
) -> f64 {
    let logq = state.score_into(prepared, problem, sample, grad);
    let terms = model_terms(problem, prior_norm, state.includes_pi(), sample);
    let total_q = logq.theta.iter().sum::<f64>() + logq.z.iter().sum::<f64>() + logq.pi;
    let elbo = terms.total - total_q;
    let k = problem.num_classes;
    match estimator {
        GradientEstimator::Global => grad.iter_mut().for_each(|g| *g *= elbo),
        GradientEstimator::Local => {
            for (c, lq) in logq.theta.iter().enumerate() {
                let w = terms.cell[c] - lq;
                grad[2 * c] *= w;
                grad[2 * c + 1] *= w;
            }
            for object in problem.free_objects() {
                let row = state.free_row(object).unwrap();
                let w = terms.object[object] - logq.z[row];
                let start = state.z_offset() + row * k;
                grad[start..start + k].iter_mut().for_each(|g| *g *= w);
            }
            if state.includes_pi() {
                let w = terms.pi - logq.pi;
                let start = state.pi_offset();
                grad[start..start + k].iter_mut().for_each(|g| *g *= w);
            }
        }
    }
    elbo
}

/// Monte-Carlo ELBO gradient over `samples` draws from `q`, returned with the
/// matching ELBO estimate. Draws use per-sample streams split from one seed
/// taken from `rng`, and are reduced in sample order, so the result does not
/// depend on the thread count.
pub fn estimate_gradient(
    state: &VariationalState,
    problem: &LabelingProblem,
    estimator: GradientEstimator,
    samples: usize,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, f64)> {
    if let Some(n) = state.params.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            factor: state.factor_name(problem, n),
            detail: format!("variational parameter {n} is {}", state.params[n]),
        });
    }
    let base: u64 = rng.random();
    let p = state.num_parameters();
    let prepared = state.prepare();
    let norms = prior_norms(problem);
    let parts: Vec<(Vec<f64>, f64)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(base, &[s as u64]);
            let sample = prepared.draw(state, problem, &mut r);
            let mut grad = vec![0.0; p];
            let elbo = sample_contribution(state, &prepared, &norms, problem, estimator, &sample, &mut grad);
            (grad, elbo)
        })
        .collect();
    let mut grad = vec![0.0; p];
    let mut elbo = 0.0;
    for (g, e) in &parts {
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
        elbo += e;
    }
    let s = samples as f64;
    grad.iter_mut().for_each(|g| *g /= s);
    if let Some(n) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            factor: state.factor_name(problem, n),
            detail: format!("gradient component {n} is {}", grad[n]),
        });
    }
    Ok((grad, elbo / s))
}

/// `E_q[ln p − ln q]` estimated from `samples` draws.
pub fn elbo_estimate(state: &VariationalState, problem: &LabelingProblem, samples: usize, rng: &mut StreamRng) -> f64 {
    let mut grad = vec![0.0; state.num_parameters()];
    let prepared = state.prepare();
    let norms = prior_norms(problem);
    let mut total = 0.0;
    for _ in 0..samples {
        let sample = prepared.draw(state, problem, rng);
        total += sample_contribution(state, &prepared, &norms, problem, GradientEstimator::Global, &sample, &mut grad);
    }
    total / samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// ELBO estimate at the state before the update.
    pub elbo: f64,
}

/// One AdaGrad ascent step along the score-function gradient.
pub fn score_gradient_step(
    state: &mut VariationalState,
    optimizer: &mut AdaGrad,
    problem: &LabelingProblem,
    config: &BbviConfig,
    rng: &mut StreamRng,
) -> Result<StepReport> {
    let (grad, elbo) = estimate_gradient(state, problem, config.estimator, config.samples, rng)?;
    optimizer.step(&mut state.params, &grad);
    Ok(StepReport { elbo })
}

/// Result of a variational fit, shaped like the Gibbs summary.
#[derive(Debug, Clone)]
pub struct BbviFit {
    pub problem: LabelingProblem,
    pub state: VariationalState,
    pub labels: LabelPosterior,
    pub theta: CredibilitySummary,
    pub pi_mean: Vec<f64>,
    pub pi_variance: Vec<f64>,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub steps: usize,
}

impl BbviFit {
    pub fn summary(&self) -> PosteriorSummary {
        PosteriorSummary {
            labels: self.labels.clone(),
            theta: self.theta.clone(),
            pi_mean: self.pi_mean.clone(),
            pi_variance: self.pi_variance.clone(),
        }
    }

    /// Variational Beta factors of every cell.
    pub fn credibility_posterior(&self) -> CredibilityPosterior {
        let cells: Vec<BetaParams> = (0..self.problem.num_cells()).map(|c| self.state.beta_params(c)).collect();
        self.problem.to_posterior(&cells)
    }
}

fn plateaued(trace: &[f64], window: usize, tolerance: f64) -> bool {
    let n = trace.len();
    if n < 2 * window {
        return false;
    }
    let recent = trace[n - window..].iter().sum::<f64>() / window as f64;
    let before = trace[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
    (recent - before).abs() <= tolerance * recent.abs().max(1.0)
}

fn run(problem: LabelingProblem, include_pi: bool, config: &BbviConfig) -> Result<BbviFit> {
    config.validate()?;
    let mut state = VariationalState::initial(&problem, include_pi);
    let mut optimizer = AdaGrad::new(state.rate_vector(config.rates));
    let mut rng = rng::stream(config.seed, &[0x6262_7669]);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_steps {
        let report = score_gradient_step(&mut state, &mut optimizer, &problem, config, &mut rng)?;
        trace.push(report.elbo);
        if let Stopping::Plateau { window, tolerance } = config.stopping {
            if plateaued(&trace, window, tolerance) {
                converged = true;
                break;
            }
        }
    }
    if config.stopping == Stopping::FixedSteps {
        converged = true;
    }

    let mut labels = LabelPosterior::new();
    for object in problem.free_objects() {
        let row = state.free_row(object).unwrap();
        labels.insert(problem.objects[object].clone(), state.label_probs(row))?;
    }
    let kk = problem.num_classes * problem.num_classes;
    let cells = problem
        .labelers
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let grid = (j * kk..(j + 1) * kk)
                .map(|c| {
                    let b = state.beta_params(c);
                    CellMoments {
                        mean: b.mean(),
                        variance: b.variance(),
                    }
                })
                .collect();
            (id.clone(), grid)
        })
        .collect();
    let d = state.dirichlet_params();
    let d_total: f64 = d.iter().sum();
    let pi_mean = d.iter().map(|x| x / d_total).collect();
    let pi_variance = d
        .iter()
        .map(|x| x * (d_total - x) / (d_total * d_total * (d_total + 1.0)))
        .collect();
    Ok(BbviFit {
        theta: CredibilitySummary {
            num_classes: problem.num_classes,
            cells,
        },
        problem,
        state,
        labels,
        pi_mean,
        pi_variance,
        steps: trace.len(),
        elbo_trace: trace,
        converged,
    })
}

/// Variational fit of an indexed labeling-stage problem.
pub fn fit_bbvi_problem(problem: LabelingProblem, config: &BbviConfig) -> Result<BbviFit> {
    run(problem, true, config)
}

/// Labeling stage: variational posterior over `(Θ, Z, π)` for the objects in
/// `votes_unknown`, with cell priors from the credibility stage.
pub fn fit_bbvi(
    votes_unknown: &VoteTable,
    credibility_prior: &CredibilityPosterior,
    rho: &ClassPrior,
    config: &BbviConfig,
) -> Result<BbviFit> {
    if votes_unknown.num_classes() != credibility_prior.num_classes() {
        return Err(Error::consistency("votes and credibility prior disagree on K"));
    }
    fit_bbvi_problem(LabelingProblem::two_stage(votes_unknown, credibility_prior, rho)?, config)
}

/// Single-stage variational fit with known labels observed.
pub fn fit_bbvi_joint(
    votes: &VoteTable,
    known_labels: &LabelAssignment,
    theta_prior: BetaParams,
    rho: &ClassPrior,
    config: &BbviConfig,
) -> Result<BbviFit> {
    fit_bbvi_problem(LabelingProblem::joint(votes, known_labels, theta_prior, rho)?, config)
}

/// Credibility stage solved variationally instead of by conjugate counting:
/// only the `(α, β)` pairs are optimized since every label is observed.
pub fn fit_credibility_bbvi(
    votes_known: &VoteTable,
    known_labels: &LabelAssignment,
    prior: BetaParams,
    config: &BbviConfig,
) -> Result<CredibilityPosterior> {
    let k = votes_known.num_classes();
    let problem = LabelingProblem::joint(votes_known, known_labels, prior, &ClassPrior::flat(k))?;
    if let Some(n) = problem.fixed.iter().position(Option::is_none) {
        return Err(Error::consistency(format!(
            "object {} has votes but no known label",
            problem.objects[n]
        )));
    }
    let fit = run(problem, false, config)?;
    Ok(fit.credibility_posterior())
}
