use rayon::prelude::*;

use super::ChainConfig;
use crate::error::{Error, Result};
use crate::math::normalize_log_weights;
use crate::model::{
    BetaParams, ClassPrior, Credibilities, CredibilityPosterior, LabelAssignment, LabelingProblem,
    VoteTable,
};
use crate::rng::{self, StreamRng};

/// Retained draws of one chain, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub z: Vec<u16>,
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    pub len: usize,
}

/// Samples of every chain together with the problem they were drawn for.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub problem: LabelingProblem,
    pub chains: Vec<ChainTrace>,
    pub burn_in: usize,
    pub thinning: usize,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Retained draws per chain.
    pub fn n_retained(&self) -> usize {
        self.chains.iter().map(|c| c.len).min().unwrap_or(0)
    }

    pub fn z(&self, chain: usize, t: usize) -> &[u16] {
        let n = self.problem.objects.len();
        &self.chains[chain].z[t * n..(t + 1) * n]
    }

    pub fn theta(&self, chain: usize, t: usize) -> &[f64] {
        let c = self.problem.num_cells();
        &self.chains[chain].theta[t * c..(t + 1) * c]
    }

    pub fn pi(&self, chain: usize, t: usize) -> &[f64] {
        let k = self.problem.num_classes;
        &self.chains[chain].pi[t * k..(t + 1) * k]
    }

    pub fn assignment(&self, chain: usize, t: usize) -> LabelAssignment {
        self.problem.assignment(self.z(chain, t))
    }

    pub fn credibilities(&self, chain: usize, t: usize) -> Credibilities {
        self.problem.credibilities(self.theta(chain, t))
    }

    /// Trace of one credibility cell in one chain.
    pub fn theta_trace(&self, chain: usize, cell: usize) -> Vec<f64> {
        (0..self.chains[chain].len).map(|t| self.theta(chain, t)[cell]).collect()
    }

    pub fn pi_trace(&self, chain: usize, class: usize) -> Vec<f64> {
        (0..self.chains[chain].len).map(|t| self.pi(chain, t)[class]).collect()
    }

    pub fn z_trace(&self, chain: usize, object: usize) -> Vec<u16> {
        (0..self.chains[chain].len).map(|t| self.z(chain, t)[object]).collect()
    }

    /// The first `n` retained draws of every chain.
    pub fn truncated(&self, n: usize) -> PosteriorSamples {
        let objects = self.problem.objects.len();
        let cells = self.problem.num_cells();
        let k = self.problem.num_classes;
        let chains = self
            .chains
            .iter()
            .map(|c| {
                let len = n.min(c.len);
                ChainTrace {
                    z: c.z[..len * objects].to_vec(),
                    theta: c.theta[..len * cells].to_vec(),
                    pi: c.pi[..len * k].to_vec(),
                    len,
                }
            })
            .collect();
        PosteriorSamples {
            problem: self.problem.clone(),
            chains,
            burn_in: self.burn_in,
            thinning: self.thinning,
        }
    }

    /// Sweep index (1-based, burn-in included) at which retained draw `t` was taken.
    pub fn sweep_of(&self, t: usize) -> usize {
        self.burn_in + t * self.thinning + 1
    }
}

/// Mutable state of one chain plus scratch buffers.
pub(crate) struct ChainState {
    pub z: Vec<u16>,
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    log_theta: Vec<f64>,
    log_not_theta: Vec<f64>,
    yes: Vec<f64>,
    no: Vec<f64>,
    weights: Vec<f64>,
    concentration: Vec<f64>,
}

impl ChainState {
    /// θ at the prior means, π at normalized ρ, free labels drawn from the
    /// resulting predictive distribution.
    pub fn initial(problem: &LabelingProblem, rng: &mut StreamRng) -> Self {
        let k = problem.num_classes;
        let cells = problem.num_cells();
        let total: f64 = problem.rho.iter().sum();
        let mut state = Self {
            z: problem.fixed.iter().map(|f| f.unwrap_or(0)).collect(),
            theta: problem.theta_prior.iter().map(BetaParams::mean).collect(),
            pi: problem.rho.iter().map(|r| r / total).collect(),
            log_theta: vec![0.0; cells],
            log_not_theta: vec![0.0; cells],
            yes: vec![0.0; cells],
            no: vec![0.0; cells],
            weights: vec![0.0; k],
            concentration: vec![0.0; k],
        };
        state.sample_labels(problem, rng);
        state
    }

    /// Unnormalized log conditional of each class for one object.
    pub fn label_log_weights(&mut self, problem: &LabelingProblem, object: usize) -> &[f64] {
        let k = problem.num_classes;
        for c in 0..k {
            self.weights[c] = self.pi[c].ln();
        }
        for &v in &problem.by_object[object] {
            let vote = problem.votes[v as usize];
            let base = vote.labeler as usize * k * k + vote.class as usize;
            let table = if vote.yes { &self.log_theta } else { &self.log_not_theta };
            for c in 0..k {
                self.weights[c] += table[base + c * k];
            }
        }
        &self.weights
    }

    fn refresh_logs(&mut self) {
        for ((t, lt), lnt) in self.theta.iter().zip(&mut self.log_theta).zip(&mut self.log_not_theta) {
            *lt = t.ln();
            *lnt = (1.0 - t).ln();
        }
    }

    /// `z_i | Θ, π` for every free object.
    pub fn sample_labels(&mut self, problem: &LabelingProblem, rng: &mut StreamRng) {
        self.refresh_logs();
        for object in 0..problem.objects.len() {
            if problem.fixed[object].is_some() {
                continue;
            }
            self.label_log_weights(problem, object);
            normalize_log_weights(&mut self.weights);
            self.z[object] = rng::categorical(&self.weights, rng) as u16;
        }
    }

    /// `θ | Z, R` for every cell.
    pub fn sample_theta(&mut self, problem: &LabelingProblem, rng: &mut StreamRng) {
        self.yes.iter_mut().for_each(|x| *x = 0.0);
        self.no.iter_mut().for_each(|x| *x = 0.0);
        for vote in &problem.votes {
            let c = problem.cell(
                vote.labeler as usize,
                self.z[vote.object as usize] as usize,
                vote.class as usize,
            );
            if vote.yes {
                self.yes[c] += 1.0;
            } else {
                self.no[c] += 1.0;
            }
        }
        for (c, prior) in problem.theta_prior.iter().enumerate() {
            self.theta[c] = rng::beta(prior.alpha + self.yes[c], prior.beta + self.no[c], rng);
        }
    }

    /// `π | Z`.
    pub fn sample_pi(&mut self, problem: &LabelingProblem, rng: &mut StreamRng) {
        self.concentration.copy_from_slice(&problem.rho);
        for &z in &self.z {
            self.concentration[z as usize] += 1.0;
        }
        rng::dirichlet(&self.concentration, rng, &mut self.pi);
    }

    pub fn sweep(&mut self, problem: &LabelingProblem, rng: &mut StreamRng) {
        self.sample_labels(problem, rng);
        self.sample_theta(problem, rng);
        self.sample_pi(problem, rng);
    }
}

fn run_chain(problem: &LabelingProblem, config: &ChainConfig, chain: usize) -> ChainTrace {
    let mut rng = rng::stream(config.seed, &[0x6769_6262, chain as u64]);
    let mut state = ChainState::initial(problem, &mut rng);
    let keep = config.retained();
    let mut trace = ChainTrace {
        z: Vec::with_capacity(keep * problem.objects.len()),
        theta: Vec::with_capacity(keep * problem.num_cells()),
        pi: Vec::with_capacity(keep * problem.num_classes),
        len: 0,
    };
    // The initial state already holds a label draw, so the first sweep
    // refreshes θ and π before sampling labels again.
    state.sample_theta(problem, &mut rng);
    state.sample_pi(problem, &mut rng);
    for sweep in 0..config.burn_in + config.n_iterations {
        if sweep > 0 {
            state.sweep(problem, &mut rng);
        }
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thinning == 0 {
            trace.z.extend_from_slice(&state.z);
            trace.theta.extend_from_slice(&state.theta);
            trace.pi.extend_from_slice(&state.pi);
            trace.len += 1;
        }
    }
    trace
}

/// Runs `config.n_chains` independent chains on an indexed problem. Chains run
/// in parallel; each owns the stream `(seed, chain)` so results do not depend
/// on thread scheduling.
pub fn gibbs_fit_problem(problem: LabelingProblem, config: &ChainConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let chains: Vec<ChainTrace> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&problem, config, c))
        .collect();
    Ok(PosteriorSamples {
        problem,
        chains,
        burn_in: config.burn_in,
        thinning: config.thinning,
    })
}

/// Labeling stage: samples `(Z, Θ, π)` for the objects in `votes_unknown`
/// with cell priors taken from the credibility stage.
pub fn gibbs_fit(
    votes_unknown: &VoteTable,
    credibility_prior: &CredibilityPosterior,
    rho: &ClassPrior,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    if votes_unknown.num_classes() != credibility_prior.num_classes() {
        return Err(Error::consistency("votes and credibility prior disagree on K"));
    }
    let problem = LabelingProblem::two_stage(votes_unknown, credibility_prior, rho)?;
    gibbs_fit_problem(problem, config)
}

/// Single-stage variant: known labels are observed `z` inside one run and every
/// credibility cell starts from `theta_prior`.
pub fn gibbs_fit_joint(
    votes: &VoteTable,
    known_labels: &LabelAssignment,
    theta_prior: BetaParams,
    rho: &ClassPrior,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    let problem = LabelingProblem::joint(votes, known_labels, theta_prior, rho)?;
    gibbs_fit_problem(problem, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelerId, ResponsePair};
    use statrs::distribution::{Beta as BetaDist, ChiSquared, ContinuousCDF};

    fn small_problem() -> LabelingProblem {
        let mut votes = VoteTable::new(3);
        let answers = [
            ("L1", "a", 0, true),
            ("L1", "a", 2, false),
            ("L2", "a", 1, false),
            ("L1", "b", 1, true),
            ("L2", "b", 1, true),
            ("L2", "b", 0, false),
        ];
        for (j, i, k, yes) in answers {
            votes
                .insert_yn(j.into(), i.into(), k, ResponsePair::from_answer(yes))
                .unwrap();
        }
        let mut prior = CredibilityPosterior::new(3);
        for j in ["L1", "L2"] {
            let grid = (0..9)
                .map(|c| BetaParams::new(1.0 + c as f64 * 0.5, 2.0).unwrap())
                .collect();
            prior.insert(LabelerId::from(j), grid).unwrap();
        }
        LabelingProblem::two_stage(&votes, &prior, &ClassPrior::new(vec![1.0, 2.0, 1.5]).unwrap()).unwrap()
    }

    fn p_value(observed: &[f64], expected: &[f64]) -> f64 {
        let chi2: f64 = observed
            .iter()
            .zip(expected)
            .map(|(o, e)| (o - e).powi(2) / e)
            .sum();
        1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(chi2)
    }

    #[test]
    fn label_conditional_matches_exact_probabilities() {
        let problem = small_problem();
        let mut rng = rng::stream(1, &[]);
        let mut state = ChainState::initial(&problem, &mut rng);
        state.theta = (0..problem.num_cells()).map(|c| 0.1 + 0.8 * (c % 7) as f64 / 6.0).collect();
        state.pi = vec![0.2, 0.5, 0.3];
        state.refresh_logs();
        let mut exact = state.label_log_weights(&problem, 0).to_vec();
        normalize_log_weights(&mut exact);
        let draws = 10_000;
        let mut counts = vec![0.0; 3];
        for _ in 0..draws {
            state.sample_labels(&problem, &mut rng);
            counts[state.z[0] as usize] += 1.0;
        }
        let expected: Vec<f64> = exact.iter().map(|p| p * draws as f64).collect();
        assert!(p_value(&counts, &expected) > 0.001, "{counts:?} vs {expected:?}");
    }

    #[test]
    fn theta_conditional_matches_exact_beta() {
        let problem = small_problem();
        let mut rng = rng::stream(2, &[]);
        let mut state = ChainState::initial(&problem, &mut rng);
        state.z = vec![0, 1];
        // L1 answered yes to class 0 about object a (z=0): cell (L1, 0, 0).
        let cell = problem.cell(0, 0, 0);
        let prior = problem.theta_prior[cell];
        let exact = BetaDist::new(prior.alpha + 1.0, prior.beta).unwrap();
        let bins = 10;
        let draws = 10_000;
        let mut counts = vec![0.0; bins];
        for _ in 0..draws {
            state.sample_theta(&problem, &mut rng);
            let u = exact.cdf(state.theta[cell]);
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1.0;
        }
        let expected = vec![draws as f64 / bins as f64; bins];
        assert!(p_value(&counts, &expected) > 0.001, "{counts:?}");
    }

    #[test]
    fn pi_conditional_matches_dirichlet_marginal() {
        // Marginal of π_0 under Dir(ρ + n) is Beta(ρ_0 + n_0, Σ - ρ_0 - n_0).
        let problem = small_problem();
        let mut rng = rng::stream(3, &[]);
        let mut state = ChainState::initial(&problem, &mut rng);
        state.z = vec![2, 2];
        let total: f64 = problem.rho.iter().sum::<f64>() + 2.0;
        let exact = BetaDist::new(problem.rho[0], total - problem.rho[0]).unwrap();
        let bins = 10;
        let draws = 10_000;
        let mut counts = vec![0.0; bins];
        for _ in 0..draws {
            state.sample_pi(&problem, &mut rng);
            let u = exact.cdf(state.pi[0]);
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1.0;
        }
        let expected = vec![draws as f64 / bins as f64; bins];
        assert!(p_value(&counts, &expected) > 0.001, "{counts:?}");
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let problem = small_problem();
        let config = ChainConfig {
            n_chains: 3,
            burn_in: 20,
            n_iterations: 50,
            thinning: 2,
            seed: 99,
        };
        let a = gibbs_fit_problem(problem.clone(), &config).unwrap();
        let b = gibbs_fit_problem(problem, &config).unwrap();
        assert_eq!(a.chains, b.chains);
        assert_eq!(a.n_retained(), 25);
        assert_eq!(a.sweep_of(0), 21);
    }

    #[test]
    fn empty_votes_rejected() {
        let prior = CredibilityPosterior::filled(2, [LabelerId::from("L1")].iter(), BetaParams::uniform());
        let err = gibbs_fit(&VoteTable::new(2), &prior, &ClassPrior::flat(2), &ChainConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn uncovered_labeler_rejected() {
        let mut votes = VoteTable::new(2);
        votes.insert_yn("L9".into(), "a".into(), 0, ResponsePair::YES).unwrap();
        let prior = CredibilityPosterior::filled(2, [LabelerId::from("L1")].iter(), BetaParams::uniform());
        assert!(matches!(
            gibbs_fit(&votes, &prior, &ClassPrior::flat(2), &ChainConfig::default()),
            Err(Error::Consistency(_))
        ));
    }
}
