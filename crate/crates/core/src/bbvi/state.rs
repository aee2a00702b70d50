use rand::Rng;

use rand_distr::{Beta, Distribution};

use super::LearningRates;
use crate::math::{digamma, ln_beta, ln_gamma, softplus, softplus_grad, softplus_inv};
use crate::model::{BetaParams, LabelingProblem, THETA_EPS};
use crate::rng;

/// Unconstrained variational parameters `λ` of every mean-field factor.
///
/// Layout of [`params`](Self::params): one `(a, b)` pair per credibility
/// cell, then `K` entries per unknown object, then `K` entries for `π` when
/// the class proportions are part of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub params: Vec<f64>,
    num_classes: usize,
    num_cells: usize,
    free_rows: Vec<Option<usize>>,
    num_free: usize,
    include_pi: bool,
}

/// One joint draw from `q`. Observed labels are copied into `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub theta: Vec<f64>,
    pub z: Vec<u16>,
    pub pi: Vec<f64>,
}

pub(crate) struct BetaFactor {
    alpha: f64,
    beta: f64,
    ln_norm: f64,
    shift_alpha: f64,
    shift_beta: f64,
    slope_alpha: f64,
    slope_beta: f64,
    dist: Beta<f64>,
}

pub(crate) struct DirichletFactor {
    d: Vec<f64>,
    ln_norm: f64,
    shift: Vec<f64>,
    slope: Vec<f64>,
}

/// Quantities of `q` that stay fixed within one gradient step.
pub(crate) struct Prepared {
    k: usize,
    beta: Vec<BetaFactor>,
    soft: Vec<f64>,
    slope: Vec<f64>,
    totals: Vec<f64>,
    probs: Vec<f64>,
    dirichlet: Option<DirichletFactor>,
}

impl Prepared {
    pub fn draw<R: Rng + ?Sized>(&self, state: &VariationalState, problem: &LabelingProblem, rng: &mut R) -> Sample {
        let k = self.k;
        let theta = self
            .beta
            .iter()
            .map(|f| f.dist.sample(rng).clamp(THETA_EPS, 1.0 - THETA_EPS))
            .collect();
        let z = problem
            .fixed
            .iter()
            .enumerate()
            .map(|(object, fixed)| match fixed {
                Some(c) => *c,
                None => {
                    let row = state.free_rows[object].unwrap();
                    rng::categorical(&self.probs[row * k..(row + 1) * k], rng) as u16
                }
            })
            .collect();
        let mut pi = Vec::new();
        if let Some(f) = &self.dirichlet {
            pi = vec![0.0; k];
            rng::dirichlet(&f.d, rng, &mut pi);
            // Keep ln π finite when a tiny concentration underflows.
            let mut total = 0.0;
            for p in pi.iter_mut() {
                *p = p.max(1e-300);
                total += *p;
            }
            pi.iter_mut().for_each(|p| *p /= total);
        }
        Sample { theta, z, pi }
    }
}

/// `ln q` of each factor at one sample.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FactorLogQ {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub pi: f64,
}

impl VariationalState {
    /// `q(θ)` starts at the cell priors, `q(π)` at `Dirichlet(ρ)` and each
    /// `q(z_i)` at the prior predictive of its votes, shrunk 10% towards uniform.
    pub fn initial(problem: &LabelingProblem, include_pi: bool) -> Self {
        let k = problem.num_classes;
        let cells = problem.num_cells();
        let mut free_rows = Vec::with_capacity(problem.objects.len());
        let mut num_free = 0;
        for f in &problem.fixed {
            if f.is_none() {
                free_rows.push(Some(num_free));
                num_free += 1;
            } else {
                free_rows.push(None);
            }
        }
        let mut params = Vec::with_capacity(2 * cells + num_free * k + k);
        for prior in &problem.theta_prior {
            params.push(softplus_inv(prior.alpha));
            params.push(softplus_inv(prior.beta));
        }
        let rho_total: f64 = problem.rho.iter().sum();
        let log_theta: Vec<(f64, f64)> = problem
            .theta_prior
            .iter()
            .map(|p| (p.mean().ln(), (1.0 - p.mean()).ln()))
            .collect();
        for i in problem.free_objects() {
            let mut w: Vec<f64> = problem.rho.iter().map(|r| (r / rho_total).ln()).collect();
            for &v in &problem.by_object[i] {
                let vote = problem.votes[v as usize];
                for (c, wc) in w.iter_mut().enumerate() {
                    let (ly, ln) = log_theta[problem.cell(vote.labeler as usize, c, vote.class as usize)];
                    *wc += if vote.yes { ly } else { ln };
                }
            }
            crate::math::normalize_log_weights(&mut w);
            params.extend(w.iter().map(|p| softplus_inv(0.9 * p + 0.1 / k as f64)));
        }
        if include_pi {
            params.extend(problem.rho.iter().map(|&r| softplus_inv(r)));
        }
        Self {
            params,
            num_classes: k,
            num_cells: cells,
            free_rows,
            num_free,
            include_pi,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn includes_pi(&self) -> bool {
        self.include_pi
    }

    pub(crate) fn z_offset(&self) -> usize {
        2 * self.num_cells
    }

    pub(crate) fn pi_offset(&self) -> usize {
        self.z_offset() + self.num_free * self.num_classes
    }

    pub(crate) fn free_row(&self, object: usize) -> Option<usize> {
        self.free_rows[object]
    }

    /// `(α, β)` of `q(θ_c)`.
    pub fn beta_params(&self, cell: usize) -> BetaParams {
        BetaParams {
            alpha: softplus(self.params[2 * cell]),
            beta: softplus(self.params[2 * cell + 1]),
        }
    }

    /// `p_i` of the `row`-th unknown object.
    pub fn label_probs(&self, row: usize) -> Vec<f64> {
        let k = self.num_classes;
        let start = self.z_offset() + row * k;
        let s: Vec<f64> = self.params[start..start + k].iter().map(|&u| softplus(u)).collect();
        let total: f64 = s.iter().sum();
        s.into_iter().map(|x| x / total).collect()
    }

    /// Dirichlet parameters `d` of `q(π)`; empty when `π` is not modeled.
    pub fn dirichlet_params(&self) -> Vec<f64> {
        if !self.include_pi {
            return Vec::new();
        }
        let start = self.pi_offset();
        self.params[start..start + self.num_classes]
            .iter()
            .map(|&u| softplus(u))
            .collect()
    }

    /// AdaGrad base rate of every parameter.
    pub fn rate_vector(&self, rates: LearningRates) -> Vec<f64> {
        let mut out = vec![rates.theta; self.z_offset()];
        out.resize(self.pi_offset(), rates.z);
        out.resize(self.params.len(), rates.pi);
        out
    }

    /// Per-step constants of every factor (digamma terms, normalizers, draws).
    pub(crate) fn prepare(&self) -> Prepared {
        let k = self.num_classes;
        let beta = (0..self.num_cells)
            .map(|c| {
                let (a, b) = (self.params[2 * c], self.params[2 * c + 1]);
                let (alpha, beta) = (softplus(a), softplus(b));
                let both = digamma(alpha + beta);
                BetaFactor {
                    alpha,
                    beta,
                    ln_norm: ln_beta(alpha, beta),
                    shift_alpha: both - digamma(alpha),
                    shift_beta: both - digamma(beta),
                    slope_alpha: softplus_grad(a),
                    slope_beta: softplus_grad(b),
                    dist: Beta::new(alpha, beta).expect("positive Beta parameters"),
                }
            })
            .collect();
        let z_params = &self.params[self.z_offset()..self.pi_offset()];
        let soft: Vec<f64> = z_params.iter().map(|&u| softplus(u)).collect();
        let slope: Vec<f64> = z_params.iter().map(|&u| softplus_grad(u)).collect();
        let totals: Vec<f64> = soft.chunks(k).map(|c| c.iter().sum()).collect();
        let probs = soft
            .chunks(k)
            .zip(&totals)
            .flat_map(|(c, t)| c.iter().map(move |s| s / t))
            .collect();
        let mut dirichlet = None;
        if self.include_pi {
            let u = &self.params[self.pi_offset()..];
            let d: Vec<f64> = u.iter().map(|&x| softplus(x)).collect();
            let total: f64 = d.iter().sum();
            let psi_total = digamma(total);
            dirichlet = Some(DirichletFactor {
                ln_norm: ln_gamma(total) - d.iter().map(|&x| ln_gamma(x)).sum::<f64>(),
                shift: d.iter().map(|&x| psi_total - digamma(x)).collect(),
                slope: u.iter().map(|&x| softplus_grad(x)).collect(),
                d,
            });
        }
        Prepared {
            k,
            beta,
            soft,
            slope,
            totals,
            probs,
            dirichlet,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, problem: &LabelingProblem, rng: &mut R) -> Sample {
        self.prepare().draw(self, problem, rng)
    }

    /// Total `ln q(sample)` and the unconstrained score `∇_λ ln q(sample)`.
    pub fn log_q_and_grads(&self, problem: &LabelingProblem, sample: &Sample) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.num_parameters()];
        let f = self.score_into(&self.prepare(), problem, sample, &mut grad);
        (f.theta.iter().sum::<f64>() + f.z.iter().sum::<f64>() + f.pi, grad)
    }

    /// `ln q` of each factor at `sample`, writing the unconstrained score
    /// `∇_λ ln q` of every parameter into `grad`.
    pub(crate) fn score_into(
        &self,
        prepared: &Prepared,
        problem: &LabelingProblem,
        sample: &Sample,
        grad: &mut [f64],
    ) -> FactorLogQ {
        let k = self.num_classes;
        let mut theta = Vec::with_capacity(self.num_cells);
        for (c, (&t, f)) in sample.theta.iter().zip(&prepared.beta).enumerate() {
            let (lt, lnt) = (t.ln(), (1.0 - t).ln());
            theta.push((f.alpha - 1.0) * lt + (f.beta - 1.0) * lnt - f.ln_norm);
            grad[2 * c] = (lt + f.shift_alpha) * f.slope_alpha;
            grad[2 * c + 1] = (lnt + f.shift_beta) * f.slope_beta;
        }
        let mut z = Vec::with_capacity(self.num_free);
        let z_offset = self.z_offset();
        for object in problem.free_objects() {
            let row = self.free_rows[object].unwrap();
            let zi = sample.z[object] as usize;
            z.push(prepared.probs[row * k + zi].ln());
            let inv_total = 1.0 / prepared.totals[row];
            for m in 0..k {
                let n = row * k + m;
                let direct = if m == zi { 1.0 / prepared.soft[n] } else { 0.0 };
                grad[z_offset + n] = prepared.slope[n] * (direct - inv_total);
            }
        }
        let mut pi = 0.0;
        if let Some(f) = &prepared.dirichlet {
            let start = self.pi_offset();
            pi = f.ln_norm;
            for m in 0..k {
                let lp = sample.pi[m].ln();
                pi += (f.d[m] - 1.0) * lp;
                grad[start + m] = (lp + f.shift[m]) * f.slope[m];
            }
        }
        FactorLogQ { theta, z, pi }
    }

    /// Human-readable name of the factor owning parameter `n`.
    pub fn factor_name(&self, problem: &LabelingProblem, n: usize) -> String {
        let k = self.num_classes;
        if n < self.z_offset() {
            let cell = n / 2;
            let labeler = &problem.labelers[cell / (k * k)];
            let which = if n % 2 == 0 { "alpha" } else { "beta" };
            format!("theta[{labeler},{},{}].{which}", (cell / k) % k, cell % k)
        } else if n < self.pi_offset() {
            let row = (n - self.z_offset()) / k;
            let object = self.free_rows.iter().position(|r| *r == Some(row)).unwrap();
            format!("z[{}]", problem.objects[object])
        } else {
            format!("pi[{}]", n - self.pi_offset())
        }
    }
}
