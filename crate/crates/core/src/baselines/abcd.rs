use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::ChainConfig;
use crate::math::normalize_log_weights;
use crate::model::{ClassPrior, LabelAssignment, LabelPosterior, LabelerId, ObjectId, VoteTable};
use crate::rng;

/// Per labeler, `K` Dirichlet rows over the `K` possible answers; row `k`
/// describes answers given for objects whose true class is `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrixPosterior {
    num_classes: usize,
    rows: BTreeMap<LabelerId, Vec<f64>>,
}

impl ConfusionMatrixPosterior {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Row-major `K×K` Dirichlet parameters of one labeler.
    pub fn grid(&self, labeler: &LabelerId) -> Option<&[f64]> {
        self.rows.get(labeler).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabelerId, &[f64])> {
        self.rows.iter().map(|(j, g)| (j, g.as_slice()))
    }

    pub fn insert(&mut self, labeler: LabelerId, grid: Vec<f64>) -> Result<()> {
        if grid.len() != self.num_classes * self.num_classes || grid.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::invalid(format!("confusion grid for {labeler} needs K² positive entries")));
        }
        self.rows.insert(labeler, grid);
        Ok(())
    }

    pub fn new(k: usize) -> Self {
        Self {
            num_classes: k,
            rows: BTreeMap::new(),
        }
    }
}

/// Conjugate stage for confusion rows: `prior` pseudo-counts plus the counts
/// of each answer given for known objects of each true class. Labelers
/// without known answers keep the prior.
pub fn fit_confusion_stage(
    full_votes: &VoteTable,
    known_labels: &LabelAssignment,
    prior: f64,
) -> Result<ConfusionMatrixPosterior> {
    if !(prior > 0.0) {
        return Err(Error::domain("confusion prior must be positive"));
    }
    let k = full_votes.num_classes();
    let mut out = ConfusionMatrixPosterior::new(k);
    for j in full_votes.labelers() {
        out.rows.insert(j, vec![prior; k * k]);
    }
    for (j, i, answer) in full_votes.full_votes() {
        if let Some(z) = known_labels.get(i) {
            out.rows.get_mut(j).expect("labeler present")[z * k + answer] += 1.0;
        }
    }
    Ok(out)
}

/// Labels and confusion means from the labeling stage.
#[derive(Debug, Clone)]
pub struct AbcdFit {
    pub labels: LabelPosterior,
    pub confusion_prior: ConfusionMatrixPosterior,
    /// Posterior mean of each labeler's normalized confusion rows.
    pub confusion_mean: BTreeMap<LabelerId, Vec<f64>>,
}

struct Dense {
    k: usize,
    labelers: Vec<LabelerId>,
    objects: Vec<ObjectId>,
    /// (labeler, answer) per object.
    answers: Vec<Vec<(usize, usize)>>,
    prior: Vec<f64>,
    rho: Vec<f64>,
}

fn run_chain(d: &Dense, config: &ChainConfig, chain: usize) -> (Vec<usize>, Vec<f64>) {
    let k = d.k;
    let mut rng = rng::stream(config.seed, &[0x6162_6364, chain as u64]);
    let mut rows = vec![0.0; d.prior.len()];
    for (j, grid) in d.prior.chunks(k * k).enumerate() {
        for t in 0..k {
            rng::dirichlet(&grid[t * k..(t + 1) * k], &mut rng, &mut rows[j * k * k + t * k..j * k * k + (t + 1) * k]);
        }
    }
    let mut pi = vec![0.0; k];
    rng::dirichlet(&d.rho, &mut rng, &mut pi);
    let mut z = vec![0usize; d.objects.len()];
    let mut counts = vec![0usize; d.objects.len() * k];
    let mut row_sums = vec![0.0; rows.len()];
    let mut theta_sums = vec![0.0; rows.len()];
    let mut w = vec![0.0; k];
    let mut conc = vec![0.0; rows.len()];
    let mut class_conc = vec![0.0; k];
    let mut kept = 0usize;
    for sweep in 0..config.burn_in + config.n_iterations {
        for (i, answers) in d.answers.iter().enumerate() {
            for (c, wc) in w.iter_mut().enumerate() {
                *wc = pi[c].max(1e-300).ln();
                for &(j, a) in answers {
                    *wc += rows[j * k * k + c * k + a].max(1e-300).ln();
                }
            }
            normalize_log_weights(&mut w);
            z[i] = rng::categorical(&w, &mut rng);
        }
        conc.copy_from_slice(&d.prior);
        class_conc.copy_from_slice(&d.rho);
        for (i, answers) in d.answers.iter().enumerate() {
            class_conc[z[i]] += 1.0;
            for &(j, a) in answers {
                conc[j * k * k + z[i] * k + a] += 1.0;
            }
        }
        for (r, c) in rows.chunks_mut(k).zip(conc.chunks(k)) {
            rng::dirichlet(c, &mut rng, r);
        }
        rng::dirichlet(&class_conc, &mut rng, &mut pi);
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thinning == 0 {
            kept += 1;
            for (i, &c) in z.iter().enumerate() {
                counts[i * k + c] += 1;
            }
            for (s, r) in theta_sums.iter_mut().zip(&rows) {
                *s += r;
            }
        }
    }
    for (s, t) in row_sums.iter_mut().zip(&theta_sums) {
        *s = t / kept as f64;
    }
    (counts, row_sums)
}

/// Two-stage Bayesian confusion-matrix model on full answers. Objects in
/// `known_labels` feed the conjugate row update; every other object with a
/// full answer is labeled by blocked Gibbs sweeps over `(Z, rows, π)`.
pub fn abcd_bayes_fit(
    full_votes: &VoteTable,
    known_labels: &LabelAssignment,
    rho: &ClassPrior,
    row_prior: f64,
    config: &ChainConfig,
) -> Result<AbcdFit> {
    config.validate()?;
    if full_votes.full_len() == 0 {
        return Err(Error::invalid("no full-question answers; nothing to infer"));
    }
    let k = full_votes.num_classes();
    if rho.rho().len() != k {
        return Err(Error::consistency("ρ length differs from K"));
    }
    let confusion_prior = fit_confusion_stage(full_votes, known_labels, row_prior)?;
    let labelers: Vec<LabelerId> = confusion_prior.rows.keys().cloned().collect();
    let index: BTreeMap<&LabelerId, usize> = labelers.iter().enumerate().map(|(n, j)| (j, n)).collect();
    let mut by_object: BTreeMap<&ObjectId, Vec<(usize, usize)>> = BTreeMap::new();
    for (j, i, a) in full_votes.full_votes() {
        if !known_labels.contains(i) {
            by_object.entry(i).or_default().push((index[j], a));
        }
    }
    if by_object.is_empty() {
        return Err(Error::invalid("every answered object is known; nothing to infer"));
    }
    let dense = Dense {
        k,
        objects: by_object.keys().map(|o| (*o).clone()).collect(),
        answers: by_object.into_values().collect(),
        prior: confusion_prior.rows.values().flatten().copied().collect(),
        labelers,
        rho: rho.rho().to_vec(),
    };
    let chains: Vec<(Vec<usize>, Vec<f64>)> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&dense, config, c))
        .collect();
    let mut counts = vec![0usize; dense.objects.len() * k];
    let mut rows = vec![0.0; dense.prior.len()];
    for (c, r) in &chains {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        for (a, b) in rows.iter_mut().zip(r) {
            *a += b / chains.len() as f64;
        }
    }
    let mut labels = LabelPosterior::new();
    for (i, o) in dense.objects.iter().enumerate() {
        let n: usize = counts[i * k..(i + 1) * k].iter().sum();
        labels.insert(o.clone(), counts[i * k..(i + 1) * k].iter().map(|&c| c as f64 / n as f64).collect())?;
    }
    let confusion_mean = dense
        .labelers
        .iter()
        .enumerate()
        .map(|(j, id)| (id.clone(), rows[j * k * k..(j + 1) * k * k].to_vec()))
        .collect();
    Ok(AbcdFit {
        labels,
        confusion_prior,
        confusion_mean,
    })
}
