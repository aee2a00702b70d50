//! Experiment drivers on the synthetic benchmark: known-object sweeps,
//! baseline comparisons and question-cost curves. Each returns plain rows
//! that the CLI writes as CSV tables.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    abcd_bayes_fit, labeler_accuracy_scores, majority_vote_predict, probe_accuracy_scores, probe_majority_accuracy,
};
use crate::bbvi::{fit_bbvi, BbviConfig};
use crate::benchmark::{Split, SyntheticCampaign};
use crate::error::Result;
use crate::eval::{accuracy, credibility_mse, CurvePoint};
use crate::gibbs::{diagnose_run, gibbs_fit, summarize_posterior, ChainConfig, PosteriorSummary, PSRF_THRESHOLD};
use crate::math::argmax;
use crate::model::{BetaParams, ClassPrior, LabelAssignment, LabelPosterior, LabelerId, ResponsePair, VoteTable};
use crate::rng::stream;

/// Inference settings shared by the experiment drivers. The chain seed is
/// replaced by each campaign's seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub chains: ChainConfig,
    pub theta_prior: BetaParams,
    /// Dirichlet pseudo-count of every confusion-matrix cell.
    pub abcd_row_prior: f64,
    pub bbvi: BbviConfig,
}

impl Default for ExperimentSettings {
    /// Four chains of 500 burn-in and 1000 retained sweeps.
    fn default() -> Self {
        Self {
            chains: ChainConfig {
                n_chains: 4,
                burn_in: 500,
                n_iterations: 1000,
                thinning: 1,
                seed: 0,
            },
            theta_prior: BetaParams::uniform(),
            abcd_row_prior: 1.0,
            bbvi: BbviConfig::default(),
        }
    }
}

impl ExperimentSettings {
    fn chains_for(&self, seed: u64) -> ChainConfig {
        ChainConfig { seed, ..self.chains }
    }
}

/// Argmax labels for every object of `truth`; objects without votes get the
/// mode of `ρ`.
pub fn complete_predictions(labels: &LabelPosterior, truth: &LabelAssignment, rho: &ClassPrior) -> LabelAssignment {
    let fallback = argmax(rho.rho());
    truth
        .objects()
        .map(|o| (o.clone(), labels.get(o).map(argmax).unwrap_or(fallback)))
        .collect()
}

/// Two-stage Gibbs fit of a split.
pub fn yn_gibbs(split: &Split, settings: &ExperimentSettings, seed: u64) -> Result<PosteriorSummary> {
    let prior = split.credibility_stage(settings.theta_prior)?;
    let samples = gibbs_fit(&split.votes_unknown, &prior, &split.rho(), &settings.chains_for(seed))?;
    summarize_posterior(&samples)
}

/// Two-stage variational fit of a split.
pub fn yn_bbvi(split: &Split, settings: &ExperimentSettings, seed: u64) -> Result<PosteriorSummary> {
    let prior = split.credibility_stage(settings.theta_prior)?;
    let config = BbviConfig { seed, ..settings.bbvi };
    Ok(fit_bbvi(&split.votes_unknown, &prior, &split.rho(), &config)?.summary())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownSweepRow {
    pub seed: u64,
    pub n_known: usize,
    /// Accuracy on the objects beyond the largest known count.
    pub accuracy: f64,
    /// Credibility MSE of the conjugate stage posterior means.
    pub stage1_mse: f64,
    /// Credibility MSE of the labeling-stage posterior means.
    pub stage2_mse: f64,
}

/// Accuracy and credibility recovery as the known prefix grows. All rows
/// are scored on the same held-out objects.
pub fn known_count_sweep(
    campaign: &SyntheticCampaign,
    counts: &[usize],
    settings: &ExperimentSettings,
) -> Result<Vec<KnownSweepRow>> {
    let largest = counts.iter().copied().max().unwrap_or(0);
    let held_out = campaign.split(largest).truth_unknown;
    let truth = campaign.true_credibilities();
    counts
        .iter()
        .map(|&n| {
            let split = campaign.split(n);
            let stage1 = split.credibility_stage(settings.theta_prior)?;
            let summary = yn_gibbs(&split, settings, campaign.seed)?;
            let pred = complete_predictions(&summary.labels, &held_out, &split.rho());
            Ok(KnownSweepRow {
                seed: campaign.seed,
                n_known: n,
                accuracy: accuracy(&pred, &held_out)?,
                stage1_mse: credibility_mse(&truth, &stage1.means())?.aggregate,
                stage2_mse: credibility_mse(&truth, &summary.theta.means())?.aggregate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub seed: u64,
    pub yn_accuracy: f64,
    /// Majority of true-class probes (correct iff more "yes" than "no").
    pub probe_majority_accuracy: f64,
    /// Majority of simulated full answers.
    pub full_majority_accuracy: f64,
    /// Bayesian confusion-matrix model on full answers.
    pub abcd_accuracy: f64,
    /// Per-labeler true-class probe scores.
    pub labeler_scores: BTreeMap<LabelerId, f64>,
    /// Per-labeler accuracy of simulated full answers.
    pub labeler_full_scores: BTreeMap<LabelerId, f64>,
    pub average_vote: f64,
    pub best_labeler: f64,
}

/// Yes/no model against the majority, per-labeler and confusion-matrix
/// baselines on the unknown objects.
pub fn baseline_comparison(
    campaign: &SyntheticCampaign,
    n_known: usize,
    settings: &ExperimentSettings,
) -> Result<BaselineRow> {
    let split = campaign.split(n_known);
    let truth = &split.truth_unknown;
    let summary = yn_gibbs(&split, settings, campaign.seed)?;
    let yn_accuracy = accuracy(&complete_predictions(&summary.labels, truth, &split.rho()), truth)?;

    let probes = campaign.probes.partition_by_object(|o| truth.contains(o)).0;
    let labeler_scores = probe_accuracy_scores(&probes, truth)?;
    let full_unknown = campaign.full_votes.partition_by_object(|o| truth.contains(o)).0;
    let majority = majority_vote_predict(&full_unknown);
    let abcd = abcd_bayes_fit(
        &campaign.full_votes,
        &split.known,
        &split.rho(),
        settings.abcd_row_prior,
        &settings.chains_for(campaign.seed),
    )?;
    let average_vote = crate::baselines::average_vote(&labeler_scores);
    let best_labeler = labeler_scores.values().copied().fold(0.0, f64::max);
    Ok(BaselineRow {
        seed: campaign.seed,
        yn_accuracy,
        probe_majority_accuracy: probe_majority_accuracy(&probes, truth)?,
        full_majority_accuracy: accuracy(&complete_predictions(&to_posterior(&majority.labels, campaign.scenario.n_classes), truth, &split.rho()), truth)?,
        abcd_accuracy: accuracy(&complete_predictions(&abcd.labels, truth, &split.rho()), truth)?,
        labeler_full_scores: labeler_accuracy_scores(&full_unknown, truth)?,
        labeler_scores,
        average_vote,
        best_labeler,
    })
}

fn to_posterior(labels: &LabelAssignment, k: usize) -> LabelPosterior {
    let mut out = LabelPosterior::new();
    for (o, c) in labels.iter() {
        let mut p = vec![0.0; k];
        p[c] = 1.0;
        out.insert(o.clone(), p).expect("vertex is on the simplex");
    }
    out
}

/// Accuracy of both strategies after a fraction of the unknown-object
/// answers. Answers arrive in a seeded random order; known-object answers
/// are always available. `questions` is answers per unknown object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCurves {
    pub seed: u64,
    pub yn: Vec<CurvePoint>,
    pub abcd: Vec<CurvePoint>,
}

pub fn question_curves(
    campaign: &SyntheticCampaign,
    n_known: usize,
    fractions: &[f64],
    settings: &ExperimentSettings,
) -> Result<QuestionCurves> {
    let split = campaign.split(n_known);
    let truth = &split.truth_unknown;
    let n_eval = truth.len() as f64;
    let rho = split.rho();
    let prior = split.credibility_stage(settings.theta_prior)?;
    let chains = settings.chains_for(campaign.seed);

    let mut yn_order: Vec<_> = split.votes_unknown.yn_votes().map(|(j, i, k, r)| (j.clone(), i.clone(), k, r)).collect();
    yn_order.shuffle(&mut stream(campaign.seed, &[6]));
    let (full_known, full_unknown) = campaign.full_votes.partition_by_object(|o| split.known.contains(o));
    let mut full_order: Vec<_> = full_unknown.full_votes().map(|(j, i, c)| (j.clone(), i.clone(), c)).collect();
    full_order.shuffle(&mut stream(campaign.seed, &[7]));

    let mut yn = Vec::new();
    let mut abcd = Vec::new();
    for &f in fractions {
        let m = ((yn_order.len() as f64 * f).round() as usize).clamp(1, yn_order.len());
        let mut table = VoteTable::new(campaign.scenario.n_classes);
        for (j, i, k, r) in &yn_order[..m] {
            table.insert_yn(j.clone(), i.clone(), *k, ResponsePair::from_answer(r.is_yes()))?;
        }
        let summary = summarize_posterior(&gibbs_fit(&table, &prior, &rho, &chains)?)?;
        yn.push(CurvePoint {
            questions: m as f64 / n_eval,
            accuracy: accuracy(&complete_predictions(&summary.labels, truth, &rho), truth)?,
        });

        let m = ((full_order.len() as f64 * f).round() as usize).clamp(1, full_order.len());
        let mut table = full_known.clone();
        for (j, i, c) in &full_order[..m] {
            table.insert_full(j.clone(), i.clone(), *c)?;
        }
        let fit = abcd_bayes_fit(&table, &split.known, &rho, settings.abcd_row_prior, &chains)?;
        abcd.push(CurvePoint {
            questions: m as f64 / n_eval,
            accuracy: accuracy(&complete_predictions(&fit.labels, truth, &rho), truth)?,
        });
    }
    Ok(QuestionCurves {
        seed: campaign.seed,
        yn,
        abcd,
    })
}

/// Pointwise mean of equally shaped curves.
pub fn average_curves(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let n = curves.len() as f64;
    (0..curves.first().map_or(0, Vec::len))
        .map(|p| CurvePoint {
            questions: curves.iter().map(|c| c[p].questions).sum::<f64>() / n,
            accuracy: curves.iter().map(|c| c[p].accuracy).sum::<f64>() / n,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    /// Largest PSRF over credibility cells and class proportions.
    pub max_psrf: f64,
    pub all_continuous_converged: bool,
    /// Accuracy of the samples up to sweep `short_sweeps`.
    pub short_accuracy: f64,
    /// Accuracy of the samples up to sweep `long_sweeps`.
    pub long_accuracy: f64,
}

/// Diagnostics and accuracy stability of one long run. Sweep counts
/// include burn-in; both must exceed it.
pub fn convergence_check(
    campaign: &SyntheticCampaign,
    n_known: usize,
    chains: &ChainConfig,
    short_sweeps: usize,
    long_sweeps: usize,
    theta_prior: BetaParams,
) -> Result<ConvergenceRow> {
    if short_sweeps <= chains.burn_in || long_sweeps < short_sweeps {
        return Err(crate::error::Error::Invalid(format!(
            "need burn-in {} < {short_sweeps} <= {long_sweeps}",
            chains.burn_in
        )));
    }
    let split = campaign.split(n_known);
    let prior = split.credibility_stage(theta_prior)?;
    let config = ChainConfig {
        n_iterations: long_sweeps - chains.burn_in,
        thinning: 1,
        seed: campaign.seed,
        ..*chains
    };
    let samples = gibbs_fit(&split.votes_unknown, &prior, &split.rho(), &config)?;
    let report = diagnose_run(&samples);
    let truth = &split.truth_unknown;
    let score = |s: &crate::gibbs::PosteriorSamples| -> Result<f64> {
        let summary = summarize_posterior(s)?;
        accuracy(&complete_predictions(&summary.labels, truth, &split.rho()), truth)
    };
    Ok(ConvergenceRow {
        seed: campaign.seed,
        max_psrf: report.max_continuous_psrf(),
        all_continuous_converged: report.max_continuous_psrf() < PSRF_THRESHOLD,
        short_accuracy: score(&samples.truncated(short_sweeps - chains.burn_in))?,
        long_accuracy: score(&samples)?,
    })
}
