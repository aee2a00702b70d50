//! The synthetic benchmark campaign: simulated labelers with sparse expertise
//! answering `Random(1,4)` yes/no questions about uniformly labeled objects,
//! a prefix of which is treated as known.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::fit_credibility_stage;
use crate::model::{
    BetaParams, ClassPrior, ClassSpace, Credibilities, CredibilityPosterior, LabelAssignment, LabelerId,
    LabelingProblem, VoteTable,
};
use crate::rng::{derive_seed, stream};
use crate::simulation::{
    labeler_ids, sample_labeler_profile, sample_labels, simulate_full_votes, simulate_true_class_probes,
    simulate_votes, LabelerProfile, QuestionBudget,
};

/// Shape of a synthetic campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_labelers: usize,
    pub n_classes: usize,
    pub n_objects: usize,
    pub n_known: usize,
    pub budget: QuestionBudget,
    /// Each labeler is expert in between 1 and this many classes.
    pub max_expert_classes: usize,
    pub pi_true: Vec<f64>,
}

impl Default for Scenario {
    /// 6 labelers, 4 classes, 250 objects of which 36 known, `Random(1,4)`.
    fn default() -> Self {
        Self {
            n_labelers: 6,
            n_classes: 4,
            n_objects: 250,
            n_known: 36,
            budget: QuestionBudget::random(1, 4),
            max_expert_classes: 2,
            pi_true: vec![0.25; 4],
        }
    }
}

impl Scenario {
    /// Seven labelers, otherwise the default benchmark.
    pub fn seven_labelers() -> Self {
        Self {
            n_labelers: 7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_labelers == 0 || self.n_objects == 0 {
            return Err(Error::invalid("scenario needs at least one labeler and one object"));
        }
        if self.n_known > self.n_objects {
            return Err(Error::invalid("more known objects than objects"));
        }
        if self.pi_true.len() != self.n_classes {
            return Err(Error::invalid("pi_true length differs from n_classes"));
        }
        self.budget.validate(self.n_classes)
    }
}

/// Everything generated for one seed.
#[derive(Debug, Clone)]
pub struct SyntheticCampaign {
    pub scenario: Scenario,
    pub seed: u64,
    pub classes: ClassSpace,
    pub profiles: BTreeMap<LabelerId, LabelerProfile>,
    /// True label of every object.
    pub truth: LabelAssignment,
    /// Yes/no votes on every object.
    pub yn_votes: VoteTable,
    /// One full-question answer per labeler and object.
    pub full_votes: VoteTable,
    /// One yes/no question per labeler and object about the true class.
    pub probes: VoteTable,
}

/// Known/unknown partition of a campaign.
#[derive(Debug, Clone)]
pub struct Split {
    pub known: LabelAssignment,
    pub votes_known: VoteTable,
    pub votes_unknown: VoteTable,
    pub truth_unknown: LabelAssignment,
}

impl Split {
    /// `ρ` from add-one smoothed known class counts.
    pub fn rho(&self) -> ClassPrior {
        ClassPrior::from_counts(&self.known.class_counts(self.votes_known.num_classes()))
    }

    /// Conjugate credibility stage; labelers without known votes keep `prior`.
    pub fn credibility_stage(&self, prior: BetaParams) -> Result<CredibilityPosterior> {
        let mut post = fit_credibility_stage(&self.votes_known, &self.known, prior)?;
        post.ensure_labelers(self.votes_unknown.labelers().iter(), prior);
        Ok(post)
    }

    /// Dense labeling-stage problem of the two-stage scheme.
    pub fn two_stage_problem(&self, prior: BetaParams) -> Result<LabelingProblem> {
        LabelingProblem::two_stage(&self.votes_unknown, &self.credibility_stage(prior)?, &self.rho())
    }
}

impl SyntheticCampaign {
    /// Streams: labeler profiles `(seed, [1, j])`, labels `(seed, [2])`, yes/no
    /// votes `[3]`, full answers `[4]`, true-class probes `[5]`.
    pub fn generate(scenario: &Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let k = scenario.n_classes;
        let mut profiles = BTreeMap::new();
        for (n, id) in labeler_ids(scenario.n_labelers).into_iter().enumerate() {
            let mut rng = stream(seed, &[1, n as u64]);
            profiles.insert(id, sample_labeler_profile(k, scenario.max_expert_classes, &mut rng)?);
        }
        let truth = sample_labels(scenario.n_objects, &scenario.pi_true, &mut stream(seed, &[2]))?;
        let yn_votes = simulate_votes(&truth, &profiles, scenario.budget, derive_seed(seed, &[3]))?;
        let full_votes = simulate_full_votes(&truth, &profiles, derive_seed(seed, &[4]))?;
        let probes = simulate_true_class_probes(&truth, &profiles, derive_seed(seed, &[5]))?;
        Ok(Self {
            scenario: scenario.clone(),
            seed,
            classes: ClassSpace::numbered(k)?,
            profiles,
            truth,
            yn_votes,
            full_votes,
            probes,
        })
    }

    /// The first `n_known` objects (in id order) are known.
    pub fn known_labels(&self, n_known: usize) -> LabelAssignment {
        self.truth.iter().take(n_known).map(|(o, c)| (o.clone(), c)).collect()
    }

    /// Splits the yes/no votes at `n_known` known objects.
    pub fn split(&self, n_known: usize) -> Split {
        self.split_table(&self.yn_votes, n_known)
    }

    /// Splits an arbitrary vote table over the same objects.
    pub fn split_table(&self, votes: &VoteTable, n_known: usize) -> Split {
        let known = self.known_labels(n_known);
        let (votes_known, votes_unknown) = votes.partition_by_object(|o| known.contains(o));
        let truth_unknown = self.truth.filtered(|o| !known.contains(o));
        Split {
            known,
            votes_known,
            votes_unknown,
            truth_unknown,
        }
    }

    pub fn true_credibilities(&self) -> Credibilities {
        self.profiles
            .iter()
            .map(|(j, p)| (j.clone(), p.credibility.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape() {
        let c = SyntheticCampaign::generate(&Scenario::default(), 3).unwrap();
        assert_eq!(c.profiles.len(), 6);
        assert_eq!(c.truth.len(), 250);
        assert_eq!(c.yn_votes.labelers().len(), 6);
        let s = c.split(36);
        assert_eq!(s.known.len(), 36);
        assert_eq!(s.truth_unknown.len(), 214);
        assert_eq!(s.votes_unknown.yn_objects().len(), 214);
        assert!(c.profiles.values().all(|p| (1..=2).contains(&p.expert_classes.len())));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = SyntheticCampaign::generate(&Scenario::default(), 9).unwrap();
        let b = SyntheticCampaign::generate(&Scenario::default(), 9).unwrap();
        assert_eq!(a.yn_votes, b.yn_votes);
        assert_eq!(a.full_votes, b.full_votes);
        assert_eq!(a.truth, b.truth);
    }
}
