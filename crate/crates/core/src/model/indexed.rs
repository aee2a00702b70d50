use std::collections::BTreeMap;

use super::labels::LabelAssignment;
use super::params::{BetaParams, ClassPrior, Credibilities, CredibilityMatrix, CredibilityPosterior};
use super::votes::{LabelerId, ObjectId, VoteTable};
use crate::error::{Error, Result};

/// A yes/no vote with dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedVote {
    pub labeler: u32,
    pub object: u32,
    pub class: u16,
    pub yes: bool,
}

/// Dense form of a labeling-stage problem shared by the inference backends.
///
/// Credibility cells are addressed as `(labeler·K + true_class)·K + asked_class`.
/// Objects listed in `fixed` have an observed label and are not sampled.
#[derive(Debug, Clone)]
pub struct LabelingProblem {
    pub num_classes: usize,
    pub labelers: Vec<LabelerId>,
    pub objects: Vec<ObjectId>,
    pub votes: Vec<IndexedVote>,
    pub by_object: Vec<Vec<u32>>,
    pub theta_prior: Vec<BetaParams>,
    pub rho: Vec<f64>,
    pub fixed: Vec<Option<u16>>,
}

impl LabelingProblem {
    /// Labeling stage of the two-stage scheme: every object in `votes` is
    /// unknown and each cell's prior comes from the credibility stage.
    pub fn two_stage(votes: &VoteTable, credibility_prior: &CredibilityPosterior, rho: &ClassPrior) -> Result<Self> {
        let theta_prior: BTreeMap<LabelerId, Vec<BetaParams>> = credibility_prior
            .iter()
            .map(|(j, g)| (j.clone(), g.to_vec()))
            .collect();
        Self::build(votes, credibility_prior.num_classes(), theta_prior, rho, &LabelAssignment::new())
    }

    /// Single-stage model: known labels enter as observed `z` and every
    /// credibility cell starts from `theta_prior`.
    pub fn joint(
        votes: &VoteTable,
        known_labels: &LabelAssignment,
        theta_prior: BetaParams,
        rho: &ClassPrior,
    ) -> Result<Self> {
        let k = votes.num_classes();
        let priors = votes
            .labelers()
            .into_iter()
            .map(|j| (j, vec![theta_prior; k * k]))
            .collect();
        Self::build(votes, k, priors, rho, known_labels)
    }

    fn build(
        votes: &VoteTable,
        k: usize,
        theta_prior: BTreeMap<LabelerId, Vec<BetaParams>>,
        rho: &ClassPrior,
        known: &LabelAssignment,
    ) -> Result<Self> {
        if votes.yn_len() == 0 {
            return Err(Error::invalid("vote table has no yes/no votes; nothing to infer"));
        }
        if votes.num_classes() != k || rho.rho().len() != k {
            return Err(Error::consistency("class counts of votes, priors and ρ differ"));
        }
        known.validate(k)?;
        let labelers: Vec<LabelerId> = theta_prior.keys().cloned().collect();
        let labeler_index: BTreeMap<&LabelerId, u32> =
            labelers.iter().enumerate().map(|(n, j)| (j, n as u32)).collect();
        let objects: Vec<ObjectId> = votes.yn_objects().into_iter().collect();
        let object_index: BTreeMap<&ObjectId, u32> =
            objects.iter().enumerate().map(|(n, i)| (i, n as u32)).collect();

        let mut indexed = Vec::with_capacity(votes.yn_len());
        let mut by_object = vec![Vec::new(); objects.len()];
        for (j, i, class, r) in votes.yn_votes() {
            let labeler = *labeler_index
                .get(j)
                .ok_or_else(|| Error::consistency(format!("no credibility prior for labeler {j}")))?;
            let object = object_index[i];
            by_object[object as usize].push(indexed.len() as u32);
            indexed.push(IndexedVote {
                labeler,
                object,
                class: class as u16,
                yes: r.is_yes(),
            });
        }
        let fixed = objects.iter().map(|o| known.get(o).map(|c| c as u16)).collect();
        Ok(Self {
            num_classes: k,
            labelers,
            objects,
            votes: indexed,
            by_object,
            theta_prior: theta_prior.into_values().flatten().collect(),
            rho: rho.rho().to_vec(),
            fixed,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.labelers.len() * self.num_classes * self.num_classes
    }

    #[inline]
    pub fn cell(&self, labeler: usize, true_class: usize, asked_class: usize) -> usize {
        (labeler * self.num_classes + true_class) * self.num_classes + asked_class
    }

    /// Objects whose label is inferred.
    pub fn free_objects(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(n, _)| n)
    }

    pub fn num_free_objects(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    /// Converts a dense θ vector into per-labeler matrices.
    pub fn credibilities(&self, theta: &[f64]) -> Credibilities {
        let kk = self.num_classes * self.num_classes;
        self.labelers
            .iter()
            .enumerate()
            .map(|(n, j)| {
                let m = CredibilityMatrix::new(self.num_classes, theta[n * kk..(n + 1) * kk].to_vec())
                    .expect("sampled credibilities lie in [0,1]");
                (j.clone(), m)
            })
            .collect()
    }

    /// Converts a dense label vector into an assignment.
    pub fn assignment(&self, z: &[u16]) -> LabelAssignment {
        self.objects
            .iter()
            .zip(z)
            .map(|(o, &c)| (o.clone(), c as usize))
            .collect()
    }

    /// Grid of Beta parameters as a [`CredibilityPosterior`].
    pub fn to_posterior(&self, cells: &[BetaParams]) -> CredibilityPosterior {
        let kk = self.num_classes * self.num_classes;
        let mut out = CredibilityPosterior::new(self.num_classes);
        for (n, j) in self.labelers.iter().enumerate() {
            out.insert(j.clone(), cells[n * kk..(n + 1) * kk].to_vec())
                .expect("grid size matches K");
        }
        out
    }
}
