//! Synthetic labelers, labels and votes.
//!
//! Credibility rows are drawn entrywise from Beta(0.5, 0.5). A labeler who is
//! an expert in class `k` instead gets `θ[k][k] ~ Beta(20, 1)` and
//! `θ[k][k'] ~ Beta(1, 20)` for `k' ≠ k`: an expert affirms the right class
//! and rejects the others.
//!
//! Votes are generated per `(labeler, object)` pair from the stream
//! `rng::stream(seed, [id_index(labeler), id_index(object), tag])`, so a
//! table is a pure function of its inputs and seed, and adding a labeler or
//! an object never perturbs the votes of the others.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CredibilityMatrix, LabelAssignment, LabelerId, ObjectId, ResponsePair, VoteTable,
};
use crate::rng::{id_index, stream};

const TAG_YN: u64 = 1;
const TAG_FULL: u64 = 2;
const TAG_PROBE: u64 = 3;

/// A simulated labeler.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelerProfile {
    pub credibility: CredibilityMatrix,
    pub expert_classes: BTreeSet<usize>,
}

impl LabelerProfile {
    pub fn new(credibility: CredibilityMatrix, expert_classes: BTreeSet<usize>) -> Result<Self> {
        let k = credibility.num_classes();
        if expert_classes.len() > max_expert_classes(k) {
            return Err(Error::invalid(format!(
                "a labeler can be expert in at most {} of {k} classes",
                max_expert_classes(k)
            )));
        }
        if expert_classes.iter().any(|&c| c >= k) {
            return Err(Error::invalid("expert class out of range"));
        }
        Ok(Self {
            credibility,
            expert_classes,
        })
    }
}

/// `⌈K/2⌉`.
pub fn max_expert_classes(k: usize) -> usize {
    k.div_ceil(2)
}

/// How many distinct classes a labeler is asked about per object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionBudget {
    /// Uniform number of questions in `min..=max` (`Random(min, max)`).
    RandomRange { min: usize, max: usize },
    /// Every class is asked.
    FixedAll,
}

impl QuestionBudget {
    pub fn random(min: usize, max: usize) -> Self {
        QuestionBudget::RandomRange { min, max }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match *self {
            QuestionBudget::RandomRange { min, max } if !(1 <= min && min <= max && max <= k) => {
                Err(Error::invalid(format!(
                    "question budget Random({min},{max}) must satisfy 1 ≤ min ≤ max ≤ K={k}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        match *self {
            QuestionBudget::RandomRange { min, max } => rng.random_range(min..=max),
            QuestionBudget::FixedAll => k,
        }
    }

    /// Expected number of questions per (labeler, object).
    pub fn mean(&self, k: usize) -> f64 {
        match *self {
            QuestionBudget::RandomRange { min, max } => (min + max) as f64 / 2.0,
            QuestionBudget::FixedAll => k as f64,
        }
    }
}

fn beta_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("positive Beta parameters").sample(rng)
}

/// Samples a credibility matrix with the given expertise.
pub fn sample_credibility_matrix<R: Rng + ?Sized>(
    k: usize,
    expert_classes: &BTreeSet<usize>,
    rng: &mut R,
) -> Result<CredibilityMatrix> {
    if expert_classes.iter().any(|&c| c >= k) {
        return Err(Error::invalid("expert class out of range"));
    }
    let mut values = Vec::with_capacity(k * k);
    for true_class in 0..k {
        let expert = expert_classes.contains(&true_class);
        for asked in 0..k {
            let v = match (expert, asked == true_class) {
                (false, _) => beta_draw(0.5, 0.5, rng),
                (true, true) => beta_draw(20.0, 1.0, rng),
                (true, false) => beta_draw(1.0, 20.0, rng),
            };
            values.push(v);
        }
    }
    CredibilityMatrix::new(k, values)
}

/// Draws a labeler expert in between 1 and `max_experts` classes (chosen
/// uniformly) and samples its credibility matrix.
pub fn sample_labeler_profile<R: Rng + ?Sized>(k: usize, max_experts: usize, rng: &mut R) -> Result<LabelerProfile> {
    let max_experts = max_experts.min(max_expert_classes(k));
    let count = if max_experts == 0 {
        0
    } else {
        rng.random_range(1..=max_experts)
    };
    let experts: BTreeSet<usize> = index::sample(rng, k, count).into_iter().collect();
    let credibility = sample_credibility_matrix(k, &experts, rng)?;
    LabelerProfile::new(credibility, experts)
}

/// Zero-padded object ids `obj0001, obj0002, ...`.
pub fn object_ids(n: usize) -> Vec<ObjectId> {
    let width = n.to_string().len().max(4);
    (1..=n)
        .map(|i| ObjectId::new(format!("obj{i:0width$}")))
        .collect()
}

/// Labeler ids `L1..Ln`.
pub fn labeler_ids(n: usize) -> Vec<LabelerId> {
    (1..=n).map(|j| LabelerId::new(format!("L{j}"))).collect()
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (c, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    // Round-off: fall back to the last class with positive weight.
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// I.i.d. categorical labels for `n_objects` objects named by [`object_ids`].
pub fn sample_labels<R: Rng + ?Sized>(n_objects: usize, pi_true: &[f64], rng: &mut R) -> Result<LabelAssignment> {
    crate::model::ClassPrior::flat(pi_true.len().max(2))
        .with_pi(pi_true.to_vec())
        .map_err(|e| Error::domain(format!("true class proportions: {e}")))?;
    Ok(object_ids(n_objects)
        .into_iter()
        .map(|o| (o, categorical(pi_true, rng)))
        .collect())
}

fn schedule_votes(
    labelers: &[&LabelerId],
    objects: &[&ObjectId],
    k: usize,
    budget: QuestionBudget,
    seed: u64,
    mut prob: impl FnMut(usize, usize, usize) -> f64,
) -> Result<VoteTable> {
    budget.validate(k)?;
    let mut table = VoteTable::new(k);
    for (jn, j) in labelers.iter().enumerate() {
        for (inn, i) in objects.iter().enumerate() {
            let mut rng = stream(seed, &[id_index(j.as_str()), id_index(i.as_str()), TAG_YN]);
            let w = budget.draw(k, &mut rng);
            for class in index::sample(&mut rng, k, w) {
                let p = prob(jn, inn, class);
                let yes = rng.random::<f64>() < p;
                table.insert_yn((*j).clone(), (*i).clone(), class, ResponsePair::from_answer(yes))?;
            }
        }
    }
    Ok(table)
}

/// Yes/no votes of simulated labelers: for every `(labeler, object)` draw a
/// question count from `budget`, pick that many distinct classes uniformly
/// and answer "yes" with probability `θʲ[z_i][k]`.
pub fn simulate_votes(
    labels: &LabelAssignment,
    profiles: &BTreeMap<LabelerId, LabelerProfile>,
    budget: QuestionBudget,
    seed: u64,
) -> Result<VoteTable> {
    let k = match profiles.values().next() {
        Some(p) => p.credibility.num_classes(),
        None => return Err(Error::invalid("no labeler profiles")),
    };
    if profiles.values().any(|p| p.credibility.num_classes() != k) {
        return Err(Error::consistency("labeler profiles disagree on K"));
    }
    labels.validate(k)?;
    let labelers: Vec<&LabelerId> = profiles.keys().collect();
    let mats: Vec<&CredibilityMatrix> = profiles.values().map(|p| &p.credibility).collect();
    let objects: Vec<&ObjectId> = labels.objects().collect();
    let truth: Vec<usize> = labels.iter().map(|(_, c)| c).collect();
    schedule_votes(&labelers, &objects, k, budget, seed, |j, i, class| {
        mats[j].get(truth[i], class)
    })
}

/// Per-labeler, per-object table of "yes" probabilities for each class.
pub type ProbabilityTable = BTreeMap<LabelerId, BTreeMap<ObjectId, Vec<f64>>>;

/// Same scheduling as [`simulate_votes`], but the "yes" coin for class `k`
/// uses `probabilities[j][i][k]` (for example a one-vs-all classifier score).
pub fn votes_from_probabilities(
    probabilities: &ProbabilityTable,
    k: usize,
    budget: QuestionBudget,
    seed: u64,
) -> Result<VoteTable> {
    let mut labelers = Vec::new();
    let mut rows: Vec<Vec<&[f64]>> = Vec::new();
    let mut objects: Option<Vec<&ObjectId>> = None;
    for (j, per_object) in probabilities {
        let ids: Vec<&ObjectId> = per_object.keys().collect();
        match &objects {
            None => objects = Some(ids),
            Some(o) if *o != ids => {
                return Err(Error::consistency(format!(
                    "labeler {j} covers a different object set"
                )))
            }
            _ => {}
        }
        for (i, p) in per_object {
            if p.len() != k {
                return Err(Error::invalid(format!("probability row for ({j},{i}) has length {}", p.len())));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::domain(format!("probability {v} outside [0,1] for ({j},{i})")));
            }
        }
        labelers.push(j);
        rows.push(per_object.values().map(Vec::as_slice).collect());
    }
    let objects = objects.unwrap_or_default();
    schedule_votes(&labelers, &objects, k, budget, seed, |j, i, class| rows[j][i][class])
}

/// One full-question answer per `(labeler, object)`. The chosen class is drawn
/// from the labeler's credibility row of the true class, normalized to sum to one.
pub fn simulate_full_votes(
    labels: &LabelAssignment,
    profiles: &BTreeMap<LabelerId, LabelerProfile>,
    seed: u64,
) -> Result<VoteTable> {
    let k = profiles
        .values()
        .next()
        .map(|p| p.credibility.num_classes())
        .ok_or_else(|| Error::invalid("no labeler profiles"))?;
    let mut table = VoteTable::new(k);
    for (j, profile) in profiles {
        for (i, z) in labels.iter() {
            let mut rng = stream(seed, &[id_index(j.as_str()), id_index(i.as_str()), TAG_FULL]);
            let chosen = categorical(profile.credibility.row(z), &mut rng);
            table.insert_full(j.clone(), i.clone(), chosen)?;
        }
    }
    Ok(table)
}

/// One yes/no question per `(labeler, object)` about the object's true class.
/// Used as a stand-in for per-labeler full answers: a "yes" counts as correct.
pub fn simulate_true_class_probes(
    labels: &LabelAssignment,
    profiles: &BTreeMap<LabelerId, LabelerProfile>,
    seed: u64,
) -> Result<VoteTable> {
    let k = profiles
        .values()
        .next()
        .map(|p| p.credibility.num_classes())
        .ok_or_else(|| Error::invalid("no labeler profiles"))?;
    let mut table = VoteTable::new(k);
    for (j, profile) in profiles {
        for (i, z) in labels.iter() {
            let mut rng = stream(seed, &[id_index(j.as_str()), id_index(i.as_str()), TAG_PROBE]);
            let yes = rng.random::<f64>() < profile.credibility.get(z, z);
            table.insert_yn(j.clone(), i.clone(), z, ResponsePair::from_answer(yes))?;
        }
    }
    Ok(table)
}
