use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{LabelAssignment, LabelerId, ObjectId, VoteTable};

/// Majority-vote labels plus the objects that received no full answer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MajorityVote {
    pub labels: LabelAssignment,
    pub abstentions: Vec<ObjectId>,
}

/// Most frequent full answer per object, ties going to the lowest class index.
/// Objects that only have yes/no votes are listed as abstentions.
pub fn majority_vote_predict(votes: &VoteTable) -> MajorityVote {
    let k = votes.num_classes();
    let mut counts: BTreeMap<&ObjectId, Vec<usize>> = BTreeMap::new();
    for (_, i, c) in votes.full_votes() {
        counts.entry(i).or_insert_with(|| vec![0; k])[c] += 1;
    }
    let mut out = MajorityVote::default();
    for (i, n) in &counts {
        let mut best = 0;
        for c in 1..k {
            if n[c] > n[best] {
                best = c;
            }
        }
        out.labels.insert((*i).clone(), best);
    }
    out.abstentions = votes
        .objects()
        .into_iter()
        .filter(|i| !counts.contains_key(i))
        .collect();
    out
}

/// Fraction of each labeler's full answers that match the truth.
pub fn labeler_accuracy_scores(votes: &VoteTable, truth: &LabelAssignment) -> Result<BTreeMap<LabelerId, f64>> {
    let mut tally: BTreeMap<LabelerId, (usize, usize)> = BTreeMap::new();
    for (j, i, c) in votes.full_votes() {
        let z = truth
            .get(i)
            .ok_or_else(|| Error::consistency(format!("no true label for object {i}")))?;
        let t = tally.entry(j.clone()).or_default();
        t.0 += (c == z) as usize;
        t.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(j, (hit, n))| (j, hit as f64 / n as f64))
        .collect())
}

/// Arithmetic mean of per-labeler scores (0 for no labelers).
pub fn average_vote(scores: &BTreeMap<LabelerId, f64>) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.values().sum::<f64>() / scores.len() as f64
}

/// Per-labeler accuracy when a simulated full answer is replaced by a yes/no
/// question about the true class, counted correct iff the answer is "yes".
/// Questions about other classes are ignored.
pub fn probe_accuracy_scores(probes: &VoteTable, truth: &LabelAssignment) -> Result<BTreeMap<LabelerId, f64>> {
    let mut tally: BTreeMap<LabelerId, (usize, usize)> = BTreeMap::new();
    for (j, i, c, r) in probes.yn_votes() {
        let z = truth
            .get(i)
            .ok_or_else(|| Error::consistency(format!("no true label for object {i}")))?;
        if c != z {
            continue;
        }
        let t = tally.entry(j.clone()).or_default();
        t.0 += r.is_yes() as usize;
        t.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(j, (hit, n))| (j, hit as f64 / n as f64))
        .collect())
}

/// Majority over the same true-class probes: an object is labeled correctly
/// iff strictly more labelers answered "yes" than "no". Returns the fraction
/// of probed objects labeled correctly.
pub fn probe_majority_accuracy(probes: &VoteTable, truth: &LabelAssignment) -> Result<f64> {
    let mut balance: BTreeMap<&ObjectId, i64> = BTreeMap::new();
    for (_, i, c, r) in probes.yn_votes() {
        let z = truth
            .get(i)
            .ok_or_else(|| Error::consistency(format!("no true label for object {i}")))?;
        if c == z {
            *balance.entry(i).or_default() += if r.is_yes() { 1 } else { -1 };
        }
    }
    if balance.is_empty() {
        return Err(Error::invalid("no true-class probes"));
    }
    Ok(balance.values().filter(|&&b| b > 0).count() as f64 / balance.len() as f64)
}
