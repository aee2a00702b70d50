use crate::error::{Error, Result};
use crate::model::{BetaParams, CredibilityPosterior, LabelAssignment, VoteTable};

/// Conjugate credibility stage. For each labeler `j` and cell `(k, k')`:
/// `α̂ = α₀ + #yes` and `β̂ = β₀ + #no`, counting votes by `j` on class-`k'`
/// questions about known objects of class `k`.
pub fn fit_credibility_stage(
    votes_known: &VoteTable,
    known_labels: &LabelAssignment,
    prior: BetaParams,
) -> Result<CredibilityPosterior> {
    let prior = BetaParams::new(prior.alpha, prior.beta)?;
    let k = votes_known.num_classes();
    known_labels.validate(k)?;
    let mut out = CredibilityPosterior::filled(k, votes_known.labelers().iter(), prior);
    let mut grids: std::collections::BTreeMap<_, Vec<BetaParams>> =
        out.iter().map(|(j, g)| (j.clone(), g.to_vec())).collect();
    for (j, i, asked, r) in votes_known.yn_votes() {
        let z = known_labels
            .get(i)
            .ok_or_else(|| Error::consistency(format!("object {i} has votes but no known label")))?;
        let cell = &mut grids.get_mut(j).expect("labeler present")[z * k + asked];
        if r.is_yes() {
            cell.alpha += 1.0;
        } else {
            cell.beta += 1.0;
        }
    }
    for (j, g) in grids {
        out.insert(j, g)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelerId, ResponsePair};

    #[test]
    fn three_yes_one_no_gives_beta_4_2() {
        let mut votes = VoteTable::new(2);
        let mut known = LabelAssignment::new();
        for (n, yes) in [true, true, true, false].into_iter().enumerate() {
            let o = format!("o{n}");
            votes
                .insert_yn("L1".into(), o.as_str().into(), 1, ResponsePair::from_answer(yes))
                .unwrap();
            known.insert(o.into(), 0);
        }
        let post = fit_credibility_stage(&votes, &known, BetaParams::uniform()).unwrap();
        let cell = post.cell(&LabelerId::from("L1"), 0, 1).unwrap();
        assert_eq!(cell, BetaParams::new(4.0, 2.0).unwrap());
        assert!((cell.mean() - 2.0 / 3.0).abs() < 1e-15);
        // untouched cells keep the prior
        assert_eq!(post.cell(&"L1".into(), 1, 1).unwrap(), BetaParams::uniform());
    }

    #[test]
    fn unlabeled_object_is_an_error() {
        let mut votes = VoteTable::new(2);
        votes.insert_yn("L1".into(), "x".into(), 0, ResponsePair::YES).unwrap();
        assert!(matches!(
            fit_credibility_stage(&votes, &LabelAssignment::new(), BetaParams::uniform()),
            Err(Error::Consistency(_))
        ));
    }
}
