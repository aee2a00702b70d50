//! Comparison predictors: majority vote over full answers, per-labeler
//! accuracy scores, and a Bayesian confusion-matrix model (Dawid-Skene
//! style) fitted to full answers with the same two-stage scheme as the
//! yes/no model.

mod abcd;
mod majority;

pub use abcd::{abcd_bayes_fit, fit_confusion_stage, AbcdFit, ConfusionMatrixPosterior};
pub use majority::{
    average_vote, labeler_accuracy_scores, majority_vote_predict, probe_accuracy_scores, probe_majority_accuracy,
    MajorityVote,
};
