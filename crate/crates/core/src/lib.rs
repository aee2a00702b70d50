//! Aggregation of partial yes/no crowd votes into multi-class labels.
//!
//! Labelers answer binary questions ("does object i belong to class k?").
//! Each labeler is described by a credibility matrix whose `[k][k']` cell is
//! the probability of answering "yes" to a class-`k'` question about an
//! object of true class `k`. Inference runs in two stages: credibilities are
//! first estimated from objects with known labels ([`gibbs::fit_credibility_stage`]),
//! then labels, credibilities and class proportions of the unknown objects
//! are inferred jointly with either a blocked Gibbs sampler ([`gibbs`]) or
//! black-box variational inference ([`bbvi`]).
//!
//! [`simulation`] generates synthetic labelers and votes, [`baselines`] holds
//! majority-vote and full-question (confusion matrix) comparisons, [`eval`]
//! the metrics, and [`io`] the delimited file formats used by the CLI and the
//! labeling service.

pub mod baselines;
pub mod bbvi;
pub mod benchmark;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod gibbs;
pub mod io;
pub mod math;
pub mod model;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
