//! Domain types and exact log-density evaluation for the yes/no vote model.
//!
//! A labeler `j` is asked whether object `i` belongs to class `k'`. Given the
//! true class `z_i = k`, the answer is "yes" with probability `θʲ[k][k']`,
//! the labeler's credibility for that (true class, asked class) cell. Class
//! proportions `π` follow a Dirichlet prior and every `z_i` is categorical
//! given `π`.

mod classes;
pub mod density;
mod indexed;
mod labels;
mod params;
mod votes;

pub use classes::{is_valid_id, ClassInfo, ClassSpace};
pub use density::{
    joint_log_density, log_prior_pi, log_prior_theta, log_prior_z, stage1_log_likelihood,
    yn_log_likelihood_single, yn_log_likelihood_table, JointPriors,
};
pub use indexed::{IndexedVote, LabelingProblem};
pub use labels::{LabelAssignment, LabelPosterior};
pub use params::{
    BetaParams, ClassPrior, Credibilities, CredibilityMatrix, CredibilityPosterior, THETA_EPS,
};
pub use votes::{LabelerId, ObjectId, QuestionType, ResponsePair, VoteTable};
