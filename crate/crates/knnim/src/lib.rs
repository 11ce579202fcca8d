//! Design-based estimation of treatment effects in randomized experiments
//! where interference is restricted to each unit's K nearest neighbors.
//!
//! A unit's response may depend on its own treatment and on the treatments
//! of the K units it interacts with most strongly. The crate builds the
//! interference structure from pairwise interaction distances, computes
//! exposure probabilities in closed form under completely randomized and
//! Bernoulli designs, produces Horvitz-Thompson estimates of direct,
//! indirect, total, and per-neighbor effects, and attaches conservative
//! variance estimates to each.
//!
//! Modules:
//! - [`model`]: distance matrices, neighborhoods, treatment exposures
//! - [`design`]: closed-form marginal and joint exposure probabilities
//! - [`estimators`]: Horvitz-Thompson exposure means and effect estimators
//! - [`variance`]: conservative variance and covariance estimation
//! - [`oracle`]: exhaustive-enumeration ground truth for small instances
//! - [`sim`]: synthetic populations and the replicated simulation harness

pub mod design;
pub mod estimators;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod variance;

pub use design::{all_marginals, check_compatibility, joint_probability, marginal_probability};
pub use design::{Design, DesignError, PairOverlap};
pub use estimators::{
    estimate_a1, estimate_a2, estimate_all, ht_mean, Assumption, EffectEstimate, EffectKind,
    EstimatorError, ExperimentData, Weights,
};
pub use model::{
    build_k_neighborhoods, classify_exposure, exposure_counts, Assignment, DistanceMatrix,
    Exposure, ExposureCounts, KNeighborhoods, ModelError,
};
pub use oracle::{OracleError, PotentialOutcomeTable};
pub use sim::{InterferenceModel, SimConfig, SimError, SimSummary};
