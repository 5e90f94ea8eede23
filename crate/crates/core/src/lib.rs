//! Worst-risk minimization under bounded distribution shifts in linear structural
//! equation models.
//!
//! The crate estimates the linear predictor that minimizes the worst risk over all
//! shifts that are at most `γ` times as strong as the shifts seen in a set of
//! training environments. The estimate is found exactly: candidates are the
//! stationary points of each penalized environment risk and the minimizers along
//! each pairwise equal-risk surface, the latter obtained from the real roots of a
//! univariate polynomial.
//!
//! [`semgen`] simulates environments from linear SEMs with random coefficients and
//! gives their exact moments; [`oracle`] holds brute-force checks used by the tests.

pub mod estimator;
pub mod io;
pub mod moments;
pub mod oracle;
pub mod par;
pub mod polyalg;
pub mod risk;
pub mod semgen;

pub use estimator::{minimize_worst_risk, Estimate, EstimatorConfig, EstimatorReport};
pub use moments::{EnvLabel, EnvironmentMoments, EnvironmentSample, SampleCount};
pub use par::Exec;
pub use polyalg::{Polynomial, RootMode};
pub use risk::{QuadraticRisk, WorstRiskObjective};
pub use semgen::SemSpec;
