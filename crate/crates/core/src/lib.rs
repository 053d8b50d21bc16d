//! Welfare analysis for binary treatment assignment under endogenous selection.
//!
//! The social welfare of a treatment policy `G` (a set of covariate cells whose
//! members get treated) can be written as
//!
//! ```text
//! W(G) = E[Y0] + E[ 1{Z in G} * ∫₀¹ MTE(u, X) du ]
//! ```
//!
//! where `MTE(u, x) = E[Y1 - Y0 | U = u, X = x]` is the marginal treatment
//! effect and `U` is the normalized selection latent of the threshold-crossing
//! model `D = 1{ν(Z) - U ≥ 0}`, `U | Z ~ Uniform(0, 1)`. The integrated MTE is
//! therefore the operator kernel of the welfare functional, and policy search
//! reduces to score-weighted set selection over a structured class.
//!
//! The crate provides, in dependency order:
//!
//! - [`dgp`]: synthetic data from the threshold-crossing selection model with
//!   controllable endogeneity, plus the selection-latent normalization and
//!   closed-form population moments that every oracle test leans on;
//! - [`propensity`]: linear-in-basis least-squares propensity estimation;
//! - [`estimator`]: the parametric MTE regression — design vector
//!   `((1-ν̂)X', ν̂X', ν̂², …, ν̂ᴷ)`, OLS for θ, the MTE and integrated-kernel
//!   formulas, and runnable regularity diagnostics;
//! - [`policy`]: candidate policy classes (power set, threshold, interval,
//!   linear score) with exact argmax solvers;
//! - [`welfare`]: welfare evaluated by definition, by the kernel
//!   representation, and empirically; regret against the oracle action;
//! - [`rules`]: plug-in, Bayes, and empirical-welfare-maximization decision
//!   rules;
//! - [`harness`]: a deterministic parallel Monte Carlo engine that estimates
//!   worst-case regret over a family of data-generating processes and fits the
//!   log-log convergence rate.
//!
//! Everything is deterministic given explicit seeds: replication RNG streams
//! are derived by [`seed::derive_seed`], and all floating-point reductions are
//! fixed-order (see [`linalg::pairwise_sum`]), so results are bit-identical
//! across thread counts.

pub mod dgp;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod policy;
pub mod propensity;
pub mod quad;
pub mod rules;
pub mod seed;
pub mod welfare;

pub use dgp::{Dataset, DgpSpec, LatentSelectionSpec, Observation};
pub use error::{Error, Result};
pub use estimator::{DesignRow, ThetaEstimate};
pub use harness::{ExperimentConfig, RegretCurve};
pub use policy::{DecisionSet, PolicyClass};
pub use propensity::PropensityModel;
pub use rules::{CellDistribution, PosteriorSpec};
pub use welfare::WelfareReport;
