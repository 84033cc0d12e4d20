//! Deciding and diagnosing selective probabilistic influences.
//!
//! A set of random outputs is observed under a finite set of factorial
//! treatments. A diagram of selective influences says which factors each
//! output is allowed to depend on. This crate decides whether the observed
//! distributions are compatible with such a diagram and, when they are not,
//! reports which necessary conditions fail.
//!
//! The exact decision procedure is the linear feasibility test in [`lft`]:
//! the diagram holds iff a single joint distribution over one random variable
//! per factor point reproduces every observed treatment distribution. The
//! necessary-condition tests are:
//!
//! - [`model::check_marginal_selectivity`], complete marginal selectivity;
//! - [`chains::distance_test`], chain inequalities for any p.q.-metric in
//!   [`metrics`];
//! - [`quadtests::cosphericity_test`], a correlation inequality over 2x2
//!   sub-designs;
//! - [`diversity::diversity_test`], simplicial inequalities over polyhedral
//!   sets of triads.
//!
//! [`montecarlo`] estimates how often random marginally selective systems
//! pass the linear feasibility test, [`gaussian`] builds bivariate-normal
//! median-split fixtures, and [`document`] is the JSON exchange format used
//! by the command-line tool.

pub mod chains;
pub mod diversity;
pub mod document;
pub mod exact;
pub mod fixtures;
pub mod gaussian;
pub mod lft;
pub mod metrics;
pub mod model;
pub mod montecarlo;
pub mod par;
pub mod quadtests;
pub mod simplex;

pub use model::{
    canonical_rearrangement, check_marginal_selectivity, marginal, validate_system, Diagram, Factor, FactorPoint,
    JointPmf, SelectiveSystem, Treatment, Variable,
};
pub use par::Execution;
