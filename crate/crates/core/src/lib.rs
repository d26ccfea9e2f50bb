//! Exact diagnostics for horizon-reduced learning on tabular finite-horizon
//! MDPs.
//!
//! The engine decides, by exhaustive enumeration over deterministic policies
//! and exact arithmetic, whether the statistics of fixed-length trajectory
//! windows still identify the full-horizon value of a policy. All modules are
//! generic over [`Scalar`]; the aliases below fix the exact rational type that
//! verdicts should be computed with.

pub mod cli;
pub mod counterexamples;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod observation;
pub mod offline;
pub mod policy;
pub mod scalar;
pub mod sufficiency;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Arbitrary-precision rational; the default scalar.
pub type Rational = num_rational::BigRational;

pub type Mdp = mdp::TabularMdp<Rational>;
pub type ExactPolicy = policy::Policy<Rational>;
pub type ExactSegmentDistribution = observation::SegmentDistribution<Rational>;
pub type ExactVerdict = sufficiency::SufficiencyVerdict<Rational>;
pub type ExactOrderingReport = sufficiency::OrderingReport<Rational>;
pub type ExactDataset = offline::OfflineDataset<Rational>;

/// Fixed-width rational, for callers that know their denominators stay small.
pub type Rational64Mdp = mdp::TabularMdp<num_rational::Rational64>;

/// Floating-point variant. Equality tests become approximate; useful for
/// quick exploration only.
pub type FloatMdp = mdp::TabularMdp<f64>;
