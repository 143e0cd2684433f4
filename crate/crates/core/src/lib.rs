//! Numerical toolkit for Carnot-Caratheodory (sub-Riemannian) geometry on a
//! single coordinate chart.
//!
//! The crate provides:
//!
//! - chart-level primitives: domains, Finsler norms, rank-k distributions
//!   given by frames, orthogonal projection onto them, and a Grassmannian
//!   distance used to estimate how fast the subspace field varies
//!   ([`distribution`], [`curve`]);
//! - integral curves of projected constant vectors with speed and
//!   quadratic-deviation certificates ([`flow`]);
//! - conversion of Lipschitz almost-everywhere-horizontal curves into
//!   piecewise integral curves with certified endpoint error and length
//!   inflation ([`smoothing`]);
//! - zig-zag curves approximating a prescribed tangent in the span of
//!   generator velocities ([`zigzag`]);
//! - a Carnot-Caratheodory distance estimator bracketing the metric between
//!   a chord lower bound and a trajectory-optimization upper bound, plus
//!   empirical biLipschitz comparison of metric oracles ([`metric`]);
//! - numerical verification of homogeneity hypotheses for diffeomorphism
//!   families: biLipschitz constants, equi-C1 and distortion moduli,
//!   distribution push-forward, and chain transport ([`homogeneity`]).

pub mod curve;
pub mod distribution;
pub mod domain;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod flow;
pub mod homogeneity;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod norm;
pub mod smoothing;
pub mod zigzag;

pub use curve::{curve_length, horizontality_check, HorizontalityReport, SampledCurve};
pub use distribution::{
    estimate_distribution_lipschitz, project_onto_distribution, subspace_distance, Distribution,
};
pub use domain::Domain;
pub use error::{GeoError, Result};
pub use flow::{deviation_certificate, integrate_projected_field, FlowConfig, FlowResult};
pub use norm::FinslerNorm;
