//! Error types shared across the toolkit.

use nalgebra::DVector;
use thiserror::Error;

/// Errors produced by chart-level geometry and the solvers built on it.
#[derive(Debug, Error)]
pub enum GeoError {
    /// A frame matrix lost rank, either at a single point or along a
    /// trajectory (`time` carries the flow time in the latter case).
    #[error(
        "degenerate frame at {point:?}{}: numerical rank {rank} < expected {expected}",
        time.map(|t| format!(" (flow time {t})")).unwrap_or_default()
    )]
    DegenerateFrame {
        point: Vec<f64>,
        rank: usize,
        expected: usize,
        time: Option<f64>,
    },

    /// A curve does not satisfy the structural requirements of an operation.
    #[error("malformed curve: {0}")]
    MalformedCurve(String),

    /// A time window or point falls outside the valid range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// An input curve failed the horizontality validation gate.
    #[error(
        "curve is not horizontal within tolerance {tol}: max deviation {max_deviation} \
         on {offending} segment(s)"
    )]
    NotHorizontal {
        max_deviation: f64,
        offending: usize,
        tol: f64,
    },

    /// The endpoint-matching solver exhausted its budget with a residual gap.
    #[error(
        "endpoint unreachable within budget: best gap {best_gap} exceeds tolerance {tol} \
         (best upper value {best_value})"
    )]
    UnreachableWithinBudget {
        best_gap: f64,
        best_value: f64,
        tol: f64,
    },

    /// A zigzag generator velocity does not lie in the distribution at the base point.
    #[error("generator {index} is not in the distribution at the base point: residual {residual}")]
    GeneratorNotHorizontal { index: usize, residual: f64 },

    /// Chain transport stopped advancing before leaving the target ball.
    #[error("chain transport stagnated at step {step}: endpoint norm {endpoint_norm}")]
    ChainStagnation { step: usize, endpoint_norm: f64 },

    /// Too many sample pairs were unusable for a metric comparison.
    #[error("metric comparison aborted: {skipped} of {total} pairs skipped")]
    TooManySkippedPairs { skipped: usize, total: usize },

    /// A metric oracle failed to evaluate.
    #[error("metric oracle '{name}' failed: {reason}")]
    OracleFailure { name: String, reason: String },

    /// Smoothing failed mid-run; the pieces built so far are attached.
    #[error("smoothing aborted at window {window}: {source}")]
    SmoothingAborted {
        window: usize,
        partial: Box<crate::curve::SampledCurve>,
        #[source]
        source: Box<GeoError>,
    },

    /// Scenario or name strings that do not parse.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl GeoError {
    pub(crate) fn degenerate_frame(point: &DVector<f64>, rank: usize, expected: usize) -> Self {
        GeoError::DegenerateFrame {
            point: point.iter().copied().collect(),
            rank,
            expected,
            time: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, GeoError>;
