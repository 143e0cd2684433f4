//! Conversion of Lipschitz almost-everywhere-horizontal curves into piecewise
//! integral curves with a certified endpoint error and length inflation.
//!
//! The construction walks the input in windows of width `epsilon`: each window
//! contributes the average input velocity (a chord difference), projects it
//! onto the distribution at the current output point, and flows the projected
//! field for the window duration. Endpoint drift obeys the linear recursion
//! `a_{n+1} = beta a_n + alpha` with `alpha = 2 C eps^2`, `beta = 1 + eps C`,
//! whose closed form is [`recursion_bound`]; the certificate records both the
//! prediction and the observed drift.

use nalgebra::DVector;

use crate::curve::{curve_length, horizontality_check, SampledCurve};
use crate::distribution::{project_onto_distribution, Distribution};
use crate::error::{GeoError, Result};
use crate::flow::{integrate_projected_field, FlowConfig};
use crate::norm::FinslerNorm;

/// Tolerated deviation from unit speed before the input is re-parametrized
/// by arclength.
pub const SPEED_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SmoothingConfig {
    /// Window width.
    pub epsilon: f64,
    /// Sub-integration settings for each projected-field piece.
    pub flow: FlowConfig,
    /// Gate tolerance for the input horizontality validation.
    pub horizontality_tol: f64,
}

impl SmoothingConfig {
    pub fn new(epsilon: f64) -> Self {
        SmoothingConfig {
            epsilon,
            flow: FlowConfig::default(),
            horizontality_tol: 1e-3,
        }
    }
}

/// Per-run record of what the smoothing pass did and how well it tracked.
#[derive(Debug, Clone)]
pub struct SmoothingCertificate {
    pub epsilon: f64,
    /// The projected window vectors, one per piece.
    pub selected_vectors: Vec<DVector<f64>>,
    /// `|eta(T) - sigma(T)|`.
    pub endpoint_error: f64,
    pub length_input: f64,
    pub length_output: f64,
    /// `length_output / length_input - 1`.
    pub delta: f64,
    /// Recursion constants and the closed-form drift prediction.
    pub alpha: f64,
    pub beta: f64,
    pub n_windows: usize,
    pub predicted_error_bound: f64,
    /// Observed `max_n |v_n|`.
    pub speed_cap: f64,
    /// Whether `endpoint_error <= 2 * predicted_error_bound` (plus a 1e-9
    /// floor for integrator roundoff when the predicted bound is zero).
    pub error_within_bound: bool,
}

impl SmoothingCertificate {
    pub fn selected_norms(&self) -> Vec<f64> {
        self.selected_vectors.iter().map(|v| v.norm()).collect()
    }
}

/// Closed form of the recursion `a_1 = alpha, a_n = beta a_{n-1} + alpha`:
/// `alpha (1 - beta^n) / (1 - beta)`, extended by continuity to `n alpha`
/// at `beta = 1`.
pub fn recursion_bound(alpha: f64, beta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if beta == 1.0 {
        return alpha * n as f64;
    }
    alpha * (1.0 - beta.powi(n as i32)) / (1.0 - beta)
}

/// Average velocity of `eta` over `[t0, t0 + eps]`: the chord difference
/// divided by the window width. By the fundamental theorem of calculus this
/// equals the integral average of the velocity.
pub fn window_velocity(eta: &SampledCurve, t0: f64, eps: f64) -> Result<DVector<f64>> {
    if !(eps > 0.0) {
        return Err(GeoError::OutOfRange(format!("window width {eps} <= 0")));
    }
    let (lo, hi) = (eta.start_time(), eta.end_time());
    if t0 < lo - 1e-9 || t0 + eps > hi + 1e-9 {
        return Err(GeoError::OutOfRange(format!(
            "window [{t0}, {}] outside curve range [{lo}, {hi}]",
            t0 + eps
        )));
    }
    Ok((eta.point_at(t0 + eps) - eta.point_at(t0)) / eps)
}

/// Best horizontal stand-in for a window average: the orthogonal projection
/// of `avg` onto the distribution at `p`, which minimizes `|avg - v|` over
/// horizontal `v`.
pub fn select_horizontal_vector(
    avg: &DVector<f64>,
    p: &DVector<f64>,
    distribution: &Distribution,
) -> Result<DVector<f64>> {
    project_onto_distribution(p, avg, distribution)
}

/// Runs the window construction on `eta`, producing the piecewise integral
/// curve `sigma` and its certificate.
///
/// The input must pass the horizontality gate at `cfg.horizontality_tol`; if
/// its segment speeds deviate from 1 by more than [`SPEED_TOLERANCE`] it is
/// re-parametrized by arclength first (same polyline, re-timed). If the
/// total duration is not an integer multiple of `epsilon` the final window
/// is shorter; the recursion constants use `N = ceil(T / epsilon)`.
pub fn smooth_horizontal_approximation(
    eta: &SampledCurve,
    distribution: &Distribution,
    cfg: &SmoothingConfig,
) -> Result<(SampledCurve, SmoothingCertificate)> {
    let report = horizontality_check(eta, distribution, cfg.horizontality_tol)?;
    if !report.passed() {
        return Err(GeoError::NotHorizontal {
            max_deviation: report.max_deviation,
            offending: report.offending_segments.len(),
            tol: cfg.horizontality_tol,
        });
    }

    let needs_reparam = eta
        .segments()
        .any(|(dt, a, b)| ((b - a).norm() / dt - 1.0).abs() > SPEED_TOLERANCE);
    let eta = if needs_reparam {
        eta.reparametrized_by_arclength()?
    } else {
        eta.clone()
    };

    let total = eta.duration();
    let eps = cfg.epsilon;
    if !(eps > 0.0) || eps > total + 1e-12 {
        return Err(GeoError::InvalidInput(format!(
            "epsilon {eps} outside (0, {total}]"
        )));
    }
    let lipschitz = match distribution.lipschitz_constant() {
        Some(c) => c,
        None => match &cfg.flow.domain {
            Some(dom) => distribution.lipschitz_or_estimate(dom)?,
            None => {
                return Err(GeoError::InvalidInput(
                    "no Lipschitz constant on the distribution and no domain to estimate it over"
                        .into(),
                ))
            }
        },
    };

    let n_windows = ((total - 1e-12) / eps).ceil().max(1.0) as usize;
    let t_start = eta.start_time();

    let mut sigma = SampledCurve::new(vec![t_start], vec![eta.start().clone()])?;
    let mut selected = Vec::with_capacity(n_windows);
    let mut per_segment = Vec::new();

    for n in 0..n_windows {
        let w_start = t_start + eps * n as f64;
        let w_end = (w_start + eps).min(t_start + total);
        let width = w_end - w_start;
        if width <= 1e-15 {
            break;
        }
        let avg = (eta.point_at(w_end) - eta.point_at(w_start)) / width;
        let current = sigma.end().clone();
        let step = (|| -> Result<SampledCurve> {
            let v_n = select_horizontal_vector(&avg, &current, distribution)?;
            let piece = if v_n.norm() * width < 1e-15 {
                // Stationary window: the projected field vanishes at the
                // basepoint; emit a constant piece.
                SampledCurve::new(vec![0.0, width], vec![current.clone(), current.clone()])?
            } else {
                integrate_projected_field(&current, &v_n, width, distribution, &cfg.flow)?.curve
            };
            selected.push(v_n);
            Ok(piece)
        })();
        match step {
            Ok(piece) => {
                for _ in 1..piece.len() {
                    per_segment.push(selected.last().expect("vector pushed with piece").clone());
                }
                sigma.append(&piece.shifted_in_time(w_start))?;
            }
            Err(e) => {
                return Err(GeoError::SmoothingAborted {
                    window: n,
                    partial: Box::new(sigma),
                    source: Box::new(e),
                })
            }
        }
    }
    // Each dense segment records the window vector that generated it.
    let sigma = sigma.with_segment_vectors(per_segment)?;

    let euclid = FinslerNorm::euclidean();
    let endpoint_error = (eta.end() - sigma.end()).norm();
    let length_input = curve_length(&eta, &euclid)?;
    let length_output = curve_length(&sigma, &euclid)?;
    let delta = if length_input > 0.0 {
        length_output / length_input - 1.0
    } else {
        0.0
    };
    let alpha = 2.0 * lipschitz * eps * eps;
    let beta = 1.0 + eps * lipschitz;
    let predicted_error_bound = recursion_bound(alpha, beta, n_windows);
    let speed_cap = selected.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let cert = SmoothingCertificate {
        epsilon: eps,
        endpoint_error,
        length_input,
        length_output,
        delta,
        alpha,
        beta,
        n_windows,
        predicted_error_bound,
        speed_cap,
        error_within_bound: endpoint_error <= 2.0 * predicted_error_bound + 1e-9,
        selected_vectors: selected,
    };
    Ok((sigma, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn recursion_bound_trivial_cases() {
        assert_eq!(recursion_bound(0.0, 1.7, 25), 0.0);
        assert_eq!(recursion_bound(0.5, 1.0, 4), 2.0);
        // alpha=0.01, beta=1.1, n=10: geometric sum.
        let direct = {
            let mut a = 0.01;
            for _ in 1..10 {
                a = 1.1 * a + 0.01;
            }
            a
        };
        assert!((recursion_bound(0.01, 1.1, 10) - direct).abs() < 1e-12);
        assert!((recursion_bound(0.01, 1.1, 10) - 0.1593742460).abs() < 1e-9);
    }

    #[test]
    fn window_velocity_of_straight_line_is_its_velocity() {
        let c = SampledCurve::from_fn(0.0, 2.0, 41, |t| v2(0.6 * t, 0.8 * t)).unwrap();
        let w = window_velocity(&c, 0.25, 0.5).unwrap();
        assert!((w - v2(0.6, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn window_velocity_of_closed_loop_is_zero() {
        let c = SampledCurve::from_fn(0.0, std::f64::consts::TAU, 257, |t| {
            v2(t.cos(), t.sin())
        })
        .unwrap();
        let w = window_velocity(&c, 0.0, std::f64::consts::TAU).unwrap();
        assert!(w.norm() < 1e-12);
    }

    #[test]
    fn window_velocity_outside_range_errors() {
        let c = SampledCurve::from_fn(0.0, 1.0, 11, |t| v2(t, 0.0)).unwrap();
        assert!(window_velocity(&c, 0.8, 0.5).is_err());
    }

    #[test]
    fn window_velocity_on_circle_lift_fixture_matches_chord() {
        let eta = fixtures::heisenberg_circle_lift(0.5, 1.0, 2001);
        let (t0, eps) = (0.2, 0.1);
        let w = window_velocity(&eta, t0, eps).unwrap();
        let chord = (eta.point_at(t0 + eps) - eta.point_at(t0)) / eps;
        assert!((w - chord).norm() < 1e-14);
    }

    #[test]
    fn select_horizontal_vector_matches_normal_equations_oracle() {
        // Cramer's-rule oracle at p=(1,2,3), avg=(1,1,1): coefficients
        // (1/3, 4/3) on the frame columns, giving (1/3, 4/3, 1/3).
        let d = Distribution::heisenberg();
        let p = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let avg = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let v = select_horizontal_vector(&avg, &p, &d).unwrap();
        let expected = DVector::from_vec(vec![0.3333333333, 1.3333333333, 0.3333333333]);
        assert!((&v - expected).norm() < 1e-9);
        // Horizontal inputs are fixed, orthogonal inputs are annihilated.
        let in_span = d.frame(&p) * DVector::from_vec(vec![0.4, -0.2]);
        let fixed = select_horizontal_vector(&in_span, &p, &d).unwrap();
        assert!((&fixed - &in_span).norm() < 1e-12);
        let normal = DVector::from_vec(vec![2.0 / 2.0, -1.0 / 2.0, 1.0]);
        let killed = select_horizontal_vector(&normal, &p, &d).unwrap();
        assert!(killed.norm() < 1e-12);
    }

    #[test]
    fn euclidean_straight_segment_smooths_to_itself() {
        let d = Distribution::euclidean(2).with_lipschitz(0.0);
        let eta = SampledCurve::from_fn(0.0, 1.0, 101, |t| v2(0.8 * t, 0.6 * t)).unwrap();
        let cfg = SmoothingConfig::new(0.1);
        let (sigma, cert) = smooth_horizontal_approximation(&eta, &d, &cfg).unwrap();
        assert!(cert.endpoint_error <= 1e-8, "err {}", cert.endpoint_error);
        assert!(cert.delta.abs() <= 1e-8);
        assert!((sigma.end() - eta.end()).norm() <= 1e-8);
        assert_eq!(cert.n_windows, 10);
        assert!(cert.error_within_bound);
        // Each dense segment carries the window vector that generated it.
        let vectors = sigma.segment_vectors().unwrap();
        assert_eq!(vectors.len(), sigma.len() - 1);
        assert!((&vectors[0] - v2(0.8, 0.6)).norm() < 1e-9);
    }

    #[test]
    fn non_horizontal_input_is_rejected_with_report() {
        let d = Distribution::heisenberg().with_lipschitz(0.6);
        let eta = SampledCurve::new(
            vec![0.0, 1.0],
            vec![
                DVector::from_vec(vec![0.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let err =
            smooth_horizontal_approximation(&eta, &d, &SmoothingConfig::new(0.1)).unwrap_err();
        match err {
            GeoError::NotHorizontal { max_deviation, .. } => {
                assert!((max_deviation - 1.0).abs() < 1e-9)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn smoothing_rederives_a_projected_flow() {
        // eta is itself an integral curve of the projected e1 field; the
        // smoothing windows re-select (approximately) the same vectors.
        let d = Distribution::heisenberg().with_lipschitz(0.6);
        let cfg_flow = FlowConfig::new(1e-3, 10.0).unwrap();
        let eta = integrate_projected_field(
            &DVector::from_vec(vec![0.0, 0.0, 0.0]),
            &DVector::from_vec(vec![1.0, 0.0, 0.0]),
            1.0,
            &d,
            &cfg_flow,
        )
        .unwrap()
        .curve;
        let mut cfg = SmoothingConfig::new(1e-2);
        cfg.horizontality_tol = 1e-5;
        let (_, cert) = smooth_horizontal_approximation(&eta, &d, &cfg).unwrap();
        assert!(cert.endpoint_error <= 1e-6, "err {}", cert.endpoint_error);
    }

    #[test]
    fn circle_lift_endpoint_error_decays_with_epsilon() {
        let d = Distribution::heisenberg().with_lipschitz(0.6);
        let eta = fixtures::heisenberg_circle_lift(0.5, 1.0, 4001);
        let mut errors = Vec::new();
        for eps in [0.08, 0.04, 0.02, 0.01] {
            let mut cfg = SmoothingConfig::new(eps);
            cfg.horizontality_tol = 1e-4;
            let (sigma, cert) = smooth_horizontal_approximation(&eta, &d, &cfg).unwrap();
            // Output is horizontal and satisfies the segment-wise length chain.
            let hrep = horizontality_check(&sigma, &d, 1e-6).unwrap();
            assert!(hrep.max_deviation <= 1e-6);
            let inflation = 1.0 + (cert.speed_cap - 1.0).max(0.0) + 1e-6;
            assert!(cert.length_output <= inflation * cert.length_input);
            assert!(cert.error_within_bound, "eps={eps}: {cert:?}");
            errors.push(cert.endpoint_error);
        }
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "not monotone: {errors:?}");
        }
        assert!(errors[3] <= 0.7 * errors[1], "halving failed: {errors:?}");
    }
}
