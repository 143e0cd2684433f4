//! Zig-zag curves: piecewise flows alternating among generator directions,
//! whose small-period limit follows the line with tangent `sum_j a_j w_j`.
//! They witness that the set of horizontal velocities at a point is closed
//! under linear combinations.

use nalgebra::DVector;

use crate::curve::SampledCurve;
use crate::distribution::{project_onto_distribution, Distribution};
use crate::error::{GeoError, Result};
use crate::flow::{integrate_projected_field, FlowConfig};

/// Relative tolerance for the check that each generator velocity lies in the
/// distribution at the base point.
const GENERATOR_TOL: f64 = 1e-8;

/// Generators `w_j` at a base point, mixing coefficients `a_j`, the switch
/// period and the total duration.
///
/// Generators with zero coefficient are left out of the switching cycle: with
/// `m` active generators each piece flows the projected field of
/// `m * a_j * w_j` for one period, so every active generator occupies a `1/m`
/// time fraction and the time-average velocity is `sum_j a_j w_j`.
#[derive(Debug, Clone)]
pub struct ZigzagSpec {
    pub base_point: DVector<f64>,
    pub generators: Vec<DVector<f64>>,
    pub coefficients: Vec<f64>,
    pub switch_period: f64,
    pub total_duration: f64,
}

impl ZigzagSpec {
    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(GeoError::InvalidInput("zigzag needs >= 1 generator".into()));
        }
        if self.generators.len() != self.coefficients.len() {
            return Err(GeoError::InvalidInput(format!(
                "{} generators vs {} coefficients",
                self.generators.len(),
                self.coefficients.len()
            )));
        }
        if !(self.switch_period > 0.0) || self.total_duration < self.switch_period {
            return Err(GeoError::InvalidInput(format!(
                "need 0 < switch_period <= total_duration, got {} and {}",
                self.switch_period, self.total_duration
            )));
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(GeoError::InvalidInput("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// The mixed tangent `sum_j a_j w_j`.
    pub fn mixed_velocity(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.base_point.len());
        for (a, w) in self.coefficients.iter().zip(&self.generators) {
            v += w * *a;
        }
        v
    }

    fn with_period(&self, eps: f64) -> ZigzagSpec {
        ZigzagSpec {
            switch_period: eps,
            ..self.clone()
        }
    }
}

/// Builds the zig-zag curve: every `switch_period` the flow re-bases at the
/// current point and switches to the next active generator.
pub fn zigzag_curve(
    spec: &ZigzagSpec,
    distribution: &Distribution,
    flow: &FlowConfig,
) -> Result<SampledCurve> {
    spec.validate()?;
    // Reject generators that stick out of the distribution at the base point.
    for (j, w) in spec.generators.iter().enumerate() {
        let proj = project_onto_distribution(&spec.base_point, w, distribution)?;
        let residual = (w - proj).norm();
        if residual > GENERATOR_TOL * w.norm().max(1.0) {
            return Err(GeoError::GeneratorNotHorizontal { index: j, residual });
        }
    }

    let active: Vec<usize> = spec
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(j, _)| j)
        .collect();

    let eps = spec.switch_period;
    let total = spec.total_duration;
    let n_windows = ((total - 1e-12) / eps).ceil().max(1.0) as usize;

    let mut curve = SampledCurve::new(vec![0.0], vec![spec.base_point.clone()])?;
    let mut per_segment = Vec::new();
    for n in 0..n_windows {
        let w_start = eps * n as f64;
        let width = (w_start + eps).min(total) - w_start;
        if width <= 1e-15 {
            break;
        }
        let start = curve.end().clone();
        let zero = DVector::zeros(spec.base_point.len());
        let (piece, v) = if active.is_empty() {
            (
                SampledCurve::new(vec![0.0, width], vec![start.clone(), start.clone()])?,
                zero,
            )
        } else {
            let j = active[n % active.len()];
            let v = &spec.generators[j] * (active.len() as f64 * spec.coefficients[j]);
            if v.norm() * width < 1e-15 {
                (
                    SampledCurve::new(vec![0.0, width], vec![start.clone(), start.clone()])?,
                    v,
                )
            } else {
                (
                    integrate_projected_field(&start, &v, width, distribution, flow)?.curve,
                    v,
                )
            }
        };
        for _ in 1..piece.len() {
            per_segment.push(v.clone());
        }
        curve.append(&piece.shifted_in_time(w_start))?;
    }
    curve.with_segment_vectors(per_segment)
}

/// Deviation of one zig-zag run from the line `base + t v`, measured on a
/// uniform grid of `grid` sample times.
fn line_deviation(curve: &SampledCurve, base: &DVector<f64>, v: &DVector<f64>, grid: usize) -> f64 {
    let total = curve.duration();
    (0..=grid)
        .map(|i| {
            let t = total * i as f64 / grid as f64;
            (curve.point_at(t) - (base + v * t)).norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct ZigzagConvergenceReport {
    /// Pairs `(switch_period, sup deviation from the mixed-velocity line)`.
    pub deviations: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Runs the zig-zag at every period in `eps_list` (which must be decreasing)
/// and reports the sup-deviation from the line `t -> base + t sum_j a_j w_j`
/// on a common sample grid. Passes when the deviations are non-increasing and
/// the last is at most half the first.
pub fn tangent_convergence_check(
    spec: &ZigzagSpec,
    distribution: &Distribution,
    eps_list: &[f64],
    flow: &FlowConfig,
) -> Result<ZigzagConvergenceReport> {
    if eps_list.is_empty() {
        return Err(GeoError::InvalidInput("empty eps list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GeoError::InvalidInput(
            "eps list must be strictly decreasing".into(),
        ));
    }
    let v = spec.mixed_velocity();
    let mut deviations = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let curve = zigzag_curve(&spec.with_period(eps), distribution, flow)?;
        deviations.push((eps, line_deviation(&curve, &spec.base_point, &v, 512)));
    }
    let non_increasing = deviations.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    let halved = deviations.last().unwrap().1 <= 0.5 * deviations[0].1 + 1e-12;
    Ok(ZigzagConvergenceReport {
        deviations,
        pass: non_increasing && halved,
    })
}
