//! Canonical test curves shared by the test suites and the CLI's fixture
//! regeneration command.

use nalgebra::DVector;

use crate::curve::SampledCurve;

/// Horizontal lift of a planar circle of the given radius centered at the
/// origin, starting at `(radius, 0, 0)` and running for `turns` full
/// revolutions, parametrized by ambient arclength. The vertical coordinate
/// accumulates the signed swept area, `z' = (x y' - y x') / 2`, so the curve
/// is horizontal for the Heisenberg frame by construction; the constant
/// ambient speed `sqrt(1 + r^2/4)` of the planar-unit-speed lift is divided
/// out to make the parametrization unit speed.
pub fn heisenberg_circle_lift(radius: f64, turns: f64, samples: usize) -> SampledCurve {
    let ambient_speed = (1.0 + radius * radius / 4.0).sqrt();
    let total = turns * std::f64::consts::TAU * radius * ambient_speed;
    SampledCurve::from_fn(0.0, total, samples, |t| {
        let s = t / ambient_speed;
        let theta = s / radius;
        DVector::from_vec(vec![
            radius * theta.cos(),
            radius * theta.sin(),
            radius * s / 2.0,
        ])
    })
    .expect("circle lift parameters")
}

/// The straight horizontal segment along the x-axis, `t -> (t, 0, 0)`; it is
/// the integral curve of the projected `e1` field through the origin.
pub fn heisenberg_x_axis(duration: f64, samples: usize) -> SampledCurve {
    SampledCurve::from_fn(0.0, duration, samples, |t| {
        DVector::from_vec(vec![t, 0.0, 0.0])
    })
    .expect("axis segment parameters")
}
