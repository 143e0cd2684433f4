//! Integral curves of projected constant vectors.
//!
//! Extending a vector `v` to the field `X(x) = proj_{span(frame(x))}(v)` and
//! flowing it yields horizontal curves with speed at most `|v|` and quadratic
//! deviation from their own tangent line. These curves are the pieces that the
//! smoothing and zigzag constructions are assembled from.

use nalgebra::DVector;

use crate::curve::SampledCurve;
use crate::distribution::{project_onto_distribution, Distribution};
use crate::domain::Domain;
use crate::error::{GeoError, Result};

/// Fixed-step integration settings. The integrator is the classical
/// fourth-order Runge-Kutta scheme; the projected field is only Lipschitz in
/// general, so the formal order is not guaranteed and the certificates are
/// checked empirically.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub step_size: f64,
    pub max_duration: f64,
    /// When set, trajectories are truncated (and flagged) on leaving the box.
    pub domain: Option<Domain>,
}

impl FlowConfig {
    pub fn new(step_size: f64, max_duration: f64) -> Result<Self> {
        if !(step_size > 0.0) || !(max_duration > 0.0) || step_size > max_duration {
            return Err(GeoError::InvalidInput(format!(
                "need 0 < step_size <= max_duration, got {step_size} and {max_duration}"
            )));
        }
        Ok(FlowConfig {
            step_size,
            max_duration,
            domain: None,
        })
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = Some(domain);
        self
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            step_size: 1e-3,
            max_duration: 100.0,
            domain: None,
        }
    }
}

/// A flow trajectory plus the time at which it left the domain, if it did.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub curve: SampledCurve,
    pub domain_exit: Option<f64>,
}

/// One classical RK4 step of an autonomous field.
pub(crate) fn rk4_step<F>(x: &DVector<f64>, h: f64, field: &mut F) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = field(x)?;
    let k2 = field(&(x + &k1 * (h / 2.0)))?;
    let k3 = field(&(x + &k2 * (h / 2.0)))?;
    let k4 = field(&(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates a field from `start` over `[t0, t0 + duration]` with fixed step
/// `h`, recording every step. Stops early (flagging the exit time) if a
/// domain is configured and the trajectory leaves it.
pub(crate) fn integrate_field<F>(
    start: &DVector<f64>,
    t0: f64,
    duration: f64,
    cfg: &FlowConfig,
    mut field: F,
) -> Result<FlowResult>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut times = vec![t0];
    let mut points = vec![start.clone()];
    let mut t = 0.0;
    let mut x = start.clone();
    let mut domain_exit = None;

    while t < duration - 1e-15 {
        let h = cfg.step_size.min(duration - t);
        let next = rk4_step(&x, h, &mut field).map_err(|e| exit_error(e, t0 + t))?;
        t += h;
        if let Some(dom) = &cfg.domain {
            if !dom.contains(&next) {
                domain_exit = Some(t0 + t);
                break;
            }
        }
        x = next;
        times.push(t0 + t);
        points.push(x.clone());
    }

    if points.len() < 2 {
        // Immediate truncation: keep a degenerate two-sample stub so callers
        // can still read the start point.
        times.push(t0 + cfg.step_size.min(duration));
        points.push(points[0].clone());
    }

    Ok(FlowResult {
        curve: SampledCurve::new(times, points)?,
        domain_exit,
    })
}

fn exit_error(e: GeoError, t: f64) -> GeoError {
    match e {
        GeoError::DegenerateFrame {
            point,
            rank,
            expected,
            ..
        } => GeoError::DegenerateFrame {
            point,
            rank,
            expected,
            time: Some(t),
        },
        other => other,
    }
}

/// Flows the projected field `X(x) = proj_{Delta_x}(v)` from `p` for duration
/// `duration`. The result starts at `p`, is horizontal by construction, and
/// has speed at most `|v|`.
pub fn integrate_projected_field(
    p: &DVector<f64>,
    v: &DVector<f64>,
    duration: f64,
    distribution: &Distribution,
    cfg: &FlowConfig,
) -> Result<FlowResult> {
    if !(duration > 0.0) || duration > cfg.max_duration {
        return Err(GeoError::InvalidInput(format!(
            "duration {duration} outside (0, {}]",
            cfg.max_duration
        )));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(GeoError::InvalidInput("non-finite flow vector".into()));
    }
    if let Some(dom) = &cfg.domain {
        if !dom.contains(p) {
            return Err(GeoError::OutOfRange(format!(
                "flow start {:?} outside domain",
                p.iter().collect::<Vec<_>>()
            )));
        }
    }
    let v = v.clone();
    let d = distribution.clone();
    integrate_field(p, 0.0, duration, cfg, move |x| {
        project_onto_distribution(x, &v, &d)
    })
}

/// Empirical certificate for the quadratic-deviation bound of a projected
/// flow: the maximum over samples of `|gamma(t) - p - t.proj(v)| / t^2`,
/// compared against `1.5 C |v|` (slack absorbs the grid estimation of C),
/// plus a tiny absolute term for integrator roundoff.
#[derive(Debug, Clone)]
pub struct DeviationCertificate {
    pub max_ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn deviation_certificate(
    gamma: &SampledCurve,
    p: &DVector<f64>,
    v: &DVector<f64>,
    distribution: &Distribution,
    lipschitz: f64,
) -> Result<DeviationCertificate> {
    let w = project_onto_distribution(p, v, distribution)?;
    let t0 = gamma.start_time();
    let mut max_ratio = 0.0f64;
    for (t, x) in gamma.times().iter().zip(gamma.points()) {
        let dt = t - t0;
        if dt <= 0.0 {
            continue;
        }
        let predicted = p + &w * dt;
        max_ratio = max_ratio.max((x - predicted).norm() / (dt * dt));
    }
    let bound = 1.5 * lipschitz * v.norm() + 1e-9;
    Ok(DeviationCertificate {
        max_ratio,
        bound,
        pass: max_ratio <= bound,
    })
}
