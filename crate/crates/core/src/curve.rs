//! Time-stamped polylines and the length / horizontality measurements on them.

use nalgebra::DVector;

use crate::distribution::{project_onto_distribution, Distribution};
use crate::error::{GeoError, Result};
use crate::norm::FinslerNorm;

/// A curve represented by strictly increasing time stamps and one chart point
/// per stamp. Optionally carries the per-segment vector that generated each
/// piece (used by the smoothing and zigzag constructions to make their
/// certificates auditable).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    times: Vec<f64>,
    points: Vec<DVector<f64>>,
    segment_vectors: Option<Vec<DVector<f64>>>,
}

impl SampledCurve {
    pub fn new(times: Vec<f64>, points: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(GeoError::MalformedCurve(format!(
                "{} times vs {} points",
                times.len(),
                points.len()
            )));
        }
        if times.is_empty() {
            return Err(GeoError::MalformedCurve("empty sample list".into()));
        }
        let dim = points[0].len();
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(GeoError::MalformedCurve(format!(
                    "times not strictly increasing at t={}",
                    w[1]
                )));
            }
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(GeoError::MalformedCurve("inconsistent point dimensions".into()));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeoError::MalformedCurve("non-finite coordinate".into()));
        }
        Ok(SampledCurve {
            times,
            points,
            segment_vectors: None,
        })
    }

    /// Samples `f` at `n` uniform times over `[t0, t1]`, inclusive.
    pub fn from_fn<F>(t0: f64, t1: f64, n: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        if n < 2 || !(t1 > t0) {
            return Err(GeoError::MalformedCurve(
                "from_fn needs n >= 2 and t1 > t0".into(),
            ));
        }
        let times: Vec<f64> = (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect();
        let points = times.iter().map(|&t| f(t)).collect();
        SampledCurve::new(times, points)
    }

    pub fn with_segment_vectors(mut self, vectors: Vec<DVector<f64>>) -> Result<Self> {
        if vectors.len() + 1 != self.points.len() {
            return Err(GeoError::MalformedCurve(format!(
                "{} segment vectors for {} samples",
                vectors.len(),
                self.points.len()
            )));
        }
        self.segment_vectors = Some(vectors);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn segment_vectors(&self) -> Option<&[DVector<f64>]> {
        self.segment_vectors.as_deref()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        self.points.last().unwrap()
    }

    /// Linear interpolation at time `t`, clamped to the curve's time range.
    pub fn point_at(&self, t: f64) -> DVector<f64> {
        if t <= self.start_time() {
            return self.points[0].clone();
        }
        if t >= self.end_time() {
            return self.end().clone();
        }
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.points[i].clone(),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let s = (t - t0) / (t1 - t0);
        &self.points[i - 1] * (1.0 - s) + &self.points[i] * s
    }

    /// Largest finite-difference speed over the segments.
    pub fn sup_speed(&self) -> f64 {
        self.segments()
            .map(|(dt, a, b)| (b - a).norm() / dt)
            .fold(0.0, f64::max)
    }

    /// Total Euclidean chord length.
    pub fn euclidean_length(&self) -> f64 {
        self.segments().map(|(_, a, b)| (b - a).norm()).sum()
    }

    /// Iterates `(dt, start, end)` over consecutive sample pairs.
    pub fn segments(&self) -> impl Iterator<Item = (f64, &DVector<f64>, &DVector<f64>)> {
        (1..self.len()).map(move |i| {
            (
                self.times[i] - self.times[i - 1],
                &self.points[i - 1],
                &self.points[i],
            )
        })
    }

    /// Re-times the same polyline so that every segment has unit speed, i.e.
    /// the new time of each sample is the cumulative chord length (shifted to
    /// start at 0). Geometry is unchanged; zero-length segments collapse.
    pub fn reparametrized_by_arclength(&self) -> Result<SampledCurve> {
        let mut times = Vec::with_capacity(self.len());
        let mut points = Vec::with_capacity(self.len());
        let mut s = 0.0;
        times.push(0.0);
        points.push(self.points[0].clone());
        for (_, a, b) in self.segments() {
            let ds = (b - a).norm();
            if ds == 0.0 {
                continue;
            }
            s += ds;
            times.push(s);
            points.push(b.clone());
        }
        SampledCurve::new(times, points)
    }

    /// The same polyline with all time stamps shifted by `offset`.
    pub fn shifted_in_time(&self, offset: f64) -> SampledCurve {
        SampledCurve {
            times: self.times.iter().map(|t| t + offset).collect(),
            points: self.points.clone(),
            segment_vectors: self.segment_vectors.clone(),
        }
    }

    /// Concatenates `other` onto the end of `self`. The first sample of
    /// `other` must coincide in time and (approximately) in space. Segment
    /// metadata is dropped; attach it after assembly.
    pub fn append(&mut self, other: &SampledCurve) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if (other.start_time() - self.end_time()).abs() > 1e-9 {
            return Err(GeoError::MalformedCurve(format!(
                "append time mismatch: {} vs {}",
                other.start_time(),
                self.end_time()
            )));
        }
        self.segment_vectors = None;
        for i in 1..other.len() {
            self.times.push(other.times[i]);
            self.points.push(other.points[i].clone());
        }
        Ok(())
    }
}

/// Polyline length of `c` in the given norm, evaluated with midpoint
/// quadrature: each segment contributes `norm(midpoint, delta)`.
pub fn curve_length(c: &SampledCurve, norm: &FinslerNorm) -> Result<f64> {
    if c.len() < 2 {
        return Err(GeoError::MalformedCurve(
            "length needs at least 2 samples".into(),
        ));
    }
    Ok(c.segments()
        .map(|(_, a, b)| norm.eval(&((a + b) * 0.5), &(b - a)))
        .sum())
}

/// Outcome of measuring how far a curve's finite-difference velocities leave
/// the distribution.
#[derive(Debug, Clone)]
pub struct HorizontalityReport {
    /// Max over segments of `|u - proj(u)| / |u|`.
    pub max_deviation: f64,
    /// Indices of segments whose relative deviation exceeded the tolerance.
    pub offending_segments: Vec<usize>,
    /// Number of zero-length segments that were skipped.
    pub skipped_zero_length: usize,
    pub tol: f64,
}

impl HorizontalityReport {
    pub fn passed(&self) -> bool {
        self.offending_segments.is_empty()
    }
}

/// Measures, per segment, the relative distance between the chord velocity
/// and its projection onto the distribution at the segment midpoint.
pub fn horizontality_check(
    c: &SampledCurve,
    distribution: &Distribution,
    tol: f64,
) -> Result<HorizontalityReport> {
    if c.len() < 2 {
        return Err(GeoError::MalformedCurve(
            "horizontality check needs at least 2 samples".into(),
        ));
    }
    let mut max_deviation = 0.0f64;
    let mut offending = Vec::new();
    let mut skipped = 0usize;
    for (i, (dt, a, b)) in c.segments().enumerate() {
        let chord = b - a;
        let chord_norm = chord.norm();
        if chord_norm == 0.0 {
            skipped += 1;
            continue;
        }
        let u = chord / dt;
        let mid = (a + b) * 0.5;
        let w = project_onto_distribution(&mid, &u, distribution)?;
        let deviation = (&u - w).norm() / u.norm();
        if deviation > tol {
            offending.push(i);
        }
        max_deviation = max_deviation.max(deviation);
    }
    Ok(HorizontalityReport {
        max_deviation,
        offending_segments: offending,
        skipped_zero_length: skipped,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Distribution;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn v3(x: f64, y: f64, z: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y, z])
    }

    #[test]
    fn rejects_non_increasing_times() {
        let err = SampledCurve::new(vec![0.0, 0.0], vec![v2(0.0, 0.0), v2(1.0, 0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn straight_polyline_length_is_chord() {
        let c = SampledCurve::new(vec![0.0, 1.0], vec![v2(0.0, 0.0), v2(3.0, 4.0)]).unwrap();
        let len = curve_length(&c, &FinslerNorm::euclidean()).unwrap();
        assert_eq!(len, 5.0);
    }

    #[test]
    fn single_sample_curve_has_no_length() {
        let c = SampledCurve::new(vec![0.0], vec![v2(1.0, 1.0)]).unwrap();
        assert!(curve_length(&c, &FinslerNorm::euclidean()).is_err());
    }

    #[test]
    fn repeated_point_polyline_has_zero_length() {
        let c = SampledCurve::new(vec![0.0, 1.0, 2.0], vec![v2(1.0, 1.0); 3]).unwrap();
        let len = curve_length(&c, &FinslerNorm::euclidean()).unwrap();
        assert_eq!(len, 0.0);
    }

    #[test]
    fn quarter_circle_length_converges_to_arc() {
        // Analytic oracle: quarter unit circle has length pi/2.
        let quarter = |n: usize| {
            let c = SampledCurve::from_fn(0.0, std::f64::consts::FRAC_PI_2, n, |t| {
                v2(t.cos(), t.sin())
            })
            .unwrap();
            curve_length(&c, &FinslerNorm::euclidean()).unwrap()
        };
        assert!((quarter(1000) - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
        // Inscribed polyline length is non-decreasing under refinement.
        let (l10, l100, l1000) = (quarter(10), quarter(100), quarter(1000));
        assert!(l10 <= l100 && l100 <= l1000);
        assert!(l1000 <= std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn interpolation_matches_samples_and_midpoints() {
        let c = SampledCurve::new(
            vec![0.0, 1.0, 3.0],
            vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 2.0)],
        )
        .unwrap();
        assert_eq!(c.point_at(1.0), v2(1.0, 0.0));
        assert_eq!(c.point_at(2.0), v2(1.0, 1.0));
        assert_eq!(c.point_at(-5.0), v2(0.0, 0.0));
        assert_eq!(c.point_at(99.0), v2(1.0, 2.0));
    }

    #[test]
    fn arclength_reparametrization_is_unit_speed() {
        let c = SampledCurve::new(
            vec![0.0, 0.5, 0.6],
            vec![v2(0.0, 0.0), v2(2.0, 0.0), v2(2.0, 1.0)],
        )
        .unwrap();
        let r = c.reparametrized_by_arclength().unwrap();
        assert_eq!(r.duration(), 3.0);
        for (dt, a, b) in r.segments() {
            assert!(((b - a).norm() / dt - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_segment_fully_deviates_in_heisenberg() {
        let d = Distribution::heisenberg();
        let c = SampledCurve::new(vec![0.0, 1.0], vec![v3(0.0, 0.0, 0.0), v3(0.0, 0.0, 1.0)])
            .unwrap();
        let report = horizontality_check(&c, &d, 1e-6).unwrap();
        assert!((report.max_deviation - 1.0).abs() < 1e-12);
        assert_eq!(report.offending_segments, vec![0]);
    }

    #[test]
    fn full_rank_distribution_makes_everything_horizontal() {
        let d = Distribution::euclidean(2);
        let c = SampledCurve::new(
            vec![0.0, 0.3, 1.0],
            vec![v2(0.0, 0.0), v2(0.7, -0.2), v2(-0.3, 0.4)],
        )
        .unwrap();
        let report = horizontality_check(&c, &d, 1e-9).unwrap();
        assert_eq!(report.max_deviation, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn zero_length_segments_are_skipped_with_count() {
        let d = Distribution::euclidean(2);
        let c = SampledCurve::new(
            vec![0.0, 1.0, 2.0],
            vec![v2(0.0, 0.0), v2(0.0, 0.0), v2(1.0, 0.0)],
        )
        .unwrap();
        let report = horizontality_check(&c, &d, 1e-9).unwrap();
        assert_eq!(report.skipped_zero_length, 1);
    }
}
