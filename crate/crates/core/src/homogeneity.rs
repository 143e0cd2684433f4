//! Numerical verification of homogeneity hypotheses for diffeomorphism
//! families: empirical biLipschitz constants, the equi-C1 modulus of the
//! Jacobians, continuity of the base-point Jacobian, the distortion modulus
//! (gap between a map and its first-order model), distribution push-forward,
//! and the chain-transport escape procedure.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distribution::Distribution;
use crate::domain::Domain;
use crate::error::{GeoError, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::metric::MetricOracle;

type MapFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A family `{f_p}` of local diffeomorphisms with `f_p(0) = p`, evaluated as
/// `map(p, x)`. Jacobians are analytic when supplied, otherwise central
/// finite differences at `fd_step` (recorded in reports).
#[derive(Clone)]
pub struct DiffeoFamily {
    name: String,
    dim: usize,
    map: Arc<MapFn>,
    jacobian: Option<Arc<JacFn>>,
    fd_step: f64,
}

impl DiffeoFamily {
    pub fn new<F>(name: impl Into<String>, dim: usize, map: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        DiffeoFamily {
            name: name.into(),
            dim,
            map: Arc::new(map),
            jacobian: None,
            fd_step: 1e-5,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `f_p(x)`.
    pub fn map(&self, p: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        (self.map)(p, x)
    }

    /// `(df_p)_x`, analytic or by central differences.
    pub fn jacobian(&self, p: &DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            return jac(p, x);
        }
        let h = self.fd_step;
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (self.map(p, &xp) - self.map(p, &xm)) / (2.0 * h);
            m.set_column(j, &col);
        }
        m
    }

    /// Checks `f_p(0) = p` within 1e-9 on the given sample points.
    pub fn validate_base_point(&self, samples: &[DVector<f64>]) -> Result<()> {
        let origin = DVector::zeros(self.dim);
        for p in samples {
            let gap = (self.map(p, &origin) - p).norm();
            if gap > 1e-9 {
                return Err(GeoError::InvalidInput(format!(
                    "family '{}' violates f_p(0)=p at p={:?} (gap {gap})",
                    self.name,
                    p.iter().collect::<Vec<_>>()
                )));
            }
        }
        Ok(())
    }

    /// Plain translations `f_p(x) = x + p`.
    pub fn translations(n: usize) -> Self {
        DiffeoFamily::new(format!("translations:{n}"), n, |p, x| p + x)
            .with_jacobian(move |_p, _x| DMatrix::identity(n, n))
    }

    /// Left translations of the Heisenberg group in chart coordinates:
    /// `p . x = (p1+x1, p2+x2, p3+x3 + (p1 x2 - p2 x1)/2)`.
    pub fn heisenberg_left() -> Self {
        DiffeoFamily::new("heisenberg-left", 3, |p, x| {
            DVector::from_vec(vec![
                p[0] + x[0],
                p[1] + x[1],
                p[2] + x[2] + (p[0] * x[1] - p[1] * x[0]) / 2.0,
            ])
        })
        .with_jacobian(|p, _x| {
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    1.0, 0.0, 0.0, //
                    0.0, 1.0, 0.0, //
                    -p[1] / 2.0,
                    p[0] / 2.0,
                    1.0,
                ],
            )
        })
    }

    /// Linear family `f_p(x) = x + p + eps0 |p| A x` for a fixed matrix `A`.
    pub fn affine(eps0: f64, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(GeoError::InvalidInput(
                "affine family needs a square matrix".into(),
            ));
        }
        let n = a.nrows();
        let a2 = a.clone();
        Ok(
            DiffeoFamily::new(format!("affine:{eps0}"), n, move |p, x| {
                x + p + &a * x * (eps0 * p.norm())
            })
            .with_jacobian(move |p, _x| DMatrix::identity(n, n) + &a2 * (eps0 * p.norm())),
        )
    }

    /// Family given by one polynomial expression per output coordinate, in
    /// the variables `x1..xn` and `p1..pn`. Jacobians fall back to central
    /// differences.
    pub fn from_expressions(name: impl Into<String>, exprs: Vec<Expr>) -> Result<Self> {
        if exprs.is_empty() {
            return Err(GeoError::InvalidInput("family needs >= 1 coordinate".into()));
        }
        let dim = exprs.len();
        let exprs = Arc::new(exprs);
        Ok(DiffeoFamily::new(
            name,
            dim,
            move |p: &DVector<f64>, x: &DVector<f64>| {
                DVector::from_fn(dim, |i, _| {
                    exprs[i]
                        .eval(&|var| {
                            let (kind, idx) = var.split_at(1);
                            let idx: usize = idx.parse().ok()?;
                            if idx == 0 || idx > dim {
                                return None;
                            }
                            match kind {
                                "x" => Some(x[idx - 1]),
                                "p" => Some(p[idx - 1]),
                                _ => None,
                            }
                        })
                        .unwrap_or(f64::NAN)
                })
            },
        ))
    }

    /// Resolves built-in family names: `translations:n`, `heisenberg-left`,
    /// `affine:<eps0>:<a11,a12;a21,a22;...>`, and
    /// `expr:<e1>|<e2>|...` with one polynomial per coordinate.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "heisenberg-left" {
            return Ok(DiffeoFamily::heisenberg_left());
        }
        if let Some(n) = spec.strip_prefix("translations:") {
            let n: usize = n
                .parse()
                .map_err(|_| GeoError::InvalidInput(format!("bad dimension in '{spec}'")))?;
            if n == 0 {
                return Err(GeoError::InvalidInput("translations:0 is empty".into()));
            }
            return Ok(DiffeoFamily::translations(n));
        }
        if let Some(rest) = spec.strip_prefix("affine:") {
            let (eps0, rows) = rest.split_once(':').ok_or_else(|| {
                GeoError::InvalidInput(format!("expected affine:<eps0>:<matrix>, got '{spec}'"))
            })?;
            let eps0: f64 = eps0
                .parse()
                .map_err(|_| GeoError::InvalidInput(format!("bad eps0 in '{spec}'")))?;
            let rows: Vec<Vec<f64>> = rows
                .split(';')
                .map(|row| {
                    row.split(',')
                        .map(|v| {
                            v.trim().parse::<f64>().map_err(|_| {
                                GeoError::InvalidInput(format!("bad matrix entry '{v}'"))
                            })
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(GeoError::InvalidInput("matrix must be square".into()));
            }
            let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            return DiffeoFamily::affine(eps0, a);
        }
        if let Some(rest) = spec.strip_prefix("expr:") {
            let exprs: Vec<Expr> = rest
                .split('|')
                .map(|e| Expr::parse(e.trim()))
                .collect::<Result<_>>()?;
            return DiffeoFamily::from_expressions(format!("expr:{rest}"), exprs);
        }
        Err(GeoError::InvalidInput(format!("unknown family '{spec}'")))
    }
}

impl fmt::Debug for DiffeoFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiffeoFamily({}, dim={})", self.name, self.dim)
    }
}

/// Sampling sizes, seeds and pass thresholds for the hypothesis checks.
#[derive(Debug, Clone)]
pub struct SamplingConfig {
    /// Number of sampled family parameters p.
    pub base_points: usize,
    /// Number of (x, y) pairs per parameter.
    pub pairs: usize,
    /// Radii for the distortion envelope, ascending.
    pub radii: Vec<f64>,
    /// Directions sampled per radius.
    pub directions: usize,
    pub seed: u64,
    pub thresholds: Thresholds,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            base_points: 24,
            pairs: 24,
            radii: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            directions: 16,
            seed: 0,
            thresholds: Thresholds::default(),
        }
    }
}

/// User-declared pass thresholds; `None` leaves a judgment out.
#[derive(Debug, Clone, Default)]
pub struct Thresholds {
    /// Upper bound on the empirical biLipschitz constant.
    pub k_max: Option<f64>,
    /// Upper bound on `|(df_0)_0 - (df_p)_0|` at the smallest sampled `|p|`.
    pub df0_gap_max: Option<f64>,
    /// Upper bound on `omega(t)/t` at the smallest sampled radius.
    pub omega_ratio_max: Option<f64>,
}

/// Everything the hypothesis check measured, with judgments against the
/// declared thresholds.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    /// Max two-sided expansion over sampled pairs, for the supplied metric
    /// and the Euclidean one together.
    pub k_emp: f64,
    /// Pairs `(|x - y|, |(df_p)_x - (df_p)_y|)`.
    pub eta_samples: Vec<(f64, f64)>,
    /// Pairs `(|p|, |(df_0)_0 - (df_p)_0|)`.
    pub df0_continuity: Vec<(f64, f64)>,
    /// Pairs `(|y|, |(df_p)_0(y) + f_p(0) - f_p(y)|)`.
    pub omega_samples: Vec<(f64, f64)>,
    /// Samples dropped because a mapped point left the domain or an oracle
    /// failed.
    pub skipped: usize,
    /// Finite-difference step used when no analytic Jacobian exists.
    pub jacobian_step: Option<f64>,
    pub judgments: Vec<Judgment>,
}

#[derive(Debug, Clone)]
pub struct Judgment {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.judgments.iter().all(|j| j.pass)
    }
}

/// Samples the family over the domain and records the empirical biLipschitz
/// constant, the equi-C1 modulus samples, the continuity gap of the
/// base-point Jacobian and the distortion modulus samples.
pub fn check_family_hypotheses(
    family: &DiffeoFamily,
    metric: &MetricOracle,
    dom: &Domain,
    cfg: &SamplingConfig,
) -> Result<HypothesisReport> {
    if dom.dimension() != family.dim() {
        return Err(GeoError::InvalidInput(format!(
            "domain dimension {} vs family dimension {}",
            dom.dimension(),
            family.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = DVector::zeros(family.dim());

    let base_points: Vec<DVector<f64>> = (0..cfg.base_points)
        .map(|_| dom.sample_uniform(&mut rng))
        .collect();
    family.validate_base_point(&base_points)?;

    let mut k_emp: f64 = 1.0;
    let mut eta_samples = Vec::new();
    let mut df0_continuity = Vec::new();
    let mut omega_samples = Vec::new();
    let mut skipped = 0usize;

    let jac0_at_0 = family.jacobian(&origin, &origin);

    for p in &base_points {
        // Continuity of the base-point Jacobian.
        let jac_p = family.jacobian(p, &origin);
        df0_continuity.push((p.norm(), linalg::operator_norm(&(&jac0_at_0 - &jac_p))));

        for _ in 0..cfg.pairs {
            let x = dom.sample_uniform(&mut rng);
            let y = dom.sample_uniform(&mut rng);
            let gap = (&x - &y).norm();
            if gap < 1e-9 {
                continue;
            }
            let fx = family.map(p, &x);
            let fy = family.map(p, &y);
            if !dom.contains(&fx) || !dom.contains(&fy) {
                skipped += 1;
                continue;
            }
            let (dxy, dfxy) = match (metric.eval(&x, &y), metric.eval(&fx, &fy)) {
                (Ok(a), Ok(b)) if a > 1e-12 && b > 1e-12 => (a, b),
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            let eugap = (&fx - &fy).norm();
            k_emp = k_emp
                .max(dfxy / dxy)
                .max(dxy / dfxy)
                .max(eugap / gap)
                .max(gap / eugap);

            let jx = family.jacobian(p, &x);
            let jy = family.jacobian(p, &y);
            eta_samples.push((gap, linalg::operator_norm(&(jx - jy))));
        }

        // Distortion modulus samples around the base point.
        let jac_p0 = family.jacobian(p, &origin);
        let fp0 = family.map(p, &origin);
        for &r in &cfg.radii {
            for _ in 0..cfg.directions {
                let mut dir =
                    DVector::from_fn(family.dim(), |_, _| rng.random_range(-1.0..1.0f64));
                if dir.norm() < 1e-12 {
                    continue;
                }
                dir *= r / dir.norm();
                let deviation = (&jac_p0 * &dir + &fp0 - family.map(p, &dir)).norm();
                omega_samples.push((r, deviation));
            }
        }
    }

    let mut judgments = Vec::new();
    if let Some(k_max) = cfg.thresholds.k_max {
        judgments.push(Judgment {
            name: "k_emp".into(),
            observed: k_emp,
            threshold: k_max,
            pass: k_emp <= k_max,
        });
    }
    if let Some(gap_max) = cfg.thresholds.df0_gap_max {
        let smallest = df0_continuity
            .iter()
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if let Some(&(_, gap)) = smallest {
            judgments.push(Judgment {
                name: "df0_gap".into(),
                observed: gap,
                threshold: gap_max,
                pass: gap <= gap_max,
            });
        }
    }
    if let Some(ratio_max) = cfg.thresholds.omega_ratio_max {
        if let Some(&r0) = cfg.radii.first() {
            let worst = omega_samples
                .iter()
                .filter(|(r, _)| *r == r0)
                .map(|(r, d)| d / r)
                .fold(0.0f64, f64::max);
            judgments.push(Judgment {
                name: "omega_ratio".into(),
                observed: worst,
                threshold: ratio_max,
                pass: worst <= ratio_max,
            });
        }
    }

    Ok(HypothesisReport {
        k_emp,
        eta_samples,
        df0_continuity,
        omega_samples,
        skipped,
        jacobian_step: (!family.has_analytic_jacobian()).then_some(family.fd_step()),
        judgments,
    })
}

/// The distortion envelope: max deviation from the first-order model per
/// radius, made non-decreasing by cumulative max.
#[derive(Debug, Clone)]
pub struct OmegaEnvelope {
    /// Pairs `(radius, max deviation over parameters and directions)`.
    pub envelope: Vec<(f64, f64)>,
    /// Whether `envelope(t)/t` decreases over the three smallest radii
    /// (advisory for merely sampled families).
    pub ratio_decreasing: bool,
}

pub fn distortion_modulus(
    family: &DiffeoFamily,
    dom: &Domain,
    cfg: &SamplingConfig,
) -> Result<OmegaEnvelope> {
    let report = check_family_hypotheses(family, &MetricOracle::euclidean(), dom, cfg)?;
    let mut radii: Vec<f64> = cfg.radii.clone();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut envelope = Vec::with_capacity(radii.len());
    let mut running = 0.0f64;
    for &r in &radii {
        let level = report
            .omega_samples
            .iter()
            .filter(|(rr, _)| *rr <= r)
            .map(|(_, d)| *d)
            .fold(0.0f64, f64::max);
        running = running.max(level);
        envelope.push((r, running));
    }
    // "Decreasing toward 0 as t -> 0": in ascending radius order the ratio
    // must be non-decreasing over the three smallest radii.
    let ratios: Vec<f64> = envelope.iter().take(3).map(|(r, d)| d / r).collect();
    let ratio_decreasing = ratios.windows(2).all(|w| w[1] + 1e-12 >= w[0]);
    Ok(OmegaEnvelope {
        envelope,
        ratio_decreasing,
    })
}

/// Push-forward of a frame at the origin along the family: the distribution
/// spanned at `p` by `(df_p)_0 . delta0`.
pub fn push_forward_distribution(
    family: &DiffeoFamily,
    delta0: &DMatrix<f64>,
) -> Result<Distribution> {
    if delta0.nrows() != family.dim() || delta0.ncols() == 0 {
        return Err(GeoError::InvalidInput(format!(
            "frame at 0 must be {}xk with k >= 1",
            family.dim()
        )));
    }
    let rank = delta0.ncols();
    let origin = DVector::zeros(family.dim());
    let (_, r0) = linalg::orthonormalize(delta0);
    if r0 < rank {
        return Err(GeoError::degenerate_frame(&origin, r0, rank));
    }
    let fam = family.clone();
    let frame0 = delta0.clone();
    let d = Distribution::new(
        format!("pushforward:{}", family.name()),
        family.dim(),
        rank,
        move |p: &DVector<f64>| {
            let origin = DVector::zeros(fam.dim());
            fam.jacobian(p, &origin) * &frame0
        },
    )?;
    // Surface Jacobian rank collapse at the base point eagerly.
    d.orthonormal_basis(&origin)?;
    Ok(d)
}

/// Outcome of the chain-transport escape procedure.
#[derive(Debug, Clone)]
pub struct ChainTransportReport {
    /// Chain endpoints, starting at the origin.
    pub endpoints: Vec<DVector<f64>>,
    /// Number of chain segments when the ball was left.
    pub n_segments: usize,
    /// `k_emp * N_p * d(p, 0)`.
    pub d_length_bound: f64,
    /// `4 k_emp R / |p|`.
    pub segment_budget: f64,
    pub pass: bool,
}

/// Iterates `e <- f_e(p)` from `e = p` until the endpoint leaves the
/// Euclidean ball of radius `radius` (within 1e-9), reporting the segment
/// count and the chained d-length bound. `k_emp` comes from
/// [`check_family_hypotheses`]. Fails with a stagnation error when the
/// endpoint advances by less than `|p| / (4 k_emp)` three times in a row.
pub fn chain_transport(
    family: &DiffeoFamily,
    p: &DVector<f64>,
    radius: f64,
    metric: &MetricOracle,
    k_emp: f64,
) -> Result<ChainTransportReport> {
    if p.norm() == 0.0 {
        return Err(GeoError::InvalidInput("chain transport needs p != 0".into()));
    }
    if !(radius > 0.0) || !(k_emp >= 1.0) {
        return Err(GeoError::InvalidInput(
            "chain transport needs radius > 0 and k_emp >= 1".into(),
        ));
    }
    let origin = DVector::zeros(family.dim());
    let mut endpoints = vec![origin.clone(), p.clone()];
    let mut stagnant = 0usize;
    let min_advance = p.norm() / (4.0 * k_emp);
    let budget = 4.0 * k_emp * radius / p.norm();
    let max_steps = (2.0 * budget).ceil() as usize + 16;

    while endpoints.last().unwrap().norm() < radius - 1e-9 {
        let current = endpoints.last().unwrap().clone();
        let next = family.map(&current, p);
        if next.norm() - current.norm() < min_advance {
            stagnant += 1;
            if stagnant >= 3 {
                return Err(GeoError::ChainStagnation {
                    step: endpoints.len() - 1,
                    endpoint_norm: next.norm(),
                });
            }
        } else {
            stagnant = 0;
        }
        endpoints.push(next);
        if endpoints.len() > max_steps {
            return Err(GeoError::ChainStagnation {
                step: endpoints.len() - 1,
                endpoint_norm: endpoints.last().unwrap().norm(),
            });
        }
    }

    let n_segments = endpoints.len() - 1;
    let d_p = metric.eval(&origin, p)?;
    Ok(ChainTransportReport {
        d_length_bound: k_emp * n_segments as f64 * d_p,
        segment_budget: budget,
        pass: (n_segments as f64) <= budget,
        endpoints,
        n_segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::subspace_distance;

    fn v3(x: f64, y: f64, z: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y, z])
    }

    fn small_cfg(seed: u64) -> SamplingConfig {
        SamplingConfig {
            base_points: 12,
            pairs: 12,
            directions: 8,
            seed,
            ..SamplingConfig::default()
        }
    }

    #[test]
    fn translations_are_exact_isometries() {
        let fam = DiffeoFamily::translations(2);
        let dom = Domain::symmetric(2, 1.0, 4).unwrap();
        let mut cfg = small_cfg(3);
        cfg.thresholds.k_max = Some(1.0 + 1e-9);
        let report =
            check_family_hypotheses(&fam, &MetricOracle::euclidean(), &dom, &cfg).unwrap();
        assert!((report.k_emp - 1.0).abs() < 1e-9);
        assert!(report.eta_samples.iter().all(|(_, e)| *e < 1e-9));
        assert!(report.df0_continuity.iter().all(|(_, g)| *g < 1e-9));
        assert!(report.omega_samples.iter().all(|(_, d)| *d < 1e-9));
        assert!(report.passed());
    }

    #[test]
    fn heisenberg_left_translations_fix_the_base_point() {
        let fam = DiffeoFamily::heisenberg_left();
        fam.validate_base_point(&[v3(0.3, -0.2, 0.7), v3(-1.0, 1.0, 0.0)])
            .unwrap();
        // Group law at a known pair.
        let got = fam.map(&v3(1.0, 2.0, 3.0), &v3(4.0, 5.0, 6.0));
        assert!((got - v3(5.0, 7.0, 9.0 + (5.0 - 8.0) / 2.0)).norm() < 1e-12);
    }

    #[test]
    fn heisenberg_left_maps_are_affine_in_x() {
        // The group-law translation is affine in x, so the equi-C1 and
        // distortion moduli vanish identically while k_emp stays finite.
        let fam = DiffeoFamily::heisenberg_left();
        let dom = Domain::symmetric(3, 1.0, 4).unwrap();
        let report =
            check_family_hypotheses(&fam, &MetricOracle::euclidean(), &dom, &small_cfg(5))
                .unwrap();
        assert!(report.eta_samples.iter().all(|(_, e)| *e < 1e-9));
        assert!(report.omega_samples.iter().all(|(_, d)| *d < 1e-9));
        assert!(report.k_emp > 1.0 && report.k_emp < 2.0, "{}", report.k_emp);
        // df0 continuity gap is |p_xy| / 2 exactly (the Jacobian holds p/2).
        for &(_, gap) in &report.df0_continuity {
            assert!(gap <= 0.5 * 2.0f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn quadratic_family_has_quadratic_distortion() {
        // f_p(x) = x + p + |x|^2 e1: the first-order gap at radius r is r^2.
        let fam = DiffeoFamily::new("quadratic", 2, |p: &DVector<f64>, x: &DVector<f64>| {
            let mut out = p + x;
            out[0] += x.norm_squared();
            out
        });
        let dom = Domain::symmetric(2, 2.0, 4).unwrap();
        let cfg = small_cfg(7);
        let env = distortion_modulus(&fam, &dom, &cfg).unwrap();
        for &(r, d) in &env.envelope {
            assert!((d - r * r).abs() < 1e-6, "r={r}, d={d}");
        }
        assert!(env.ratio_decreasing);
    }

    #[test]
    fn affine_family_distortion_vanishes_and_df0_gap_is_linear() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let fam = DiffeoFamily::affine(0.1, a).unwrap();
        let dom = Domain::symmetric(2, 1.0, 4).unwrap();
        let report =
            check_family_hypotheses(&fam, &MetricOracle::euclidean(), &dom, &small_cfg(9))
                .unwrap();
        assert!(report.omega_samples.iter().all(|(_, d)| *d < 1e-9));
        assert!(report.eta_samples.iter().all(|(_, e)| *e < 1e-9));
        for &(pn, gap) in &report.df0_continuity {
            // |(df_0)_0 - (df_p)_0| = eps0 |p| |A| with |A| = 1.
            assert!((gap - 0.1 * pn).abs() < 1e-9, "{pn} {gap}");
        }
    }

    #[test]
    fn pushforward_of_translations_is_constant() {
        let fam = DiffeoFamily::translations(3);
        let delta0 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let d = push_forward_distribution(&fam, &delta0).unwrap();
        let frame = d.frame(&v3(0.4, -0.7, 0.2));
        assert_eq!(frame, delta0);
    }

    #[test]
    fn pushforward_of_heisenberg_left_is_the_heisenberg_frame() {
        let fam = DiffeoFamily::heisenberg_left();
        let delta0 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pushed = push_forward_distribution(&fam, &delta0).unwrap();
        let built_in = Distribution::heisenberg();
        for p in [v3(0.0, 0.0, 0.0), v3(0.5, -0.25, 0.75), v3(-1.0, 1.0, -1.0)] {
            let gap = subspace_distance(&pushed.frame(&p), &built_in.frame(&p)).unwrap();
            assert!(gap <= 1e-6, "gap {gap} at {p:?}");
        }
    }

    #[test]
    fn pushforward_of_rotation_generator_tilts_the_plane() {
        // A = generator about the y-axis; (df_p)_0 = I + eps0 |p| A sends
        // e1 to (1, 0, -eps0 |p|) and fixes e2.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let eps0 = 0.2;
        let fam = DiffeoFamily::affine(eps0, a).unwrap();
        let delta0 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pushed = push_forward_distribution(&fam, &delta0).unwrap();
        let p = v3(0.6, 0.8, 0.0);
        let c = eps0 * p.norm();
        let expected = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, -c, 0.0, 1.0, 0.0]);
        let gap = subspace_distance(&pushed.frame(&p), &expected).unwrap();
        assert!(gap < 1e-12, "gap {gap}");
    }

    #[test]
    fn expression_family_matches_heisenberg_left() {
        let fam =
            DiffeoFamily::parse("expr: p1 + x1 | p2 + x2 | p3 + x3 + 0.5*(p1*x2 - p2*x1)")
                .unwrap();
        let builtin = DiffeoFamily::heisenberg_left();
        let p = v3(0.3, -0.4, 0.1);
        let x = v3(-0.2, 0.5, 0.6);
        assert!((fam.map(&p, &x) - builtin.map(&p, &x)).norm() < 1e-12);
        // Finite-difference Jacobian agrees with the analytic one.
        let gap = (fam.jacobian(&p, &x) - builtin.jacobian(&p, &x)).norm();
        assert!(gap < 1e-8, "gap {gap}");
    }

    #[test]
    fn chain_transport_on_translations_marches_straight_out() {
        let fam = DiffeoFamily::translations(2);
        let p = DVector::from_vec(vec![0.1, 0.0]);
        let report = chain_transport(&fam, &p, 1.0, &MetricOracle::euclidean(), 1.0).unwrap();
        assert_eq!(report.n_segments, 10);
        assert!(report.pass);
        // Endpoints lie on a straight ray.
        for (i, e) in report.endpoints.iter().enumerate() {
            assert!((e - DVector::from_vec(vec![0.1 * i as f64, 0.0])).norm() < 1e-12);
        }
        assert!((report.d_length_bound - 10.0 * 0.1).abs() < 1e-9);
    }

    #[test]
    fn chain_transport_stagnates_on_contracting_families() {
        // The step shrinks as the endpoint climbs toward |e| = 0.5, so the
        // chain never escapes the unit ball and the guard trips.
        let fam = DiffeoFamily::new("shrink", 2, |p: &DVector<f64>, x: &DVector<f64>| {
            p + x * (1.0 - 2.0 * p.norm()).max(0.0)
        });
        let p = DVector::from_vec(vec![0.1, 0.0]);
        let err = chain_transport(&fam, &p, 1.0, &MetricOracle::euclidean(), 1.0).unwrap_err();
        assert!(matches!(err, GeoError::ChainStagnation { .. }));
    }
}
