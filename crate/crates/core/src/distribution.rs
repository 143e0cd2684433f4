//! Rank-k distributions given by spanning frames of vector fields, the
//! orthogonal projection onto them, and the Grassmannian machinery used to
//! quantify how fast the subspace field varies.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{GeoError, Result};
use crate::linalg;

type FrameFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Safety factor applied on top of the sampled Lipschitz ratio; the grid
/// maximum is a lower estimate of the true supremum.
pub const LIPSCHITZ_SAFETY_FACTOR: f64 = 1.2;

/// A distribution of k-planes on a chart, spanned at every point by the
/// columns of `frame(p)` (an n x k matrix).
#[derive(Clone)]
pub struct Distribution {
    name: String,
    dim: usize,
    rank: usize,
    frame: Arc<FrameFn>,
    lipschitz: Option<f64>,
}

impl Distribution {
    pub fn new<F>(name: impl Into<String>, dim: usize, rank: usize, frame: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if rank == 0 || rank > dim {
            return Err(GeoError::InvalidInput(format!(
                "rank {rank} invalid for dimension {dim}"
            )));
        }
        Ok(Distribution {
            name: name.into(),
            dim,
            rank,
            frame: Arc::new(frame),
            lipschitz: None,
        })
    }

    /// Full-rank constant frame: every tangent vector is horizontal.
    pub fn euclidean(n: usize) -> Self {
        let mut d = Distribution::new("euclidean", n, n, move |_p| DMatrix::identity(n, n))
            .expect("identity frame");
        d.name = format!("euclidean:{n}");
        d.lipschitz = Some(0.0);
        d
    }

    /// Constant frame of the first k coordinate directions in R^n.
    pub fn coordinate_plane(k: usize, n: usize) -> Result<Self> {
        let mut d = Distribution::new(format!("plane:{k}-of-{n}"), n, k, move |_p| {
            DMatrix::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 })
        })?;
        d.lipschitz = Some(0.0);
        Ok(d)
    }

    /// Heisenberg horizontal frame on R^3: columns `(1,0,-y/2)` and `(0,1,x/2)`.
    pub fn heisenberg() -> Self {
        Distribution::new("heisenberg", 3, 2, |p: &DVector<f64>| {
            DMatrix::from_column_slice(3, 2, &[1.0, 0.0, -p[1] / 2.0, 0.0, 1.0, p[0] / 2.0])
        })
        .expect("heisenberg frame")
    }

    /// Martinet frame on R^3: columns `(1,0,0)` and `(0,1,x^2)`.
    pub fn martinet() -> Self {
        Distribution::new("martinet", 3, 2, |p: &DVector<f64>| {
            DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, p[0] * p[0]])
        })
        .expect("martinet frame")
    }

    /// Resolves a built-in distribution from its text name:
    /// `euclidean:n`, `plane:k-of-n`, `heisenberg`, `martinet`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "heisenberg" {
            return Ok(Distribution::heisenberg());
        }
        if spec == "martinet" {
            return Ok(Distribution::martinet());
        }
        if let Some(n) = spec.strip_prefix("euclidean:") {
            let n: usize = n
                .parse()
                .map_err(|_| GeoError::InvalidInput(format!("bad dimension in '{spec}'")))?;
            if n == 0 {
                return Err(GeoError::InvalidInput("euclidean:0 is empty".into()));
            }
            return Ok(Distribution::euclidean(n));
        }
        if let Some(rest) = spec.strip_prefix("plane:") {
            let (k, n) = rest.split_once("-of-").ok_or_else(|| {
                GeoError::InvalidInput(format!("expected plane:k-of-n, got '{spec}'"))
            })?;
            let k: usize = k
                .parse()
                .map_err(|_| GeoError::InvalidInput(format!("bad rank in '{spec}'")))?;
            let n: usize = n
                .parse()
                .map_err(|_| GeoError::InvalidInput(format!("bad dimension in '{spec}'")))?;
            return Distribution::coordinate_plane(k, n);
        }
        Err(GeoError::InvalidInput(format!(
            "unknown distribution '{spec}'"
        )))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Raw frame matrix at `p` (columns need not be orthonormal).
    pub fn frame(&self, p: &DVector<f64>) -> DMatrix<f64> {
        (self.frame)(p)
    }

    /// Orthonormal basis of the span at `p`; errors if the frame loses rank.
    pub fn orthonormal_basis(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let frame = self.frame(p);
        let (basis, rank) = linalg::orthonormalize(&frame);
        if rank < self.rank {
            return Err(GeoError::degenerate_frame(p, rank, self.rank));
        }
        Ok(basis)
    }

    /// The Lipschitz constant attached to this distribution, if one has been
    /// supplied or estimated.
    pub fn lipschitz_constant(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn with_lipschitz(mut self, c: f64) -> Self {
        self.lipschitz = Some(c);
        self
    }

    /// Returns the stored Lipschitz constant, estimating it over `dom` on
    /// first use.
    pub fn lipschitz_or_estimate(&self, dom: &Domain) -> Result<f64> {
        match self.lipschitz {
            Some(c) => Ok(c),
            None => estimate_distribution_lipschitz(self, dom),
        }
    }
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Distribution({}, dim={}, rank={})",
            self.name, self.dim, self.rank
        )
    }
}

/// Orthogonal projection of `v` onto the span of the frame at `p`.
///
/// The result is the least-squares-closest horizontal vector: `v - w` is
/// Euclidean-orthogonal to the span, and `|w| <= |v|`.
pub fn project_onto_distribution(
    p: &DVector<f64>,
    v: &DVector<f64>,
    distribution: &Distribution,
) -> Result<DVector<f64>> {
    let basis = distribution.orthonormal_basis(p)?;
    Ok(linalg::project_onto_basis(&basis, v))
}

/// Distance between the column spans of two full-rank frames: the operator
/// norm of the difference of their orthogonal projectors. A pseudometric on
/// frames (zero iff equal spans), bounded by 1.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let origin = DVector::zeros(a.nrows());
    let (qa, rank_a) = linalg::orthonormalize(a);
    if rank_a < a.ncols() {
        return Err(GeoError::degenerate_frame(&origin, rank_a, a.ncols()));
    }
    let (qb, rank_b) = linalg::orthonormalize(b);
    if rank_b < b.ncols() {
        return Err(GeoError::degenerate_frame(&origin, rank_b, b.ncols()));
    }
    let diff = linalg::projector(&qa) - linalg::projector(&qb);
    Ok(linalg::operator_norm(&diff))
}

/// Estimates the Lipschitz constant of `p -> span(frame(p))` as the maximum
/// ratio `subspace_distance / |p - q|` over adjacent grid-point pairs,
/// multiplied by [`LIPSCHITZ_SAFETY_FACTOR`].
pub fn estimate_distribution_lipschitz(
    distribution: &Distribution,
    dom: &Domain,
) -> Result<f64> {
    if dom.dimension() != distribution.dim() {
        return Err(GeoError::InvalidInput(format!(
            "domain dimension {} vs distribution dimension {}",
            dom.dimension(),
            distribution.dim()
        )));
    }
    if dom.grid_resolution().iter().any(|&r| r < 2) {
        return Err(GeoError::InvalidInput(
            "lipschitz estimation needs grid_resolution >= 2 per axis".into(),
        ));
    }

    let indices = dom.grid_indices();
    let points: Vec<DVector<f64>> = indices.iter().map(|idx| dom.grid_point(idx)).collect();
    let bases: Vec<Result<DMatrix<f64>>> = points
        .par_iter()
        .map(|p| distribution.orthonormal_basis(p))
        .collect();

    // Row-major flat index from a multi-index.
    let strides: Vec<usize> = {
        let res = dom.grid_resolution();
        let mut s = vec![1usize; res.len()];
        for i in (0..res.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * res[i + 1];
        }
        s
    };
    let flat = |idx: &[usize]| -> usize { idx.iter().zip(&strides).map(|(i, s)| i * s).sum() };

    let ratio = indices
        .par_iter()
        .enumerate()
        .map(|(i, idx)| {
            let mut local_max = 0.0f64;
            for axis in 0..idx.len() {
                if idx[axis] + 1 >= dom.grid_resolution()[axis] {
                    continue;
                }
                let mut nb = idx.clone();
                nb[axis] += 1;
                let j = flat(&nb);
                let (pa, pb) = (&points[i], &points[j]);
                let (qa, qb) = match (&bases[i], &bases[j]) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(_), _) | (_, Err(_)) => {
                        // Surfaced below through the sequential pass.
                        continue;
                    }
                };
                let diff = linalg::projector(qa) - linalg::projector(qb);
                let dist = linalg::operator_norm(&diff);
                let gap = (pa - pb).norm();
                if gap > 0.0 {
                    local_max = local_max.max(dist / gap);
                }
            }
            local_max
        })
        .reduce(|| 0.0, f64::max);

    // Propagate the first frame degeneracy, if any.
    for b in bases {
        b?;
    }

    Ok(ratio * LIPSCHITZ_SAFETY_FACTOR)
}
