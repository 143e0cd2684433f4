//! Axis-aligned chart domains.

use nalgebra::DVector;

use crate::error::{GeoError, Result};

/// A compact axis-aligned box in chart coordinates, together with the per-axis
/// sample counts used by grid-based constant estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: DVector<f64>,
    upper: DVector<f64>,
    grid_resolution: Vec<usize>,
}

impl Domain {
    /// Builds a domain from per-axis bounds. The box must have positive volume.
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, grid_resolution: Vec<usize>) -> Result<Self> {
        if lower.is_empty() {
            return Err(GeoError::InvalidInput("domain dimension must be >= 1".into()));
        }
        if lower.len() != upper.len() || lower.len() != grid_resolution.len() {
            return Err(GeoError::InvalidInput(format!(
                "domain bounds/resolution lengths disagree: {} vs {} vs {}",
                lower.len(),
                upper.len(),
                grid_resolution.len()
            )));
        }
        for i in 0..lower.len() {
            if !(upper[i] - lower[i]).is_finite() || upper[i] <= lower[i] {
                return Err(GeoError::InvalidInput(format!(
                    "degenerate bounds on axis {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Domain {
            lower,
            upper,
            grid_resolution,
        })
    }

    /// Symmetric box `[-half, half]^n` with a uniform grid resolution.
    pub fn symmetric(n: usize, half: f64, resolution: usize) -> Result<Self> {
        Domain::new(
            DVector::from_element(n, -half),
            DVector::from_element(n, half),
            vec![resolution; n],
        )
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn grid_resolution(&self) -> &[usize] {
        &self.grid_resolution
    }

    /// Replaces the grid resolution on every axis.
    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.grid_resolution = vec![resolution; self.dimension()];
        self
    }

    pub fn contains(&self, p: &DVector<f64>) -> bool {
        p.len() == self.dimension()
            && (0..p.len()).all(|i| p[i] >= self.lower[i] && p[i] <= self.upper[i])
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    /// The grid point with multi-index `idx` (one index per axis, each `< resolution`).
    /// A resolution of 1 collapses that axis to its lower bound.
    pub fn grid_point(&self, idx: &[usize]) -> DVector<f64> {
        let mut p = self.lower.clone();
        for (axis, &i) in idx.iter().enumerate() {
            let steps = self.grid_resolution[axis].max(1) - 1;
            if steps > 0 {
                let h = (self.upper[axis] - self.lower[axis]) / steps as f64;
                p[axis] += h * i as f64;
            }
        }
        p
    }

    /// All multi-indices of the sampling grid, row-major.
    pub fn grid_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &res in &self.grid_resolution {
            let mut next = Vec::with_capacity(out.len() * res.max(1));
            for prefix in &out {
                for i in 0..res.max(1) {
                    let mut idx = prefix.clone();
                    idx.push(i);
                    next.push(idx);
                }
            }
            out = next;
        }
        out
    }

    /// Uniform sample inside the box.
    pub fn sample_uniform<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dimension(), |i, _| {
            rng.random_range(self.lower[i]..=self.upper[i])
        })
    }
}
