//! Norms on tangent vectors.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

type NormFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;

/// A norm on tangent vectors, possibly varying with the base point.
///
/// The default is the Euclidean norm; curve length and the chord lower bound
/// are computed against whichever norm is supplied.
#[derive(Clone)]
pub struct FinslerNorm {
    kind: NormKind,
}

#[derive(Clone)]
enum NormKind {
    Euclidean,
    Custom {
        name: String,
        eval: Arc<NormFn>,
    },
}

impl FinslerNorm {
    pub fn euclidean() -> Self {
        FinslerNorm {
            kind: NormKind::Euclidean,
        }
    }

    /// A user-supplied norm. The evaluator must be positively homogeneous and
    /// satisfy the triangle inequality; the property tests sample both.
    pub fn custom<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        FinslerNorm {
            kind: NormKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
            },
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, NormKind::Euclidean)
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            NormKind::Euclidean => "euclidean",
            NormKind::Custom { name, .. } => name,
        }
    }

    /// Evaluates the norm of tangent vector `v` at base point `p`.
    pub fn eval(&self, p: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match &self.kind {
            NormKind::Euclidean => v.norm(),
            NormKind::Custom { eval, .. } => eval(p, v),
        }
    }
}

impl Default for FinslerNorm {
    fn default() -> Self {
        FinslerNorm::euclidean()
    }
}

impl fmt::Debug for FinslerNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FinslerNorm({})", self.name())
    }
}
