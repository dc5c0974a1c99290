//! RMP representations and the two node-local RMP-algebra operators.
//!
//! An RMP is either in natural form `[f, M]` (force and inertia) or canonical
//! form `(a, M)` (acceleration and inertia). `pullback` sums child RMPs into a
//! parent RMP through the edge Jacobians, `resolve` turns a natural-form RMP
//! into its canonical form with a pseudoinverse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SVD_CUTOFF};

/// Position and velocity on a node manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
}

impl NodeState {
    pub fn new(x: DVector<f64>, xdot: DVector<f64>) -> Result<Self> {
        if x.len() != xdot.len() {
            return Err(Error::Dimension {
                path: "state".into(),
                expected: x.len(),
                got: xdot.len(),
            });
        }
        Ok(Self { x, xdot })
    }

    pub fn from_slices(x: &[f64], xdot: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(xdot))
    }

    /// A state at rest at `x`.
    pub fn at_rest(x: DVector<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            xdot: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        linalg::is_finite_vector(&self.x) && linalg::is_finite_vector(&self.xdot)
    }
}

/// Natural-form RMP `[f, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmpNatural {
    pub f: DVector<f64>,
    pub m: DMatrix<f64>,
}

impl RmpNatural {
    pub fn new(f: DVector<f64>, m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), f.len());
        debug_assert_eq!(m.ncols(), f.len());
        Self { f, m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            f: DVector::zeros(dim),
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn is_finite(&self) -> bool {
        linalg::is_finite_vector(&self.f) && linalg::is_finite_matrix(&self.m)
    }
}

/// Canonical-form RMP `(a, M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmpCanonical {
    pub a: DVector<f64>,
    pub m: DMatrix<f64>,
}

/// Raised by [`resolve_with_diagnostics`] when the inertia is close to the
/// pseudoinverse cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionWarning {
    pub min_retained_singular_value: f64,
    pub max_singular_value: f64,
}

/// `a = M† f` with the crate-wide relative SVD cutoff.
pub fn resolve(rmp: &RmpNatural) -> RmpCanonical {
    resolve_with_diagnostics(rmp).0
}

pub fn resolve_with_diagnostics(rmp: &RmpNatural) -> (RmpCanonical, Option<ConditionWarning>) {
    let (a, min_kept, max) = linalg::pinv_solve(&rmp.m, &rmp.f, SVD_CUTOFF);
    let warning = if rmp.dim() > 0 && min_kept < 10.0 * SVD_CUTOFF * max {
        Some(ConditionWarning {
            min_retained_singular_value: min_kept,
            max_singular_value: max,
        })
    } else {
        None
    };
    (
        RmpCanonical {
            a,
            m: rmp.m.clone(),
        },
        warning,
    )
}

/// One child's contribution to a pullback: its RMP plus the edge Jacobian and
/// curvature `J̇ẋ`, both evaluated at the parent state.
#[derive(Debug, Clone, Copy)]
pub struct ChildTerm<'a> {
    pub rmp: &'a RmpNatural,
    pub jacobian: &'a DMatrix<f64>,
    pub curvature: &'a DVector<f64>,
}

/// `f_u = Σ Jᵀ(f_v − M_v J̇ẋ)`, `M_u = Σ Jᵀ M_v J`, summed in the given order.
pub fn pullback(parent_dim: usize, children: &[ChildTerm<'_>]) -> Result<RmpNatural> {
    let mut out = RmpNatural::zeros(parent_dim);
    for (idx, child) in children.iter().enumerate() {
        let j = child.jacobian;
        if j.ncols() != parent_dim || j.nrows() != child.rmp.dim() {
            return Err(Error::Dimension {
                path: format!("child[{idx}]"),
                expected: parent_dim,
                got: j.ncols(),
            });
        }
        let jt = j.transpose();
        out.f += &jt * (&child.rmp.f - &child.rmp.m * child.curvature);
        out.m += &jt * &child.rmp.m * j;
    }
    Ok(out)
}
