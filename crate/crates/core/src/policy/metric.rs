//! Riemannian metrics on a leaf space, their curvature terms, and damping.
//!
//! For a metric `G(x, ẋ)` with columns `g_i`:
//!
//! ```text
//! Ξ_G = ½ Σ_i ẋ_i ∂_ẋ g_i
//! ξ_G = Ġ_x ẋ − ½ ∇_x (ẋᵀ G ẋ),   Ġ_x = [∂_x g_i ẋ]_i = Σ_k ẋ_k ∂G/∂x_k
//! M   = G + Ξ_G
//! ```

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub trait Metric: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn g(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64>;

    /// `∂G/∂x_k` for each `k`.
    fn dg_dx(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Vec<DMatrix<f64>>;

    /// `∂G/∂ẋ_k` for each `k`.
    fn dg_dxdot(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Vec<DMatrix<f64>>;

    /// `Ξ_G(x, ẋ)`.
    fn curvature_inertia(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64> {
        let m = self.dim();
        let partials = self.dg_dxdot(x, xdot);
        let mut xi = DMatrix::zeros(m, m);
        // Ξ[r, k] = ½ Σ_i ẋ_i ∂G[r, i]/∂ẋ_k
        for (k, dg) in partials.iter().enumerate() {
            let col = dg * xdot * 0.5;
            xi.set_column(k, &col);
        }
        xi
    }

    /// `ξ_G(x, ẋ)`.
    fn curvature_force(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        let partials = self.dg_dx(x, xdot);
        let mut g_dot = DMatrix::zeros(m, m);
        let mut grad_energy = DVector::zeros(m);
        for (k, dg) in partials.iter().enumerate() {
            g_dot += dg * xdot[k];
            grad_energy[k] = xdot.dot(&(dg * xdot));
        }
        g_dot * xdot - grad_energy * 0.5
    }
}

/// `M = G + Ξ_G`.
pub fn inertia(metric: &dyn Metric, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = metric.g(x, xdot) + metric.curvature_inertia(x, xdot);
    if !linalg::is_finite_matrix(&m) {
        return Err(Error::NonFinite {
            path: "metric".into(),
            what: "inertia",
        });
    }
    Ok(m)
}

/// Constant metric `G = c` (any symmetric positive-definite matrix).
#[derive(Debug, Clone)]
pub struct ConstantMetric {
    g: DMatrix<f64>,
}

impl ConstantMetric {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() == 0 {
            return Err(Error::Config("constant metric must be a non-empty square matrix".into()));
        }
        if linalg::asymmetry(&g) > 1e-10 || g.clone().cholesky().is_none() {
            return Err(Error::Config("constant metric must be symmetric positive definite".into()));
        }
        Ok(Self { g })
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * scale)
    }
}

impl Metric for ConstantMetric {
    fn dim(&self) -> usize {
        self.g.nrows()
    }
    fn g(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> DMatrix<f64> {
        self.g.clone()
    }
    fn dg_dx(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim(), self.dim()); self.dim()]
    }
    fn dg_dxdot(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim(), self.dim()); self.dim()]
    }
    fn curvature_inertia(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }
    fn curvature_force(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim())
    }
}

/// Barrier weight `w(z) = 1/z⁴` on the scaled obstacle distance; infinite for `z ≤ 0`.
pub fn barrier_weight(z: f64) -> f64 {
    if z > 0.0 {
        1.0 / (z * z * z * z)
    } else {
        f64::INFINITY
    }
}

fn barrier_weight_derivative(z: f64) -> f64 {
    if z > 0.0 {
        -4.0 / (z * z * z * z * z)
    } else {
        f64::NEG_INFINITY
    }
}

/// Velocity-gated barrier metric on a 1-D distance space:
/// `G(z, ż) = w(z) (ε_u + min(0, ż) ż)`.
///
/// The metric only grows when the distance is shrinking.
#[derive(Debug, Clone, Copy)]
pub struct BarrierMetric {
    pub epsilon: f64,
}

impl BarrierMetric {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("barrier epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    fn gate(&self, zdot: f64) -> f64 {
        self.epsilon + zdot.min(0.0) * zdot
    }

    fn gate_derivative(&self, zdot: f64) -> f64 {
        if zdot < 0.0 {
            2.0 * zdot
        } else {
            0.0
        }
    }
}

impl Metric for BarrierMetric {
    fn dim(&self) -> usize {
        1
    }
    fn g(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, barrier_weight(x[0]) * self.gate(xdot[0]))
    }
    fn dg_dx(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(
            1,
            1,
            barrier_weight_derivative(x[0]) * self.gate(xdot[0]),
        )]
    }
    fn dg_dxdot(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(
            1,
            1,
            barrier_weight(x[0]) * self.gate_derivative(xdot[0]),
        )]
    }
}

pub trait Damping: Send + Sync + fmt::Debug {
    fn matrix(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64>;
}

/// `B = β I`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDamping {
    pub dim: usize,
    pub gain: f64,
}

impl Damping for ConstantDamping {
    fn matrix(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.gain
    }
}

/// `B = η w(z)` on a 1-D distance space.
#[derive(Debug, Clone, Copy)]
pub struct BarrierDamping {
    pub gain: f64,
}

impl Damping for BarrierDamping {
    fn matrix(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.gain * barrier_weight(x[0]))
    }
}
