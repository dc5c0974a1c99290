//! Nominal controllers for CLF leaves.
//!
//! Each shape is specified as a desired force and converted to an
//! acceleration with the leaf inertia at the same state, `u_d = M⁻¹ f_d`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::potential::Potential;
use crate::error::{Error, Result};
use crate::linalg;

pub trait NominalController: Send + Sync + fmt::Debug {
    /// Desired acceleration `u_d(x, ẋ, t)` given the leaf inertia `M(x, ẋ)`.
    fn acceleration(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        t: f64,
        inertia: &DMatrix<f64>,
    ) -> DVector<f64>;

    /// Whether the controller depends on time. Stability results assume it
    /// does not, so time-varying nominals are reported as heuristic.
    fn is_time_varying(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NominalShape {
    /// `f_d = −∇Φ`
    Potential,
    /// `f_d = −∇Φ + ‖ẋ‖ v` with `v = −R(π/2) ∇Φ`
    Spiral,
    /// `f_d = −∇Φ + sin(t/4) ‖ẋ‖ v`
    Sinusoidal,
}

/// Nominal controller built from a potential gradient.
#[derive(Debug, Clone)]
pub struct GradientNominal {
    potential: Arc<dyn Potential>,
    shape: NominalShape,
}

impl GradientNominal {
    pub fn new(potential: Arc<dyn Potential>, shape: NominalShape, dim: usize) -> Result<Self> {
        if shape != NominalShape::Potential && dim != 2 {
            return Err(Error::Config(format!(
                "{shape:?} nominal controller needs a 2-D leaf space, got {dim}"
            )));
        }
        Ok(Self { potential, shape })
    }

    pub fn shape(&self) -> NominalShape {
        self.shape
    }

    /// Desired force before the inertia solve.
    pub fn force(&self, x: &DVector<f64>, xdot: &DVector<f64>, t: f64) -> DVector<f64> {
        let grad = self.potential.gradient(x);
        let mut f = -&grad;
        let swirl = match self.shape {
            NominalShape::Potential => return f,
            NominalShape::Spiral => 1.0,
            NominalShape::Sinusoidal => (t / 4.0).sin(),
        };
        // v = −R(π/2)∇Φ with R(π/2) = [[0, −1], [1, 0]]
        let v = DVector::from_vec(vec![grad[1], -grad[0]]);
        f += v * (swirl * xdot.norm());
        f
    }
}

impl NominalController for GradientNominal {
    fn acceleration(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        t: f64,
        inertia: &DMatrix<f64>,
    ) -> DVector<f64> {
        linalg::spd_solve(inertia, &self.force(x, xdot, t))
    }

    fn is_time_varying(&self) -> bool {
        self.shape == NominalShape::Sinusoidal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::potential::QuadraticPotential;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    // ∇Φ = (1, 0) at x = (1, 0) for ½‖x‖².
    fn unit_grad() -> Arc<dyn Potential> {
        Arc::new(QuadraticPotential::new(v(&[0.0, 0.0]), 1.0).unwrap())
    }

    #[test]
    fn potential_shape() {
        let n = GradientNominal::new(unit_grad(), NominalShape::Potential, 2).unwrap();
        let u = n.acceleration(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), 0.0, &DMatrix::identity(2, 2));
        assert_eq!(u, v(&[-1.0, 0.0]));
    }

    #[test]
    fn spiral_shape_rotates_gradient() {
        let n = GradientNominal::new(unit_grad(), NominalShape::Spiral, 2).unwrap();
        let u = n.acceleration(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), 0.0, &DMatrix::identity(2, 2));
        assert_eq!(u, v(&[-1.0, -1.0]));
    }

    #[test]
    fn sinusoidal_matches_potential_at_time_zero() {
        let s = GradientNominal::new(unit_grad(), NominalShape::Sinusoidal, 2).unwrap();
        let p = GradientNominal::new(unit_grad(), NominalShape::Potential, 2).unwrap();
        let x = v(&[0.4, -0.3]);
        let xd = v(&[1.0, 2.0]);
        let m = DMatrix::identity(2, 2);
        assert_eq!(s.acceleration(&x, &xd, 0.0, &m), p.acceleration(&x, &xd, 0.0, &m));
        assert!(s.is_time_varying());
        assert!(!p.is_time_varying());
    }

    #[test]
    fn acceleration_uses_inertia() {
        let n = GradientNominal::new(unit_grad(), NominalShape::Potential, 2).unwrap();
        let m = DMatrix::from_diagonal(&v(&[2.0, 4.0]));
        let u = n.acceleration(&v(&[2.0, 4.0]), &v(&[0.0, 0.0]), 0.0, &m);
        approx::assert_relative_eq!(u, v(&[-1.0, -1.0]), epsilon = 1e-14);
    }

    #[test]
    fn spiral_requires_planar_space() {
        assert!(GradientNominal::new(unit_grad(), NominalShape::Spiral, 3).is_err());
        assert!(GradientNominal::new(unit_grad(), NominalShape::Sinusoidal, 1).is_err());
        assert!(GradientNominal::new(unit_grad(), NominalShape::Potential, 3).is_ok());
    }
}
