use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A lower-bounded potential with its gradient. All shipped potentials are
/// nonnegative.
pub trait Potential: Send + Sync + fmt::Debug {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroPotential {
    pub dim: usize,
}

impl Potential for ZeroPotential {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
}

/// `Φ(x) = ½ k ‖x − c‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    center: DVector<f64>,
    gain: f64,
}

impl QuadraticPotential {
    pub fn new(center: DVector<f64>, gain: f64) -> Result<Self> {
        check_gain(gain)?;
        Ok(Self { center, gain })
    }
}

impl Potential for QuadraticPotential {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.gain * (x - &self.center).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * self.gain
    }
}

/// `Φ(x) = k (r − ln(1 + r))` with `r = ‖x − g‖`.
///
/// Smooth at the goal (quadratic there) with gradient `k (x − g)/(1 + r)`,
/// which saturates at `k` far away.
#[derive(Debug, Clone)]
pub struct SoftNormAttractor {
    goal: DVector<f64>,
    gain: f64,
}

impl SoftNormAttractor {
    pub fn new(goal: DVector<f64>, gain: f64) -> Result<Self> {
        check_gain(gain)?;
        Ok(Self { goal, gain })
    }

    pub fn goal(&self) -> &DVector<f64> {
        &self.goal
    }
}

impl Potential for SoftNormAttractor {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = (x - &self.goal).norm();
        self.gain * (r - r.ln_1p())
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.goal;
        let r = d.norm();
        d * (self.gain / (1.0 + r))
    }
}

fn check_gain(gain: f64) -> Result<()> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Config(format!("potential gain must be positive, got {gain}")));
    }
    Ok(())
}
