//! Leaf policies: geometric dynamical systems (GDS) and CLF-constrained
//! minimally invasive controllers.

pub mod metric;
pub mod nominal;
pub mod potential;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rmp::RmpNatural;

pub use metric::{inertia, BarrierDamping, BarrierMetric, ConstantDamping, ConstantMetric, Damping, Metric};
pub use nominal::{GradientNominal, NominalController, NominalShape};
pub use potential::{Potential, QuadraticPotential, SoftNormAttractor, ZeroPotential};

/// Speed under which the CLF constraint is treated as vacuous.
pub const VELOCITY_DEADBAND: f64 = 1e-9;

/// GDS leaf: `M ẍ + ξ_G = −∇Φ − B ẋ`.
#[derive(Debug, Clone)]
pub struct GdsLeaf {
    pub metric: Arc<dyn Metric>,
    pub damping: Arc<dyn Damping>,
    pub potential: Arc<dyn Potential>,
}

impl GdsLeaf {
    pub fn new(metric: Arc<dyn Metric>, damping: Arc<dyn Damping>, potential: Arc<dyn Potential>) -> Self {
        Self {
            metric,
            damping,
            potential,
        }
    }

    /// `[f, M]` with `f = −∇Φ − Bẋ − ξ_G` and `M = G + Ξ_G`.
    pub fn force(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<RmpNatural> {
        let m = inertia(self.metric.as_ref(), x, xdot)?;
        let f = -self.potential.gradient(x)
            - self.damping.matrix(x, xdot) * xdot
            - self.metric.curvature_force(x, xdot);
        finite_rmp(f, m)
    }
}

/// Class-K decay rate `α` for the leaf CLF constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassK {
    /// `α(s) = η s²`
    Quadratic { eta: f64 },
    /// `α(s) = c s`
    Linear { gain: f64 },
}

impl ClassK {
    pub fn quadratic(eta: f64) -> Result<Self> {
        let k = ClassK::Quadratic { eta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let c = match *self {
            ClassK::Quadratic { eta } => eta,
            ClassK::Linear { gain } => gain,
        };
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("class-K gain must be positive, got {c}")));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            ClassK::Quadratic { eta } => eta * s * s,
            ClassK::Linear { gain } => gain * s,
        }
    }
}

impl Default for ClassK {
    fn default() -> Self {
        ClassK::Quadratic { eta: 1.0 }
    }
}

/// Weight `P` of the minimally invasive objective `‖f − M u_d‖²_P`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Identity,
    /// `P = M⁻¹`, so the objective is `‖a − u_d‖²_M`.
    InverseInertia,
    /// A fixed positive-definite `P`, stored as `P⁻¹`.
    Fixed { p_inv: DMatrix<f64> },
}

impl Weight {
    pub fn fixed(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() || linalg::asymmetry(&p) > 1e-10 {
            return Err(Error::Config("weight P must be square and symmetric".into()));
        }
        let chol = p
            .cholesky()
            .ok_or_else(|| Error::Config("weight P must be positive definite".into()))?;
        Ok(Weight::Fixed { p_inv: chol.inverse() })
    }

    fn inverse(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Weight::Identity => DMatrix::identity(m.nrows(), m.ncols()),
            Weight::InverseInertia => m.clone(),
            Weight::Fixed { p_inv } => p_inv.clone(),
        }
    }
}

/// Minimizer of `‖f − f₀‖²_P` subject to `aᵀ f ≤ b`, given `P⁻¹`.
///
/// Returns the solution and whether the constraint was active.
pub fn project_half_space(
    f0: &DVector<f64>,
    a: &DVector<f64>,
    b: f64,
    p_inv: &DMatrix<f64>,
) -> (DVector<f64>, bool) {
    let excess = a.dot(f0) - b;
    if excess <= 0.0 {
        return (f0.clone(), false);
    }
    let p_inv_a = p_inv * a;
    let denom = a.dot(&p_inv_a);
    if denom <= 0.0 {
        return (f0.clone(), false);
    }
    (f0 - p_inv_a * (excess / denom), true)
}

/// CLF leaf: the force closest to `M u_d` satisfying
/// `ẋᵀ f ≤ −ẋᵀ(∇Φ + ξ_G) − α(‖ẋ‖)`.
#[derive(Debug, Clone)]
pub struct ClfLeaf {
    pub metric: Arc<dyn Metric>,
    pub potential: Arc<dyn Potential>,
    pub alpha: ClassK,
    pub weight: Weight,
    pub nominal: Arc<dyn NominalController>,
}

impl ClfLeaf {
    pub fn new(
        metric: Arc<dyn Metric>,
        potential: Arc<dyn Potential>,
        alpha: ClassK,
        weight: Weight,
        nominal: Arc<dyn NominalController>,
    ) -> Result<Self> {
        alpha.validate()?;
        if let Weight::Fixed { p_inv } = &weight {
            if p_inv.nrows() != metric.dim() {
                return Err(Error::Config(format!(
                    "weight P is {}x{} but the leaf space has dim {}",
                    p_inv.nrows(),
                    p_inv.ncols(),
                    metric.dim()
                )));
            }
        }
        Ok(Self {
            metric,
            potential,
            alpha,
            weight,
            nominal,
        })
    }

    /// Returns `[f, M]` and whether the CLF constraint modified the nominal.
    pub fn force(&self, x: &DVector<f64>, xdot: &DVector<f64>, t: f64) -> Result<(RmpNatural, bool)> {
        let m = inertia(self.metric.as_ref(), x, xdot)?;
        let f0 = &m * self.nominal.acceleration(x, xdot, t, &m);
        let speed = xdot.norm();
        if speed <= VELOCITY_DEADBAND {
            return Ok((finite_rmp(f0, m)?, false));
        }
        let drift = self.potential.gradient(x) + self.metric.curvature_force(x, xdot);
        let b = -xdot.dot(&drift) - self.alpha.eval(speed);
        let (f, active) = project_half_space(&f0, xdot, b, &self.weight.inverse(&m));
        Ok((finite_rmp(f, m)?, active))
    }
}

fn finite_rmp(f: DVector<f64>, m: DMatrix<f64>) -> Result<RmpNatural> {
    if !linalg::is_finite_vector(&f) {
        return Err(Error::NonFinite {
            path: "leaf".into(),
            what: "force",
        });
    }
    if !linalg::is_finite_matrix(&m) {
        return Err(Error::NonFinite {
            path: "leaf".into(),
            what: "inertia",
        });
    }
    Ok(RmpNatural::new(f, m))
}

/// Output of one leaf evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEval {
    pub rmp: RmpNatural,
    pub constraint_active: bool,
}

#[derive(Debug, Clone)]
pub enum LeafPolicy {
    Gds(GdsLeaf),
    Clf(ClfLeaf),
}

impl LeafPolicy {
    pub fn dim(&self) -> usize {
        self.metric().dim()
    }

    pub fn metric(&self) -> &dyn Metric {
        match self {
            LeafPolicy::Gds(l) => l.metric.as_ref(),
            LeafPolicy::Clf(l) => l.metric.as_ref(),
        }
    }

    pub fn potential(&self) -> &dyn Potential {
        match self {
            LeafPolicy::Gds(l) => l.potential.as_ref(),
            LeafPolicy::Clf(l) => l.potential.as_ref(),
        }
    }

    pub fn is_gds(&self) -> bool {
        matches!(self, LeafPolicy::Gds(_))
    }

    /// Time-varying nominal controllers fall outside the stability results.
    pub fn is_heuristic(&self) -> bool {
        match self {
            LeafPolicy::Gds(_) => false,
            LeafPolicy::Clf(l) => l.nominal.is_time_varying(),
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>, xdot: &DVector<f64>, t: f64) -> Result<LeafEval> {
        match self {
            LeafPolicy::Gds(l) => Ok(LeafEval {
                rmp: l.force(x, xdot)?,
                constraint_active: false,
            }),
            LeafPolicy::Clf(l) => {
                let (rmp, constraint_active) = l.force(x, xdot, t)?;
                Ok(LeafEval { rmp, constraint_active })
            }
        }
    }

    /// Damping matrix for GDS leaves; CLF leaves have none.
    pub fn damping(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Option<DMatrix<f64>> {
        match self {
            LeafPolicy::Gds(l) => Some(l.damping.matrix(x, xdot)),
            LeafPolicy::Clf(_) => None,
        }
    }

    /// Guaranteed energy dissipation rate `U` with `V̇ ≤ −U` at this leaf:
    /// `ẋᵀBẋ` (with equality) for GDS leaves, `α(‖ẋ‖)` for CLF leaves.
    pub fn dissipation(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> f64 {
        match self {
            LeafPolicy::Gds(l) => xdot.dot(&(l.damping.matrix(x, xdot) * xdot)),
            LeafPolicy::Clf(l) => l.alpha.eval(xdot.norm()),
        }
    }

    /// Leaf Lyapunov candidate `½ẋᵀGẋ + Φ`, split into (kinetic, potential).
    pub fn energy(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> (f64, f64) {
        let g = self.metric().g(x, xdot);
        (0.5 * xdot.dot(&(g * xdot)), self.potential().value(x))
    }
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    #[default]
    Identity,
    InverseInertia,
}

/// Declarative leaf description used by scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeafSpec {
    /// `G = I`, soft-norm attractor potential, `B = βI`.
    GdsAttractor { goal: Vec<f64>, gain: f64, damping: f64 },
    /// Velocity-gated barrier on a scaled distance space, `Φ = 0`, `B = η w(z)`.
    GdsCollision {
        damping: f64,
        #[serde(default = "default_barrier_epsilon")]
        epsilon: f64,
    },
    /// Pure damper `G = cI`, `Φ = 0`, `B = βI`.
    GdsDamper { dim: usize, metric: f64, damping: f64 },
    /// 1-D spring on a distance space: `G = c`, `Φ = ½k(z − target)²`, `B = β`.
    GdsDistance {
        target: f64,
        gain: f64,
        damping: f64,
        #[serde(default = "default_unit")]
        metric: f64,
    },
    /// CLF-constrained attractor with `G = I` and the soft-norm potential.
    ClfAttractor {
        goal: Vec<f64>,
        gain: f64,
        nominal: NominalShape,
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default)]
        weight: WeightKind,
    },
}

fn default_barrier_epsilon() -> f64 {
    BarrierMetric::DEFAULT_EPSILON
}

fn default_unit() -> f64 {
    1.0
}

fn non_negative(name: &str, v: f64) -> Result<f64> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(v)
}

impl LeafSpec {
    pub fn dim(&self) -> usize {
        match self {
            LeafSpec::GdsAttractor { goal, .. } | LeafSpec::ClfAttractor { goal, .. } => goal.len(),
            LeafSpec::GdsDamper { dim, .. } => *dim,
            LeafSpec::GdsCollision { .. } | LeafSpec::GdsDistance { .. } => 1,
        }
    }

    pub fn build(&self) -> Result<LeafPolicy> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::Config("leaf dimension must be >= 1".into()));
        }
        Ok(match self {
            LeafSpec::GdsAttractor { goal, gain, damping } => LeafPolicy::Gds(GdsLeaf::new(
                Arc::new(ConstantMetric::scaled_identity(dim, 1.0)?),
                Arc::new(ConstantDamping {
                    dim,
                    gain: non_negative("damping", *damping)?,
                }),
                Arc::new(SoftNormAttractor::new(DVector::from_column_slice(goal), *gain)?),
            )),
            LeafSpec::GdsCollision { damping, epsilon } => LeafPolicy::Gds(GdsLeaf::new(
                Arc::new(BarrierMetric::new(*epsilon)?),
                Arc::new(BarrierDamping {
                    gain: non_negative("damping", *damping)?,
                }),
                Arc::new(ZeroPotential { dim: 1 }),
            )),
            LeafSpec::GdsDamper { dim, metric, damping } => LeafPolicy::Gds(GdsLeaf::new(
                Arc::new(ConstantMetric::scaled_identity(*dim, *metric)?),
                Arc::new(ConstantDamping {
                    dim: *dim,
                    gain: non_negative("damping", *damping)?,
                }),
                Arc::new(ZeroPotential { dim: *dim }),
            )),
            LeafSpec::GdsDistance {
                target,
                gain,
                damping,
                metric,
            } => LeafPolicy::Gds(GdsLeaf::new(
                Arc::new(ConstantMetric::scaled_identity(1, *metric)?),
                Arc::new(ConstantDamping {
                    dim: 1,
                    gain: non_negative("damping", *damping)?,
                }),
                Arc::new(QuadraticPotential::new(DVector::from_element(1, *target), *gain)?),
            )),
            LeafSpec::ClfAttractor {
                goal,
                gain,
                nominal,
                eta,
                weight,
            } => {
                let potential: Arc<dyn Potential> =
                    Arc::new(SoftNormAttractor::new(DVector::from_column_slice(goal), *gain)?);
                let nominal = Arc::new(GradientNominal::new(potential.clone(), *nominal, dim)?);
                let weight = match weight {
                    WeightKind::Identity => Weight::Identity,
                    WeightKind::InverseInertia => Weight::InverseInertia,
                };
                LeafPolicy::Clf(ClfLeaf::new(
                    Arc::new(ConstantMetric::scaled_identity(dim, 1.0)?),
                    potential,
                    ClassK::quadratic(*eta)?,
                    weight,
                    nominal,
                )?)
            }
        })
    }
}
