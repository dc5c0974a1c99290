//! Smooth maps between manifolds, used as RMP-tree edges.
//!
//! Every map carries its exact Jacobian and the curvature term `J̇ẋ`
//! (the time derivative of the Jacobian along `ẋ`, applied to `ẋ`).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius under which distance maps refuse to evaluate.
pub const SINGULAR_RADIUS: f64 = 1e-9;

pub trait TaskMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// `J̇(x, ẋ) ẋ`.
    fn curvature(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>>;
}

pub type SharedMap = Arc<dyn TaskMap>;

fn check_len(map: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            path: map.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Identity {
    dim: usize,
}

impl TaskMap for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.dim
    }
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.dim, x.len())?;
        Ok(x.clone())
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.name(), self.dim, x.len())?;
        Ok(DMatrix::identity(self.dim, self.dim))
    }
    fn curvature(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.dim, x.len())?;
        Ok(DVector::zeros(self.dim))
    }
}

/// `y = A x` for a constant matrix `A`.
#[derive(Debug, Clone)]
pub struct Linear {
    a: DMatrix<f64>,
}

impl TaskMap for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.a.ncols(), x.len())?;
        Ok(&self.a * x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.name(), self.a.ncols(), x.len())?;
        Ok(self.a.clone())
    }
    fn curvature(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.a.ncols(), x.len())?;
        Ok(DVector::zeros(self.a.nrows()))
    }
}

/// Selects a subset of coordinates.
#[derive(Debug, Clone)]
pub struct CoordinateProjection {
    dim_in: usize,
    indices: Vec<usize>,
}

impl TaskMap for CoordinateProjection {
    fn name(&self) -> &'static str {
        "coordinate_projection"
    }
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.indices.len()
    }
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.dim_in, x.len())?;
        Ok(DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| x[i])))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.name(), self.dim_in, x.len())?;
        let mut j = DMatrix::zeros(self.indices.len(), self.dim_in);
        for (row, &col) in self.indices.iter().enumerate() {
            j[(row, col)] = 1.0;
        }
        Ok(j)
    }
    fn curvature(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.dim_in, x.len())?;
        Ok(DVector::zeros(self.indices.len()))
    }
}

/// `z = ‖x − center‖ / radius − offset`.
///
/// With `radius = 1, offset = 0` this is the distance to a point; with the
/// obstacle radius and `offset = 1` it is the scaled sphere distance that is
/// zero on the surface.
#[derive(Debug, Clone)]
pub struct ScaledDistance {
    center: DVector<f64>,
    radius: f64,
    offset: f64,
    name: &'static str,
}

impl ScaledDistance {
    fn diff(&self, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        check_len(self.name, self.center.len(), x.len())?;
        let d = x - &self.center;
        let n = d.norm();
        if n < SINGULAR_RADIUS {
            return Err(Error::Singularity {
                map: self.name,
                distance: n,
            });
        }
        Ok((d, n))
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl TaskMap for ScaledDistance {
    fn name(&self) -> &'static str {
        self.name
    }
    fn dim_in(&self) -> usize {
        self.center.len()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, n) = self.diff(x)?;
        Ok(DVector::from_element(1, n / self.radius - self.offset))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (d, n) = self.diff(x)?;
        Ok(DMatrix::from_row_slice(1, d.len(), (d / (n * self.radius)).as_slice()))
    }
    fn curvature(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>> {
        let (d, n) = self.diff(x)?;
        check_len(self.name, self.center.len(), xdot.len())?;
        let radial = d.dot(xdot) / n;
        let value = (xdot.norm_squared() - radial * radial) / (n * self.radius);
        Ok(DVector::from_element(1, value))
    }
}

/// Maps stacked robot coordinates to `x_i − x_j`.
#[derive(Debug, Clone)]
pub struct PairwiseDisplacement {
    i: usize,
    j: usize,
    per_robot_dim: usize,
    n_robots: usize,
}

impl PairwiseDisplacement {
    fn block(&self, x: &DVector<f64>, k: usize) -> DVector<f64> {
        x.rows(k * self.per_robot_dim, self.per_robot_dim).into_owned()
    }
}

impl TaskMap for PairwiseDisplacement {
    fn name(&self) -> &'static str {
        "pairwise_displacement"
    }
    fn dim_in(&self) -> usize {
        self.per_robot_dim * self.n_robots
    }
    fn dim_out(&self) -> usize {
        self.per_robot_dim
    }
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.dim_in(), x.len())?;
        Ok(self.block(x, self.i) - self.block(x, self.j))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.name(), self.dim_in(), x.len())?;
        let p = self.per_robot_dim;
        let mut jac = DMatrix::zeros(p, self.dim_in());
        for k in 0..p {
            jac[(k, self.i * p + k)] = 1.0;
            jac[(k, self.j * p + k)] = -1.0;
        }
        Ok(jac)
    }
    fn curvature(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.name(), self.dim_in(), x.len())?;
        Ok(DVector::zeros(self.per_robot_dim))
    }
}

/// `outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Compose {
    outer: SharedMap,
    inner: SharedMap,
}

impl TaskMap for Compose {
    fn name(&self) -> &'static str {
        "compose"
    }
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.outer.dim_out()
    }
    fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.outer.psi(&self.inner.psi(x)?)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let y = self.inner.psi(x)?;
        Ok(self.outer.jacobian(&y)? * self.inner.jacobian(x)?)
    }
    fn curvature(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.inner.psi(x)?;
        let j_inner = self.inner.jacobian(x)?;
        let ydot = &j_inner * xdot;
        let inner_curv = self.inner.curvature(x, xdot)?;
        Ok(self.outer.jacobian(&y)? * inner_curv + self.outer.curvature(&y, &ydot)?)
    }
}

pub fn identity(dim: usize) -> Result<SharedMap> {
    if dim == 0 {
        return Err(Error::Config("identity map needs dim >= 1".into()));
    }
    Ok(Arc::new(Identity { dim }))
}

pub fn linear(a: DMatrix<f64>) -> Result<SharedMap> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Config("linear map needs a non-empty matrix".into()));
    }
    if !crate::linalg::is_finite_matrix(&a) {
        return Err(Error::Config("linear map has non-finite entries".into()));
    }
    Ok(Arc::new(Linear { a }))
}

pub fn coordinate_projection(dim_in: usize, indices: &[usize]) -> Result<SharedMap> {
    if indices.is_empty() {
        return Err(Error::Config("coordinate projection needs at least one index".into()));
    }
    for (k, &i) in indices.iter().enumerate() {
        if i >= dim_in {
            return Err(Error::Config(format!(
                "coordinate projection index {i} out of range for dim {dim_in}"
            )));
        }
        if indices[..k].contains(&i) {
            return Err(Error::Config(format!("coordinate projection index {i} repeated")));
        }
    }
    Ok(Arc::new(CoordinateProjection {
        dim_in,
        indices: indices.to_vec(),
    }))
}

pub fn distance_to_point(goal: DVector<f64>) -> Result<SharedMap> {
    if goal.is_empty() || !crate::linalg::is_finite_vector(&goal) {
        return Err(Error::Config("distance_to_point needs a finite, non-empty goal".into()));
    }
    Ok(Arc::new(ScaledDistance {
        center: goal,
        radius: 1.0,
        offset: 0.0,
        name: "distance_to_point",
    }))
}

pub fn distance_to_sphere(center: DVector<f64>, radius: f64) -> Result<SharedMap> {
    if center.is_empty() || !crate::linalg::is_finite_vector(&center) {
        return Err(Error::Config("distance_to_sphere needs a finite, non-empty center".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
    }
    Ok(Arc::new(ScaledDistance {
        center,
        radius,
        offset: 1.0,
        name: "distance_to_sphere",
    }))
}

pub fn pairwise_displacement(
    i: usize,
    j: usize,
    per_robot_dim: usize,
    n_robots: usize,
) -> Result<SharedMap> {
    if i == j {
        return Err(Error::Config(format!("pairwise displacement needs i != j (got {i})")));
    }
    if i >= n_robots || j >= n_robots {
        return Err(Error::Config(format!(
            "pairwise displacement robot index out of range ({i}, {j}) for {n_robots} robots"
        )));
    }
    if per_robot_dim == 0 {
        return Err(Error::Config("per-robot dimension must be >= 1".into()));
    }
    Ok(Arc::new(PairwiseDisplacement {
        i,
        j,
        per_robot_dim,
        n_robots,
    }))
}

pub fn compose(outer: SharedMap, inner: SharedMap) -> Result<SharedMap> {
    if inner.dim_out() != outer.dim_in() {
        return Err(Error::Dimension {
            path: format!("compose({}, {})", outer.name(), inner.name()),
            expected: outer.dim_in(),
            got: inner.dim_out(),
        });
    }
    Ok(Arc::new(Compose { outer, inner }))
}

/// Declarative task-map description used by scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskMapSpec {
    Identity { dim: usize },
    Linear { rows: usize, cols: usize, data: Vec<f64> },
    CoordinateProjection { dim_in: usize, indices: Vec<usize> },
    DistanceToPoint { goal: Vec<f64> },
    DistanceToSphere { center: Vec<f64>, radius: f64 },
    PairwiseDisplacement { i: usize, j: usize, per_robot_dim: usize, n_robots: usize },
    Compose { outer: Box<TaskMapSpec>, inner: Box<TaskMapSpec> },
}

impl TaskMapSpec {
    pub fn build(&self) -> Result<SharedMap> {
        match self {
            TaskMapSpec::Identity { dim } => identity(*dim),
            TaskMapSpec::Linear { rows, cols, data } => {
                if data.len() != rows * cols {
                    return Err(Error::Config(format!(
                        "linear map data has {} entries, expected {rows}x{cols}",
                        data.len()
                    )));
                }
                linear(DMatrix::from_row_slice(*rows, *cols, data))
            }
            TaskMapSpec::CoordinateProjection { dim_in, indices } => coordinate_projection(*dim_in, indices),
            TaskMapSpec::DistanceToPoint { goal } => distance_to_point(DVector::from_column_slice(goal)),
            TaskMapSpec::DistanceToSphere { center, radius } => {
                distance_to_sphere(DVector::from_column_slice(center), *radius)
            }
            TaskMapSpec::PairwiseDisplacement {
                i,
                j,
                per_robot_dim,
                n_robots,
            } => pairwise_displacement(*i, *j, *per_robot_dim, *n_robots),
            TaskMapSpec::Compose { outer, inner } => compose(outer.build()?, inner.build()?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn identity_map() {
        let m = identity(2).unwrap();
        let x = v(&[1.0, 2.0]);
        assert_eq!(m.psi(&x).unwrap(), x);
        assert_eq!(m.jacobian(&x).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(m.curvature(&x, &v(&[5.0, -1.0])).unwrap(), v(&[0.0, 0.0]));
        assert!(identity(0).is_err());
    }

    #[test]
    fn projection_selects_coordinates() {
        let m = coordinate_projection(4, &[0, 1]).unwrap();
        let x = v(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.psi(&x).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(
            m.jacobian(&x).unwrap(),
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        );
        assert_eq!(m.curvature(&x, &x).unwrap(), v(&[0.0, 0.0]));
        assert!(coordinate_projection(4, &[1, 1]).is_err());
        assert!(coordinate_projection(4, &[4]).is_err());
    }

    #[test]
    fn distance_to_point_values() {
        let m = distance_to_point(v(&[0.0, 0.0])).unwrap();
        let x = v(&[3.0, 4.0]);
        assert_relative_eq!(m.psi(&x).unwrap()[0], 5.0, epsilon = 1e-15);
        assert_relative_eq!(m.jacobian(&x).unwrap(), DMatrix::from_row_slice(1, 2, &[0.6, 0.8]), epsilon = 1e-15);
        assert_relative_eq!(m.curvature(&x, &v(&[0.6, 0.8])).unwrap()[0], 0.0, epsilon = 1e-15);
        let err = m.psi(&v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
    }

    #[test]
    fn sphere_distance_values() {
        let m = distance_to_sphere(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_relative_eq!(m.psi(&v(&[2.0, 0.0])).unwrap()[0], 1.0);
        assert_relative_eq!(m.psi(&v(&[0.0, 1.0])).unwrap()[0], 0.0);
        assert_relative_eq!(m.jacobian(&v(&[2.0, 0.0])).unwrap(), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert!(distance_to_sphere(v(&[0.0, 0.0]), 0.0).is_err());
    }

    #[test]
    fn pairwise_values() {
        let m = pairwise_displacement(0, 1, 2, 2).unwrap();
        let x = v(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.psi(&x).unwrap(), v(&[-1.0, -1.0]));
        assert_eq!(
            m.jacobian(&x).unwrap(),
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0])
        );
        assert_eq!(m.curvature(&x, &x).unwrap(), v(&[0.0, 0.0]));
        assert!(pairwise_displacement(1, 1, 2, 2).is_err());
        assert!(pairwise_displacement(0, 2, 2, 2).is_err());
    }

    #[test]
    fn compose_linear_maps_multiplies_jacobians() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.5, 2.0, 0.0]);
        let c = compose(linear(a.clone()).unwrap(), linear(b.clone()).unwrap()).unwrap();
        let x = v(&[0.3, -0.2, 1.0]);
        assert_relative_eq!(c.jacobian(&x).unwrap(), &a * &b, epsilon = 1e-15);
        assert!(compose(linear(b).unwrap(), linear(a).unwrap()).is_err());
    }

    #[test]
    fn spec_builds_nested_compose() {
        let json = r#"{"kind":"compose",
            "outer":{"kind":"distance_to_sphere","center":[0.0,0.0],"radius":0.25},
            "inner":{"kind":"pairwise_displacement","i":0,"j":1,"per_robot_dim":2,"n_robots":3}}"#;
        let spec: TaskMapSpec = serde_json::from_str(json).unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.dim_in(), 6);
        assert_eq!(m.dim_out(), 1);
        let x = v(&[1.0, 0.0, 0.0, 0.0, 5.0, 5.0]);
        assert_relative_eq!(m.psi(&x).unwrap()[0], 3.0, epsilon = 1e-14);
    }
}
