//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmpflow::policy::{LeafSpec, Metric};
use rmpflow::sim::Scenario;
use rmpflow::task_map::{TaskMap, TaskMapSpec};
use rmpflow::{NodeState, RmpTree};

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

/// `QᵀQ + floor·I` with entries of `Q` in `[-1, 1]`.
pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let q = random_matrix(rng, n, n, 1.0);
    q.transpose() * q + DMatrix::identity(n, n) * floor
}

/// `max |a_ij − b_ij|`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Central-difference Jacobian with step `1e-6·(1+‖x‖)`.
pub fn fd_jacobian(map: &dyn TaskMap, x: &DVector<f64>) -> DMatrix<f64> {
    let h = 1e-6 * (1.0 + x.norm());
    let m = map.dim_out();
    let mut j = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (map.psi(&xp).unwrap() - map.psi(&xm).unwrap()) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

/// `d/dt J(x + tẋ)ẋ` at `t = 0` by central differences of the analytic Jacobian.
pub fn fd_curvature(map: &dyn TaskMap, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
    let h = 1e-5 * (1.0 + x.norm()) / (1.0 + xdot.norm());
    let jp = map.jacobian(&(x + xdot * h)).unwrap();
    let jm = map.jacobian(&(x - xdot * h)).unwrap();
    (jp - jm) * xdot / (2.0 * h)
}

/// `Ξ[r,k] = ½ Σ_i ẋ_i ∂G_ri/∂ẋ_k` using only evaluations of `G`.
pub fn fd_curvature_inertia(metric: &dyn Metric, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64> {
    let m = metric.dim();
    let h = 1e-6 * (1.0 + xdot.norm());
    let mut xi = DMatrix::zeros(m, m);
    for k in 0..m {
        let mut vp = xdot.clone();
        let mut vm = xdot.clone();
        vp[k] += h;
        vm[k] -= h;
        let dg = (metric.g(x, &vp) - metric.g(x, &vm)) / (2.0 * h);
        xi.set_column(k, &(dg * xdot * 0.5));
    }
    xi
}

/// `ξ = Ġ_x ẋ − ½∇_x(ẋᵀGẋ)` using only evaluations of `G`.
pub fn fd_curvature_force(metric: &dyn Metric, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
    let m = metric.dim();
    let h = 1e-6 * (1.0 + x.norm());
    let g_dot = (metric.g(&(x + xdot * h), xdot) - metric.g(&(x - xdot * h), xdot)) / (2.0 * h);
    let mut grad = DVector::zeros(m);
    for k in 0..m {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let ep = xdot.dot(&(metric.g(&xp, xdot) * xdot));
        let em = xdot.dot(&(metric.g(&xm, xdot) * xdot));
        grad[k] = (ep - em) / (2.0 * h);
    }
    g_dot * xdot - grad * 0.5
}

/// Minimizes `(f − f₀)ᵀP(f − f₀)` over `aᵀf ≤ b` by projected gradient descent.
pub fn projected_gradient_qp(f0: &DVector<f64>, a: &DVector<f64>, b: f64, p: &DMatrix<f64>) -> DVector<f64> {
    let lmax = p.clone().symmetric_eigenvalues().max();
    let step = 1.0 / (2.0 * lmax);
    let a2 = a.norm_squared();
    let project = |y: DVector<f64>| {
        let excess = a.dot(&y) - b;
        if excess > 0.0 {
            y - a * (excess / a2)
        } else {
            y
        }
    };
    let mut f = project(f0.clone());
    for _ in 0..200_000 {
        let grad = p * (&f - f0) * 2.0;
        let next = project(&f - grad * step);
        let delta = (&next - &f).norm();
        f = next;
        if delta < 1e-15 * (1.0 + f.norm()) {
            break;
        }
    }
    f
}

pub fn qp_objective(f: &DVector<f64>, f0: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
    let d = f - f0;
    d.dot(&(p * &d))
}

/// Pseudoinverse of a symmetric matrix from its eigendecomposition, relative cutoff `tau`.
pub fn eigen_pinv(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let l = eig.eigenvalues[i];
        if l.abs() > tau * lmax {
            let u = eig.eigenvectors.column(i);
            out += u * u.transpose() / l;
        }
    }
    out
}

/// Closed-form solution of `g ẍ + b ẋ + k x = 0` (any damping regime).
pub fn damped_oscillator(g: f64, b: f64, k: f64, x0: f64, v0: f64, t: f64) -> (f64, f64) {
    let zeta2 = b * b - 4.0 * g * k;
    let sigma = -b / (2.0 * g);
    if zeta2.abs() < 1e-14 {
        let c2 = v0 - sigma * x0;
        let e = (sigma * t).exp();
        ((x0 + c2 * t) * e, (c2 + sigma * (x0 + c2 * t)) * e)
    } else if zeta2 > 0.0 {
        let s = zeta2.sqrt() / (2.0 * g);
        let (r1, r2) = (sigma + s, sigma - s);
        let c1 = (v0 - r2 * x0) / (r1 - r2);
        let c2 = x0 - c1;
        let (e1, e2) = ((r1 * t).exp(), (r2 * t).exp());
        (c1 * e1 + c2 * e2, c1 * r1 * e1 + c2 * r2 * e2)
    } else {
        let w = (-zeta2).sqrt() / (2.0 * g);
        let c2 = (v0 - sigma * x0) / w;
        let e = (sigma * t).exp();
        let (s, c) = (w * t).sin_cos();
        (e * (x0 * c + c2 * s), e * (sigma * (x0 * c + c2 * s) + w * (-x0 * s + c2 * c)))
    }
}

/// Scenario around a bare tree, without targets or geometry bookkeeping.
pub fn bare_scenario(tree: RmpTree, initial: NodeState) -> Scenario {
    Scenario {
        name: "test".into(),
        robot_dim: tree.dim(),
        n_robots: 1,
        tree,
        initial,
        targets: Vec::new(),
        obstacles: Vec::new(),
        formation_edges: Vec::new(),
    }
}

/// Random GDS tree description; every internal node owns a full-rank damper.
#[derive(Debug, Clone)]
pub struct NodeDesc {
    pub name: String,
    pub map: TaskMapSpec,
    pub dim: usize,
    pub leaf: Option<LeafSpec>,
    pub children: Vec<NodeDesc>,
}

fn linear_spec(rng: &mut impl Rng, rows: usize, cols: usize) -> TaskMapSpec {
    TaskMapSpec::Linear {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    }
}

fn random_children(rng: &mut impl Rng, dim: usize, depth: usize, prefix: &str) -> Vec<NodeDesc> {
    let mut out = vec![NodeDesc {
        name: format!("{prefix}damper"),
        map: TaskMapSpec::Identity { dim },
        dim,
        leaf: Some(LeafSpec::GdsDamper {
            dim,
            metric: rng.gen_range(0.5..2.0),
            damping: rng.gen_range(0.2..2.0),
        }),
        children: vec![],
    }];
    let n = rng.gen_range(1..=3);
    for c in 0..n {
        let name = format!("{prefix}n{c}");
        match rng.gen_range(0..4) {
            0 if depth > 0 => {
                let m = rng.gen_range(1..=3);
                let map = linear_spec(rng, m, dim);
                let children = random_children(rng, m, depth - 1, &format!("{name}_"));
                out.push(NodeDesc {
                    name,
                    map,
                    dim: m,
                    leaf: None,
                    children,
                });
            }
            1 => {
                let m = rng.gen_range(1..=3);
                out.push(NodeDesc {
                    name,
                    map: linear_spec(rng, m, dim),
                    dim: m,
                    leaf: Some(LeafSpec::GdsAttractor {
                        goal: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        gain: rng.gen_range(0.5..2.0),
                        damping: rng.gen_range(0.2..2.0),
                    }),
                    children: vec![],
                });
            }
            2 => {
                let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(15.0..20.0)).collect();
                out.push(NodeDesc {
                    name,
                    map: TaskMapSpec::DistanceToPoint { goal: center },
                    dim: 1,
                    leaf: Some(LeafSpec::GdsDistance {
                        target: rng.gen_range(16.0..25.0),
                        gain: rng.gen_range(0.1..1.0),
                        damping: rng.gen_range(0.2..1.0),
                        metric: rng.gen_range(0.5..2.0),
                    }),
                    children: vec![],
                });
            }
            _ => {
                out.push(NodeDesc {
                    name,
                    map: TaskMapSpec::Identity { dim },
                    dim,
                    leaf: Some(LeafSpec::GdsAttractor {
                        goal: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        gain: rng.gen_range(0.5..2.0),
                        damping: rng.gen_range(0.2..2.0),
                    }),
                    children: vec![],
                });
            }
        }
    }
    out
}

/// Random all-GDS tree over a root of dimension `dim`.
pub fn random_gds_children(seed: u64, dim: usize, depth: usize) -> Vec<NodeDesc> {
    let mut r = rng(seed);
    random_children(&mut r, dim, depth, "")
}

pub fn build_tree(dim: usize, children: &[NodeDesc]) -> RmpTree {
    fn attach(tree: &mut RmpTree, parent: rmpflow::NodeId, nodes: &[NodeDesc]) {
        for n in nodes {
            let map = n.map.build().unwrap();
            match &n.leaf {
                Some(l) => {
                    tree.add_leaf(parent, &n.name, map, l.build().unwrap()).unwrap();
                }
                None => {
                    let id = tree.add_node(parent, &n.name, map).unwrap();
                    attach(tree, id, &n.children);
                }
            }
        }
    }
    let mut tree = RmpTree::new(dim).unwrap();
    let root = tree.root();
    attach(&mut tree, root, children);
    tree
}

/// Internal (non-leaf, non-root) descriptions, depth first.
pub fn internal_nodes(children: &[NodeDesc]) -> Vec<&NodeDesc> {
    let mut out = Vec::new();
    for c in children {
        if c.leaf.is_none() {
            out.push(c);
            out.extend(internal_nodes(&c.children));
        }
    }
    out
}

/// `G(x, ẋ) = (1 + ẋᵀẋ) I`.
#[derive(Debug)]
pub struct SpeedMetric {
    pub dim: usize,
}

impl Metric for SpeedMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn g(&self, _x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (1.0 + xdot.norm_squared())
    }
    fn dg_dx(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim); self.dim]
    }
    fn dg_dxdot(&self, _x: &DVector<f64>, xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.dim)
            .map(|k| DMatrix::identity(self.dim, self.dim) * (2.0 * xdot[k]))
            .collect()
    }
}

/// `G(x) = (1 + xᵀx) I`.
#[derive(Debug)]
pub struct PositionMetric {
    pub dim: usize,
}

impl Metric for PositionMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn g(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (1.0 + x.norm_squared())
    }
    fn dg_dx(&self, x: &DVector<f64>, _xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.dim)
            .map(|k| DMatrix::identity(self.dim, self.dim) * (2.0 * x[k]))
            .collect()
    }
    fn dg_dxdot(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim); self.dim]
    }
}
