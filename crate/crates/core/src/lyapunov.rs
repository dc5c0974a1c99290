//! Lyapunov candidates on the RMP-tree and numerical certificates of the
//! decay and convergence properties of the composed policy.
//!
//! Every node carries `V = ½ẋᵀGẋ + Φ` where leaf `G, Φ` come from the leaf
//! policy and internal nodes use `G_u = Σ JᵀG_vJ`, `B_u = Σ JᵀB_vJ`,
//! `Φ_u = Σ Φ_v∘ψ`. Under RMPflow, `V̇_u = −Σ U_v` over the leaves below `u`
//! (`U = ẏᵀBẏ` for GDS leaves, `U ≥ α(‖ẏ‖)` for CLF leaves).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SVD_CUTOFF};
use crate::rmp::NodeState;
use crate::tree::{ForwardPass, NodeId, RmpTree};

/// Relative per-step tolerance floor for the decay checks.
pub const DECAY_TOLERANCE: f64 = 1e-3;
/// Fraction of steps that must satisfy the decay check.
pub const DECAY_PASS_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEnergy {
    pub path: String,
    pub value: f64,
    pub kinetic: f64,
    pub potential: f64,
    /// `−Σ U` over the leaves below this node.
    pub predicted_rate: f64,
    /// True when every leaf below is a GDS, so `V̇ = predicted_rate` exactly.
    pub exact: bool,
}

/// Metric, damping and potential of one node from the recursion.
#[derive(Debug, Clone)]
pub struct NodeAggregate {
    pub g: DMatrix<f64>,
    /// `None` when a CLF leaf lies below (no damping matrix is defined).
    pub b: Option<DMatrix<f64>>,
    pub potential: f64,
    pub potential_gradient: DVector<f64>,
    pub dissipation: f64,
}

/// Root quantities `G_r, B_r, Φ_r, ∇Φ_r, V_r`.
#[derive(Debug, Clone)]
pub struct RootAggregate {
    pub g: DMatrix<f64>,
    pub b: Option<DMatrix<f64>>,
    pub potential: f64,
    pub potential_gradient: DVector<f64>,
    pub value: f64,
}

/// Recursion over the tree, leaves first.
pub fn node_aggregates(tree: &RmpTree, forward: &ForwardPass) -> Vec<NodeAggregate> {
    let n = tree.len();
    let mut out: Vec<Option<NodeAggregate>> = vec![None; n];
    for id in tree.node_ids().collect::<Vec<_>>().into_iter().rev() {
        let s = forward.state(id);
        let agg = if let Some(leaf) = tree.leaf(id) {
            NodeAggregate {
                g: leaf.metric().g(&s.x, &s.xdot),
                b: leaf.damping(&s.x, &s.xdot),
                potential: leaf.potential().value(&s.x),
                potential_gradient: leaf.potential().gradient(&s.x),
                dissipation: leaf.dissipation(&s.x, &s.xdot),
            }
        } else {
            let d = tree.node_dim(id);
            let mut agg = NodeAggregate {
                g: DMatrix::zeros(d, d),
                b: Some(DMatrix::zeros(d, d)),
                potential: 0.0,
                potential_gradient: DVector::zeros(d),
                dissipation: 0.0,
            };
            for &c in tree.children(id) {
                let child = out[c.index()].as_ref().expect("children first");
                let j = forward.jacobians[c.index()].as_ref().expect("child edge");
                let jt = j.transpose();
                agg.g += &jt * &child.g * j;
                agg.b = match (agg.b.take(), &child.b) {
                    (Some(b), Some(cb)) => Some(b + &jt * cb * j),
                    _ => None,
                };
                agg.potential += child.potential;
                agg.potential_gradient += &jt * &child.potential_gradient;
                agg.dissipation += child.dissipation;
            }
            agg
        };
        out[id.index()] = Some(agg);
    }
    out.into_iter().map(|a| a.expect("all nodes visited")).collect()
}

fn all_gds_below(tree: &RmpTree, id: NodeId) -> bool {
    match tree.leaf(id) {
        Some(l) => l.is_gds(),
        None => tree.children(id).iter().all(|&c| all_gds_below(tree, c)),
    }
}

/// `V` for every node, from the recursion.
pub fn node_energies(tree: &RmpTree, forward: &ForwardPass) -> Vec<NodeEnergy> {
    let aggs = node_aggregates(tree, forward);
    tree.node_ids()
        .map(|id| {
            let a = &aggs[id.index()];
            let xdot = &forward.state(id).xdot;
            let kinetic = 0.5 * xdot.dot(&(&a.g * xdot));
            NodeEnergy {
                path: tree.path(id).to_string(),
                value: kinetic + a.potential,
                kinetic,
                potential: a.potential,
                predicted_rate: -a.dissipation,
                exact: all_gds_below(tree, id),
            }
        })
        .collect()
}

pub fn root_aggregate(tree: &RmpTree, forward: &ForwardPass) -> RootAggregate {
    let a = node_aggregates(tree, forward).swap_remove(0);
    let qdot = &forward.state(tree.root()).xdot;
    let value = 0.5 * qdot.dot(&(&a.g * qdot)) + a.potential;
    RootAggregate {
        g: a.g,
        b: a.b,
        potential: a.potential,
        potential_gradient: a.potential_gradient,
        value,
    }
}

/// Root quantities from flattened root-to-leaf Jacobians instead of the
/// node-by-node recursion.
pub fn flattened_root_aggregate(tree: &RmpTree, forward: &ForwardPass) -> RootAggregate {
    let d = tree.dim();
    let mut g = DMatrix::zeros(d, d);
    let mut b = Some(DMatrix::zeros(d, d));
    let mut potential = 0.0;
    let mut grad = DVector::zeros(d);
    for id in tree.leaves() {
        let leaf = tree.leaf(id).expect("leaf");
        let s = forward.state(id);
        let j = forward.root_jacobian(id);
        let jt = j.transpose();
        g += &jt * leaf.metric().g(&s.x, &s.xdot) * j;
        b = match (b, leaf.damping(&s.x, &s.xdot)) {
            (Some(acc), Some(lb)) => Some(acc + &jt * lb * j),
            _ => None,
        };
        potential += leaf.potential().value(&s.x);
        grad += &jt * leaf.potential().gradient(&s.x);
    }
    let qdot = &forward.state(tree.root()).xdot;
    let value = 0.5 * qdot.dot(&(&g * qdot)) + potential;
    RootAggregate {
        g,
        b,
        potential,
        potential_gradient: grad,
        value,
    }
}

/// Energy bookkeeping at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub value: f64,
    pub leaf_sum: f64,
    pub predicted_rate: f64,
    pub min_singular_value: f64,
}

pub fn energy_sample(tree: &RmpTree, node: NodeId, state: &NodeState) -> Result<EnergySample> {
    let forward = tree.pushforward(state)?;
    let energies = node_energies(tree, &forward);
    let e = &energies[node.index()];
    let leaf_sum = leaves_below(tree, node)
        .into_iter()
        .map(|l| energies[l.index()].value)
        .sum();
    Ok(EnergySample {
        value: e.value,
        leaf_sum,
        predicted_rate: e.predicted_rate,
        min_singular_value: stacked_jacobian_rank(tree, &forward).1,
    })
}

fn leaves_below(tree: &RmpTree, id: NodeId) -> Vec<NodeId> {
    if tree.leaf(id).is_some() {
        return vec![id];
    }
    tree.children(id).iter().flat_map(|&c| leaves_below(tree, c)).collect()
}

fn stacked_jacobian_rank(tree: &RmpTree, forward: &ForwardPass) -> (usize, f64) {
    let leaves = tree.leaves();
    let rows: usize = leaves.iter().map(|&l| tree.node_dim(l)).sum();
    let mut stacked = DMatrix::zeros(rows, tree.dim());
    let mut r = 0;
    for l in leaves {
        let j = forward.root_jacobian(l);
        stacked.rows_mut(r, j.nrows()).copy_from(j);
        r += j.nrows();
    }
    linalg::rank_and_min_singular(&stacked, SVD_CUTOFF)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// All leaves are GDS: `V̇ = −q̇ᵀBq̇` must hold with equality.
    Equality,
    /// Some leaf is CLF: `V̇ ≤ −Σ U_k` must hold.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub t: f64,
    pub v_r: f64,
    pub vdot_fd: f64,
    pub vdot_bound: f64,
    pub violation: f64,
    pub tolerance: f64,
    pub min_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub node: String,
    pub mode: DecayMode,
    pub records: Vec<DecayRecord>,
    /// `max |V − Σ V_leaf| / max(1, |V|)` over all steps.
    pub max_decomposition_error: f64,
    pub max_violation: f64,
    pub worst_time: f64,
    pub pass_fraction: f64,
    pub passed: bool,
    /// Time-varying nominal controllers were present.
    pub heuristic: bool,
}

/// Per-step tolerance for a central-difference rate at step `h`.
pub fn decay_tolerance(h: f64, vdot: f64) -> f64 {
    DECAY_TOLERANCE.max(5.0 * h * h) * (1.0 + vdot.abs())
}

/// Decay check at the root.
pub fn check_decay(tree: &RmpTree, times: &[f64], states: &[NodeState]) -> Result<DecayReport> {
    check_node_decay(tree, tree.root(), times, states)
}

/// Central-difference `V̇_u` compared against `−Σ U` of the leaves below `node`.
pub fn check_node_decay(tree: &RmpTree, node: NodeId, times: &[f64], states: &[NodeState]) -> Result<DecayReport> {
    if times.len() != states.len() {
        return Err(Error::Verification(format!(
            "{} times but {} states",
            times.len(),
            states.len()
        )));
    }
    if states.len() < 3 {
        return Err(Error::Verification(format!(
            "trajectory has {} samples; central differences need at least 3",
            states.len()
        )));
    }
    let mode = if all_gds_below(tree, node) {
        DecayMode::Equality
    } else {
        DecayMode::Bound
    };
    let samples = states
        .iter()
        .map(|s| energy_sample(tree, node, s))
        .collect::<Result<Vec<_>>>()?;
    let max_decomposition_error = samples
        .iter()
        .map(|s| (s.value - s.leaf_sum).abs() / s.value.abs().max(1.0))
        .fold(0.0, f64::max);
    let mut records = Vec::with_capacity(samples.len() - 2);
    for i in 1..samples.len() - 1 {
        let dt = times[i + 1] - times[i - 1];
        let vdot_fd = (samples[i + 1].value - samples[i - 1].value) / dt;
        let bound = samples[i].predicted_rate;
        let violation = match mode {
            DecayMode::Equality => (vdot_fd - bound).abs(),
            DecayMode::Bound => (vdot_fd - bound).max(0.0),
        };
        records.push(DecayRecord {
            t: times[i],
            v_r: samples[i].value,
            vdot_fd,
            vdot_bound: bound,
            violation,
            tolerance: decay_tolerance(0.5 * dt, vdot_fd),
            min_singular_value: samples[i].min_singular_value,
        });
    }
    let (max_violation, worst_time) = records
        .iter()
        .fold((0.0, times[0]), |(m, t), r| if r.violation > m { (r.violation, r.t) } else { (m, t) });
    let ok = records.iter().filter(|r| r.violation <= r.tolerance).count();
    let pass_fraction = ok as f64 / records.len() as f64;
    Ok(DecayReport {
        node: tree.path(node).to_string(),
        mode,
        records,
        max_decomposition_error,
        max_violation,
        worst_time,
        pass_fraction,
        passed: pass_fraction >= DECAY_PASS_FRACTION,
        heuristic: tree.has_heuristic_leaves(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantSetKind {
    /// `q̇ = 0` and `Σ Jᵀ f = 0`.
    ForceBalance,
    /// `q̇ = 0` and `∇Φ_r = 0`.
    PotentialCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSetTolerances {
    pub velocity: f64,
    pub force_sum: f64,
    pub potential_gradient: f64,
}

impl Default for InvariantSetTolerances {
    fn default() -> Self {
        Self {
            velocity: 1e-3,
            force_sum: 1e-3,
            potential_gradient: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSetReport {
    pub kind: InvariantSetKind,
    pub velocity_norm: f64,
    pub force_sum_norm: f64,
    pub potential_gradient_norm: f64,
    pub member: bool,
}

pub fn check_invariant_set(
    tree: &RmpTree,
    state: &NodeState,
    t: f64,
    kind: InvariantSetKind,
    tol: InvariantSetTolerances,
) -> Result<InvariantSetReport> {
    let eval = tree.evaluate(state, t)?;
    let force_sum_norm = eval.leaf_force_sum(tree).norm();
    let potential_gradient_norm = root_aggregate(tree, &eval.forward).potential_gradient.norm();
    let velocity_norm = state.xdot.norm();
    let member = velocity_norm < tol.velocity
        && match kind {
            InvariantSetKind::ForceBalance => force_sum_norm < tol.force_sum,
            InvariantSetKind::PotentialCritical => potential_gradient_norm < tol.potential_gradient,
        };
    Ok(InvariantSetReport {
        kind,
        velocity_norm,
        force_sum_norm,
        potential_gradient_norm,
        member,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmersionSample {
    pub rank: usize,
    pub min_singular_value: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmersionReport {
    pub dim: usize,
    pub samples: Vec<ImmersionSample>,
    pub full_rank: bool,
    pub min_singular_value: f64,
    pub warnings: Vec<String>,
}

/// Rank of the stacked root-to-leaf Jacobian at each state. Advisory only.
pub fn check_immersion(tree: &RmpTree, states: &[NodeState]) -> ImmersionReport {
    let d = tree.dim();
    let mut samples = Vec::with_capacity(states.len());
    let mut warnings = Vec::new();
    for (i, s) in states.iter().enumerate() {
        match tree.pushforward(s) {
            Ok(forward) => {
                let (rank, min_sv) = stacked_jacobian_rank(tree, &forward);
                if rank < d {
                    warnings.push(format!("sample {i}: stacked task Jacobian has rank {rank} < {d}"));
                }
                samples.push(ImmersionSample {
                    rank,
                    min_singular_value: min_sv,
                    note: None,
                });
            }
            Err(e) => {
                warnings.push(format!("sample {i}: {e}"));
                samples.push(ImmersionSample {
                    rank: 0,
                    min_singular_value: 0.0,
                    note: Some(e.to_string()),
                });
            }
        }
    }
    let full_rank = !samples.is_empty() && samples.iter().all(|s| s.rank == d);
    let min_singular_value = samples.iter().map(|s| s.min_singular_value).fold(f64::INFINITY, f64::min);
    ImmersionReport {
        dim: d,
        samples,
        full_rank,
        min_singular_value,
        warnings,
    }
}
