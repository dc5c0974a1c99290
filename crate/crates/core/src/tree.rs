//! The RMP-tree and its evaluation.
//!
//! Evaluation is an explicit two-pass algorithm: a forward pass pushes the
//! root state to every node, leaves are evaluated, then a backward pass pulls
//! the natural-form RMPs up to the root where they are resolved. Every
//! intermediate quantity is kept in [`TreeEvaluation`] so the verification
//! code can inspect it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lyapunov::NodeEnergy;
use crate::policy::{LeafEval, LeafPolicy};
use crate::rmp::{self, ChildTerm, ConditionWarning, NodeState, RmpCanonical, RmpNatural};
use crate::task_map::{self, SharedMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    path: String,
    dim: usize,
    parent: Option<NodeId>,
    edge: Option<SharedMap>,
    children: Vec<NodeId>,
    leaf: Option<Arc<LeafPolicy>>,
}

/// Directed tree of task spaces rooted at the configuration space.
///
/// Nodes are stored in insertion order, which is always topological because
/// a child can only be attached to an existing parent.
#[derive(Debug, Clone)]
pub struct RmpTree {
    nodes: Vec<Node>,
}

impl RmpTree {
    pub const ROOT_NAME: &'static str = "root";

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structure("root dimension must be >= 1".into()));
        }
        Ok(Self {
            nodes: vec![Node {
                name: Self::ROOT_NAME.into(),
                path: Self::ROOT_NAME.into(),
                dim,
                parent: None,
                edge: None,
                children: Vec::new(),
                leaf: None,
            }],
        })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn attach(&mut self, parent: NodeId, name: &str, map: SharedMap, leaf: Option<LeafPolicy>) -> Result<NodeId> {
        let p = self
            .nodes
            .get(parent.0)
            .ok_or_else(|| Error::Structure(format!("unknown parent node {}", parent.0)))?;
        if p.leaf.is_some() {
            return Err(Error::Structure(format!("cannot attach `{name}` below leaf `{}`", p.path)));
        }
        if name.is_empty() || name.contains('/') {
            return Err(Error::Structure(format!("invalid node name `{name}`")));
        }
        let path = format!("{}/{}", p.path, name);
        if p.children.iter().any(|c| self.nodes[c.0].name == name) {
            return Err(Error::Structure(format!("duplicate node path `{path}`")));
        }
        if map.dim_in() != p.dim {
            return Err(Error::Dimension {
                path,
                expected: p.dim,
                got: map.dim_in(),
            });
        }
        let dim = map.dim_out();
        if let Some(policy) = &leaf {
            if policy.dim() != dim {
                return Err(Error::Dimension {
                    path,
                    expected: dim,
                    got: policy.dim(),
                });
            }
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            name: name.to_string(),
            path,
            dim,
            parent: Some(parent),
            edge: Some(map),
            children: Vec::new(),
            leaf: leaf.map(Arc::new),
        });
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    /// Adds an internal node reached from `parent` through `map`.
    pub fn add_node(&mut self, parent: NodeId, name: &str, map: SharedMap) -> Result<NodeId> {
        self.attach(parent, name, map, None)
    }

    pub fn add_leaf(&mut self, parent: NodeId, name: &str, map: SharedMap, policy: LeafPolicy) -> Result<NodeId> {
        self.attach(parent, name, map, Some(policy))
    }

    /// Exactly the childless nodes carry leaf policies, and there is at least one leaf.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::Structure("tree has no leaves".into()));
        }
        for node in &self.nodes {
            match (&node.leaf, node.children.is_empty()) {
                (None, true) => {
                    return Err(Error::Structure(format!("node `{}` has neither children nor a policy", node.path)))
                }
                (Some(_), false) => {
                    return Err(Error::Structure(format!("leaf `{}` has children", node.path)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn path(&self, id: NodeId) -> &str {
        &self.nodes[id.0].path
    }

    pub fn node_dim(&self, id: NodeId) -> usize {
        self.nodes[id.0].dim
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn edge(&self, id: NodeId) -> Option<&SharedMap> {
        self.nodes[id.0].edge.as_ref()
    }

    pub fn leaf(&self, id: NodeId) -> Option<&LeafPolicy> {
        self.nodes[id.0].leaf.as_deref()
    }

    pub fn find(&self, path: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.path == path).map(NodeId)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.node_ids().filter(|&id| self.nodes[id.0].leaf.is_some()).collect()
    }

    pub fn all_leaves_gds(&self) -> bool {
        self.leaves().iter().all(|&id| self.leaf(id).is_some_and(LeafPolicy::is_gds))
    }

    pub fn has_heuristic_leaves(&self) -> bool {
        self.leaves().iter().any(|&id| self.leaf(id).is_some_and(LeafPolicy::is_heuristic))
    }

    /// Composed maps `ψ_{r→l}` from the root to every leaf.
    pub fn leaf_maps(&self) -> Result<Vec<(NodeId, SharedMap)>> {
        let mut composed: Vec<Option<SharedMap>> = vec![None; self.nodes.len()];
        composed[0] = Some(task_map::identity(self.dim())?);
        for id in 1..self.nodes.len() {
            let node = &self.nodes[id];
            let parent = node.parent.expect("non-root node has a parent").0;
            let inner = composed[parent].clone().expect("parents precede children");
            let edge = node.edge.clone().expect("non-root node has an edge");
            composed[id] = Some(task_map::compose(edge, inner)?);
        }
        Ok(self
            .leaves()
            .into_iter()
            .map(|id| (id, composed[id.0].clone().expect("computed above")))
            .collect())
    }

    /// Copy of the tree with an identity node spliced in above `node`.
    pub fn with_identity_inserted(&self, node: NodeId, name: &str) -> Result<RmpTree> {
        if node.0 == 0 || node.0 >= self.nodes.len() {
            return Err(Error::Structure("identity insertion needs a non-root node".into()));
        }
        let mut out = RmpTree::new(self.dim())?;
        self.copy_subtree(NodeId(0), out.root(), node, name, &mut out)?;
        Ok(out)
    }

    fn copy_subtree(&self, src: NodeId, dst: NodeId, splice: NodeId, name: &str, out: &mut RmpTree) -> Result<()> {
        for &child in &self.nodes[src.0].children {
            let c = &self.nodes[child.0];
            let parent = if child == splice {
                out.add_node(dst, name, task_map::identity(self.nodes[src.0].dim)?)?
            } else {
                dst
            };
            let edge = c.edge.clone().expect("child has an edge");
            let new_id = match &c.leaf {
                Some(policy) => out.add_leaf(parent, &c.name, edge, (**policy).clone())?,
                None => out.add_node(parent, &c.name, edge)?,
            };
            self.copy_subtree(child, new_id, splice, name, out)?;
        }
        Ok(())
    }

    /// Forward pass: states, edge Jacobians and curvatures at every node.
    pub fn pushforward(&self, root_state: &NodeState) -> Result<ForwardPass> {
        if root_state.dim() != self.dim() || root_state.xdot.len() != self.dim() {
            return Err(Error::Dimension {
                path: Self::ROOT_NAME.into(),
                expected: self.dim(),
                got: root_state.dim(),
            });
        }
        let n = self.nodes.len();
        let mut states = Vec::with_capacity(n);
        let mut jacobians = Vec::with_capacity(n);
        let mut curvatures = Vec::with_capacity(n);
        let mut root_jacobians: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        states.push(root_state.clone());
        jacobians.push(None);
        curvatures.push(None);
        root_jacobians.push(DMatrix::identity(self.dim(), self.dim()));
        for node in &self.nodes[1..] {
            let parent = node.parent.expect("non-root").0;
            let map = node.edge.as_ref().expect("non-root");
            let ps: &NodeState = &states[parent];
            let x = map.psi(&ps.x).map_err(|e| e.at(&node.path))?;
            let j = map.jacobian(&ps.x).map_err(|e| e.at(&node.path))?;
            let c = map.curvature(&ps.x, &ps.xdot).map_err(|e| e.at(&node.path))?;
            if x.len() != node.dim || j.nrows() != node.dim || j.ncols() != ps.dim() || c.len() != node.dim {
                return Err(Error::Dimension {
                    path: node.path.clone(),
                    expected: node.dim,
                    got: x.len(),
                });
            }
            if !linalg::is_finite_matrix(&j) {
                return Err(Error::NonFinite {
                    path: node.path.clone(),
                    what: "jacobian",
                });
            }
            if !linalg::is_finite_vector(&c) {
                return Err(Error::NonFinite {
                    path: node.path.clone(),
                    what: "curvature",
                });
            }
            let xdot = &j * &ps.xdot;
            let rj = &j * &root_jacobians[parent];
            states.push(NodeState { x, xdot });
            jacobians.push(Some(j));
            curvatures.push(Some(c));
            root_jacobians.push(rj);
        }
        Ok(ForwardPass {
            states,
            jacobians,
            curvatures,
            root_jacobians,
        })
    }

    /// Full RMPflow evaluation at `root_state` and time `t`.
    pub fn evaluate(&self, root_state: &NodeState, t: f64) -> Result<TreeEvaluation> {
        self.validate()?;
        let forward = self.pushforward(root_state)?;
        let n = self.nodes.len();
        let mut leaf_evals: Vec<Option<LeafEval>> = vec![None; n];
        let mut rmps: Vec<Option<RmpNatural>> = vec![None; n];
        for (id, node) in self.nodes.iter().enumerate() {
            if let Some(policy) = &node.leaf {
                let s = &forward.states[id];
                let out = policy.evaluate(&s.x, &s.xdot, t).map_err(|e| match e {
                    Error::NonFinite { what, .. } => Error::NonFinite {
                        path: node.path.clone(),
                        what,
                    },
                    other => other.at(&node.path),
                })?;
                rmps[id] = Some(out.rmp.clone());
                leaf_evals[id] = Some(out);
            }
        }
        for id in (0..n).rev() {
            let node = &self.nodes[id];
            if node.leaf.is_some() {
                continue;
            }
            let terms: Vec<ChildTerm<'_>> = node
                .children
                .iter()
                .map(|c| ChildTerm {
                    rmp: rmps[c.0].as_ref().expect("children are pulled back first"),
                    jacobian: forward.jacobians[c.0].as_ref().expect("child edge"),
                    curvature: forward.curvatures[c.0].as_ref().expect("child edge"),
                })
                .collect();
            let pulled = rmp::pullback(node.dim, &terms).map_err(|e| e.at(&node.path))?;
            if !pulled.is_finite() {
                return Err(Error::NonFinite {
                    path: node.path.clone(),
                    what: "pullback",
                });
            }
            rmps[id] = Some(pulled);
        }
        let rmps: Vec<RmpNatural> = rmps.into_iter().map(|r| r.expect("every node evaluated")).collect();
        let (root, warning) = rmp::resolve_with_diagnostics(&rmps[0]);
        Ok(TreeEvaluation {
            forward,
            leaf_evals,
            rmps,
            root,
            warning,
        })
    }
}

/// Everything the forward pass computed, indexed by [`NodeId`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub states: Vec<NodeState>,
    /// Edge Jacobian into each node, evaluated at the parent state.
    pub jacobians: Vec<Option<DMatrix<f64>>>,
    /// Edge curvature `J̇ẋ` into each node.
    pub curvatures: Vec<Option<DVector<f64>>>,
    /// Composed Jacobian `J_{r→node}`.
    pub root_jacobians: Vec<DMatrix<f64>>,
}

impl ForwardPass {
    pub fn state(&self, id: NodeId) -> &NodeState {
        &self.states[id.0]
    }

    pub fn root_jacobian(&self, id: NodeId) -> &DMatrix<f64> {
        &self.root_jacobians[id.0]
    }
}

#[derive(Debug, Clone)]
pub struct TreeEvaluation {
    pub forward: ForwardPass,
    pub leaf_evals: Vec<Option<LeafEval>>,
    /// Natural-form RMP at every node.
    pub rmps: Vec<RmpNatural>,
    pub root: RmpCanonical,
    pub warning: Option<ConditionWarning>,
}

impl TreeEvaluation {
    /// The control `u = a_r`.
    pub fn control(&self) -> &DVector<f64> {
        &self.root.a
    }

    pub fn rmp(&self, id: NodeId) -> &RmpNatural {
        &self.rmps[id.0]
    }

    pub fn active_constraints(&self) -> usize {
        self.leaf_evals.iter().flatten().filter(|e| e.constraint_active).count()
    }

    /// `Σ_k J_{r→l_k}ᵀ f_{l_k}`.
    pub fn leaf_force_sum(&self, tree: &RmpTree) -> DVector<f64> {
        let mut sum = DVector::zeros(tree.dim());
        for id in tree.leaves() {
            let f = &self.rmps[id.0].f;
            sum += self.forward.root_jacobian(id).transpose() * f;
        }
        sum
    }

    /// Structured per-node dump keyed by node path.
    pub fn dump(&self, tree: &RmpTree, energies: Option<&[NodeEnergy]>) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for id in tree.node_ids() {
            let s = self.forward.state(id);
            let r = self.rmp(id);
            let m: Vec<Vec<f64>> = r.m.row_iter().map(|row| row.iter().copied().collect()).collect();
            let mut entry = json!({
                "x": s.x.as_slice(),
                "xdot": s.xdot.as_slice(),
                "f": r.f.as_slice(),
                "M": m,
            });
            if let Some(e) = self.leaf_evals[id.index()].as_ref() {
                entry["constraint_active"] = json!(e.constraint_active);
            }
            if let Some(en) = energies.and_then(|es| es.iter().find(|e| e.path == tree.path(id))) {
                entry["V"] = json!(en.value);
                entry["kinetic"] = json!(en.kinetic);
                entry["potential"] = json!(en.potential);
                entry["predicted_rate"] = json!(en.predicted_rate);
            }
            map.insert(tree.path(id).to_string(), entry);
        }
        json!({
            "control": self.root.a.as_slice(),
            "nodes": map,
        })
    }
}
