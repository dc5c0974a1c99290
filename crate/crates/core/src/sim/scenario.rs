//! Scenario presets and the declarative tree builder behind them.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{LeafSpec, NominalShape, WeightKind};
use crate::rmp::NodeState;
use crate::task_map::TaskMapSpec;
use crate::tree::RmpTree;

use super::SimConfig;

/// Leaf used to drive a robot to its goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractorKind {
    Potential,
    Spiral,
    Sinusoidal,
    /// Damped GDS attractor with the same potential; yields an all-GDS tree.
    Gds,
}

impl AttractorKind {
    fn nominal(self) -> Option<NominalShape> {
        match self {
            AttractorKind::Potential => Some(NominalShape::Potential),
            AttractorKind::Spiral => Some(NominalShape::Spiral),
            AttractorKind::Sinusoidal => Some(NominalShape::Sinusoidal),
            AttractorKind::Gds => None,
        }
    }
}

impl std::str::FromStr for AttractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(AttractorKind::Potential),
            "spiral" => Ok(AttractorKind::Spiral),
            "sinusoidal" => Ok(AttractorKind::Sinusoidal),
            "gds" => Ok(AttractorKind::Gds),
            other => Err(Error::Config(format!(
                "unknown nominal `{other}` (expected potential, spiral, sinusoidal or gds)"
            ))),
        }
    }
}

/// Gains shared by attractor leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorGains {
    /// Soft-norm potential gain `k`.
    pub gain: f64,
    /// Class-K gain `η` in `α(s) = ηs²` for CLF leaves.
    pub eta: f64,
    /// Damping `β` for GDS attractors.
    pub damping: f64,
    pub weight: WeightKind,
}

impl Default for AttractorGains {
    fn default() -> Self {
        Self {
            gain: 1.0,
            eta: 1.0,
            damping: 2.0,
            weight: WeightKind::Identity,
        }
    }
}

impl AttractorGains {
    fn leaf(&self, kind: AttractorKind, goal: &[f64]) -> LeafSpec {
        match kind.nominal() {
            Some(nominal) => LeafSpec::ClfAttractor {
                goal: goal.to_vec(),
                gain: self.gain,
                nominal,
                eta: self.eta,
                weight: self.weight,
            },
            None => LeafSpec::GdsAttractor {
                goal: goal.to_vec(),
                gain: self.gain,
                damping: self.damping,
            },
        }
    }
}

/// Barrier leaf parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierGains {
    pub damping: f64,
    pub epsilon: f64,
}

impl Default for BarrierGains {
    fn default() -> Self {
        Self {
            damping: 1.0,
            epsilon: crate::policy::BarrierMetric::DEFAULT_EPSILON,
        }
    }
}

impl BarrierGains {
    fn leaf(&self) -> LeafSpec {
        LeafSpec::GdsCollision {
            damping: self.damping,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Goal2dConfig {
    pub nominal: AttractorKind,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub obstacle_center: [f64; 2],
    /// Zero disables the obstacle.
    pub obstacle_radius: f64,
    pub attractor: AttractorGains,
    pub barrier: BarrierGains,
}

impl Default for Goal2dConfig {
    fn default() -> Self {
        Self {
            nominal: AttractorKind::Potential,
            start: [-2.5, 0.0],
            goal: [2.5, 0.0],
            obstacle_center: [0.0, 0.3],
            obstacle_radius: 0.5,
            attractor: AttractorGains::default(),
            barrier: BarrierGains::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MultiRobotLayout {
    /// Robots evenly spaced on a circle, each heading to the antipode.
    Antipodal { radius: f64 },
    /// Parallel lanes `y = (i − (n−1)/2)·spacing` from `x = −half_length` to `x = half_length`.
    Lanes { spacing: f64, half_length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiRobotConfig {
    pub n_robots: usize,
    pub nominal: AttractorKind,
    pub layout: MultiRobotLayout,
    /// Barrier radius on center-to-center distance.
    pub safety_radius: f64,
    pub robot_radius: f64,
    /// Uniform initial position jitter half-width, drawn from the run seed.
    pub jitter: f64,
    pub attractor: AttractorGains,
    pub barrier: BarrierGains,
}

impl Default for MultiRobotConfig {
    fn default() -> Self {
        Self {
            n_robots: 4,
            nominal: AttractorKind::Spiral,
            layout: MultiRobotLayout::Antipodal { radius: 2.0 },
            safety_radius: 0.25,
            robot_radius: 0.1,
            jitter: 0.0,
            attractor: AttractorGains::default(),
            barrier: BarrierGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationConfig {
    pub n_robots: usize,
    pub leader_nominal: AttractorKind,
    pub side_length: f64,
    /// Leader goal relative to its start.
    pub leader_goal_offset: [f64; 2],
    /// Add the two leader diagonals, making the edge graph minimally rigid for five robots.
    pub leader_diagonals: bool,
    pub edge_gain: f64,
    pub edge_damping: f64,
    pub edge_metric: f64,
    pub follower_metric: f64,
    pub follower_damping: f64,
    pub safety_radius: f64,
    pub attractor: AttractorGains,
    pub barrier: BarrierGains,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            n_robots: 5,
            leader_nominal: AttractorKind::Spiral,
            side_length: 1.0,
            leader_goal_offset: [3.0, 1.0],
            leader_diagonals: true,
            edge_gain: 4.0,
            edge_damping: 2.0,
            edge_metric: 1.0,
            follower_metric: 0.1,
            follower_damping: 0.5,
            safety_radius: 0.25,
            attractor: AttractorGains::default(),
            barrier: BarrierGains::default(),
        }
    }
}

/// One node of a declarative tree; `parent` is a node path such as `root/robot0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    #[serde(default = "root_path")]
    pub parent: String,
    pub map: TaskMapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<LeafSpec>,
}

fn root_path() -> String {
    RmpTree::ROOT_NAME.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub robot: usize,
    pub goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationEdge {
    pub i: usize,
    pub j: usize,
    pub length: f64,
}

/// Fully explicit scenario: tree, initial state and bookkeeping for metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    #[serde(default = "custom_name")]
    pub name: String,
    pub dim: usize,
    #[serde(default = "two")]
    pub robot_dim: usize,
    pub initial_q: Vec<f64>,
    #[serde(default)]
    pub initial_qdot: Option<Vec<f64>>,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub formation_edges: Vec<FormationEdge>,
}

fn custom_name() -> String {
    "custom".into()
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Goal2d(Goal2dConfig),
    MultiRobot(MultiRobotConfig),
    Formation(FormationConfig),
    Custom(CustomConfig),
}

impl ScenarioConfig {
    /// Preset by name with default parameters.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "goal2d" => Ok(ScenarioConfig::Goal2d(Goal2dConfig::default())),
            "multi_robot" | "multi-robot" => Ok(ScenarioConfig::MultiRobot(MultiRobotConfig::default())),
            "formation" => Ok(ScenarioConfig::Formation(FormationConfig::default())),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected goal2d, multi_robot or formation)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ScenarioConfig::Goal2d(_) => "goal2d",
            ScenarioConfig::MultiRobot(_) => "multi_robot",
            ScenarioConfig::Formation(_) => "formation",
            ScenarioConfig::Custom(c) => &c.name,
        }
    }

    /// Integration step suited to the preset. The pairwise barriers of the
    /// multi-robot preset are stiff near contact, so it needs a finer step.
    pub fn default_step(&self) -> f64 {
        match self {
            ScenarioConfig::MultiRobot(_) => 1e-3,
            _ => SimConfig::default().step,
        }
    }

    /// Replaces the attractor nominal of goal2d and multi-robot presets, or the leader's in a formation.
    pub fn set_nominal(&mut self, kind: AttractorKind) -> Result<()> {
        match self {
            ScenarioConfig::Goal2d(c) => c.nominal = kind,
            ScenarioConfig::MultiRobot(c) => c.nominal = kind,
            ScenarioConfig::Formation(c) => c.leader_nominal = kind,
            ScenarioConfig::Custom(_) => {
                return Err(Error::Config("--nominal does not apply to custom scenarios".into()));
            }
        }
        Ok(())
    }

    /// Expands presets into the explicit form.
    pub fn to_custom(&self, seed: u64) -> Result<CustomConfig> {
        match self {
            ScenarioConfig::Goal2d(c) => goal2d(c),
            ScenarioConfig::MultiRobot(c) => multi_robot(c, seed),
            ScenarioConfig::Formation(c) => formation(c),
            ScenarioConfig::Custom(c) => Ok(c.clone()),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Scenario> {
        Scenario::from_custom(self.to_custom(seed)?)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn projection(n_robots: usize, robot: usize) -> TaskMapSpec {
    TaskMapSpec::CoordinateProjection {
        dim_in: 2 * n_robots,
        indices: vec![2 * robot, 2 * robot + 1],
    }
}

fn pair_barrier(n_robots: usize, i: usize, j: usize, safety_radius: f64, barrier: &BarrierGains) -> NodeConfig {
    NodeConfig {
        name: format!("pair{i}_{j}"),
        parent: root_path(),
        map: TaskMapSpec::Compose {
            outer: Box::new(TaskMapSpec::DistanceToSphere {
                center: vec![0.0, 0.0],
                radius: safety_radius,
            }),
            inner: Box::new(TaskMapSpec::PairwiseDisplacement {
                i,
                j,
                per_robot_dim: 2,
                n_robots,
            }),
        },
        leaf: Some(barrier.leaf()),
    }
}

fn goal2d(c: &Goal2dConfig) -> Result<CustomConfig> {
    let mut nodes = vec![NodeConfig {
        name: "attractor".into(),
        parent: root_path(),
        map: TaskMapSpec::Identity { dim: 2 },
        leaf: Some(c.attractor.leaf(c.nominal, &c.goal)),
    }];
    let mut obstacles = Vec::new();
    if c.obstacle_radius < 0.0 {
        return Err(Error::Config(format!(
            "obstacle radius must be >= 0, got {}",
            c.obstacle_radius
        )));
    }
    if c.obstacle_radius > 0.0 {
        nodes.push(NodeConfig {
            name: "obstacle".into(),
            parent: root_path(),
            map: TaskMapSpec::DistanceToSphere {
                center: c.obstacle_center.to_vec(),
                radius: c.obstacle_radius,
            },
            leaf: Some(c.barrier.leaf()),
        });
        obstacles.push(Obstacle {
            center: c.obstacle_center.to_vec(),
            radius: c.obstacle_radius,
        });
    }
    Ok(CustomConfig {
        name: "goal2d".into(),
        dim: 2,
        robot_dim: 2,
        initial_q: c.start.to_vec(),
        initial_qdot: None,
        nodes,
        targets: vec![Target {
            robot: 0,
            goal: c.goal.to_vec(),
        }],
        obstacles,
        formation_edges: Vec::new(),
    })
}

fn multi_robot(c: &MultiRobotConfig, seed: u64) -> Result<CustomConfig> {
    let n = c.n_robots;
    if n < 2 {
        return Err(Error::Config(format!("multi_robot needs at least 2 robots, got {n}")));
    }
    positive("safety_radius", c.safety_radius)?;
    if !(c.jitter >= 0.0) {
        return Err(Error::Config(format!("jitter must be >= 0, got {}", c.jitter)));
    }
    let (starts, goals): (Vec<[f64; 2]>, Vec<[f64; 2]>) = match c.layout {
        MultiRobotLayout::Antipodal { radius } => {
            positive("layout radius", radius)?;
            (0..n)
                .map(|i| {
                    let th = std::f64::consts::TAU * i as f64 / n as f64;
                    let (s, co) = th.sin_cos();
                    ([radius * co, radius * s], [-radius * co, -radius * s])
                })
                .unzip()
        }
        MultiRobotLayout::Lanes { spacing, half_length } => {
            positive("lane spacing", spacing)?;
            positive("lane half_length", half_length)?;
            (0..n)
                .map(|i| {
                    let y = (i as f64 - (n as f64 - 1.0) / 2.0) * spacing;
                    ([-half_length, y], [half_length, y])
                })
                .unzip()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut initial_q = Vec::with_capacity(2 * n);
    for s in &starts {
        for v in s {
            let offset = if c.jitter > 0.0 {
                rng.gen_range(-c.jitter..=c.jitter)
            } else {
                0.0
            };
            initial_q.push(v + offset);
        }
    }
    let mut nodes = Vec::new();
    let mut targets = Vec::new();
    for (i, g) in goals.iter().enumerate() {
        nodes.push(NodeConfig {
            name: format!("robot{i}"),
            parent: root_path(),
            map: projection(n, i),
            leaf: Some(c.attractor.leaf(c.nominal, g)),
        });
        targets.push(Target {
            robot: i,
            goal: g.to_vec(),
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            nodes.push(pair_barrier(n, i, j, c.safety_radius, &c.barrier));
        }
    }
    Ok(CustomConfig {
        name: "multi_robot".into(),
        dim: 2 * n,
        robot_dim: 2,
        initial_q,
        initial_qdot: None,
        nodes,
        targets,
        obstacles: Vec::new(),
        formation_edges: Vec::new(),
    })
}

/// Vertices of a regular polygon with the given side, vertex 0 at the origin.
fn polygon(n: usize, side: f64) -> Vec<[f64; 2]> {
    let circum = side / (2.0 * (std::f64::consts::PI / n as f64).sin());
    let verts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let th = std::f64::consts::PI + std::f64::consts::TAU * i as f64 / n as f64;
            [circum * th.cos(), circum * th.sin()]
        })
        .collect();
    let o = verts[0];
    verts.iter().map(|v| [v[0] - o[0], v[1] - o[1]]).collect()
}

fn formation(c: &FormationConfig) -> Result<CustomConfig> {
    let n = c.n_robots;
    if n != 5 {
        return Err(Error::Config(format!("formation is a pentagon and needs 5 robots, got {n}")));
    }
    positive("side_length", c.side_length)?;
    positive("safety_radius", c.safety_radius)?;
    let verts = polygon(n, c.side_length);
    let dist = |i: usize, j: usize| ((verts[i][0] - verts[j][0]).powi(2) + (verts[i][1] - verts[j][1]).powi(2)).sqrt();
    let mut edges: Vec<FormationEdge> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let (a, b) = (i.min(j), i.max(j));
            FormationEdge {
                i: a,
                j: b,
                length: dist(a, b),
            }
        })
        .collect();
    if c.leader_diagonals {
        for j in 2..n - 1 {
            edges.push(FormationEdge {
                i: 0,
                j,
                length: dist(0, j),
            });
        }
    }
    let leader_goal = [
        verts[0][0] + c.leader_goal_offset[0],
        verts[0][1] + c.leader_goal_offset[1],
    ];
    let mut nodes = vec![NodeConfig {
        name: "leader".into(),
        parent: root_path(),
        map: projection(n, 0),
        leaf: Some(c.attractor.leaf(c.leader_nominal, &leader_goal)),
    }];
    for r in 1..n {
        nodes.push(NodeConfig {
            name: format!("follower{r}"),
            parent: root_path(),
            map: projection(n, r),
            leaf: Some(LeafSpec::GdsDamper {
                dim: 2,
                metric: c.follower_metric,
                damping: c.follower_damping,
            }),
        });
    }
    for e in &edges {
        nodes.push(NodeConfig {
            name: format!("edge{}_{}", e.i, e.j),
            parent: root_path(),
            map: TaskMapSpec::Compose {
                outer: Box::new(TaskMapSpec::DistanceToPoint { goal: vec![0.0, 0.0] }),
                inner: Box::new(TaskMapSpec::PairwiseDisplacement {
                    i: e.i,
                    j: e.j,
                    per_robot_dim: 2,
                    n_robots: n,
                }),
            },
            leaf: Some(LeafSpec::GdsDistance {
                target: e.length,
                gain: c.edge_gain,
                damping: c.edge_damping,
                metric: c.edge_metric,
            }),
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            nodes.push(pair_barrier(n, i, j, c.safety_radius, &c.barrier));
        }
    }
    Ok(CustomConfig {
        name: "formation".into(),
        dim: 2 * n,
        robot_dim: 2,
        initial_q: verts.iter().flat_map(|v| v.iter().copied()).collect(),
        initial_qdot: None,
        nodes,
        targets: vec![Target {
            robot: 0,
            goal: leader_goal.to_vec(),
        }],
        obstacles: Vec::new(),
        formation_edges: edges,
    })
}

/// Built scenario ready for simulation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub tree: RmpTree,
    pub initial: NodeState,
    pub robot_dim: usize,
    pub n_robots: usize,
    pub targets: Vec<Target>,
    pub obstacles: Vec<Obstacle>,
    pub formation_edges: Vec<FormationEdge>,
}

impl Scenario {
    pub fn from_custom(c: CustomConfig) -> Result<Self> {
        if c.robot_dim == 0 || !c.dim.is_multiple_of(c.robot_dim) {
            return Err(Error::Config(format!(
                "dimension {} is not a multiple of robot_dim {}",
                c.dim, c.robot_dim
            )));
        }
        let n_robots = c.dim / c.robot_dim;
        let xdot = c.initial_qdot.clone().unwrap_or_else(|| vec![0.0; c.dim]);
        if c.initial_q.len() != c.dim || xdot.len() != c.dim {
            return Err(Error::Dimension {
                path: RmpTree::ROOT_NAME.into(),
                expected: c.dim,
                got: if c.initial_q.len() != c.dim {
                    c.initial_q.len()
                } else {
                    xdot.len()
                },
            });
        }
        let initial = NodeState::new(DVector::from_vec(c.initial_q.clone()), DVector::from_vec(xdot))?;
        if !initial.is_finite() {
            return Err(Error::Config("initial state must be finite".into()));
        }
        let mut tree = RmpTree::new(c.dim)?;
        for node in &c.nodes {
            let parent = tree
                .find(&node.parent)
                .ok_or_else(|| Error::Config(format!("node `{}`: unknown parent `{}`", node.name, node.parent)))?;
            let map = node.map.build().map_err(|e| e.at(&format!("{}/{}", node.parent, node.name)))?;
            match &node.leaf {
                Some(spec) => {
                    let policy = spec
                        .build()
                        .map_err(|e| e.at(&format!("{}/{}", node.parent, node.name)))?;
                    tree.add_leaf(parent, &node.name, map, policy)?;
                }
                None => {
                    tree.add_node(parent, &node.name, map)?;
                }
            }
        }
        tree.validate()?;
        for t in &c.targets {
            if t.robot >= n_robots || t.goal.len() != c.robot_dim {
                return Err(Error::Config(format!("invalid target for robot {}", t.robot)));
            }
        }
        for o in &c.obstacles {
            if o.center.len() != c.robot_dim || !(o.radius >= 0.0) {
                return Err(Error::Config("invalid obstacle".into()));
            }
        }
        for e in &c.formation_edges {
            if e.i >= n_robots || e.j >= n_robots || e.i == e.j || !(e.length > 0.0) {
                return Err(Error::Config(format!("invalid formation edge {}-{}", e.i, e.j)));
            }
        }
        Ok(Self {
            name: c.name,
            tree,
            initial,
            robot_dim: c.robot_dim,
            n_robots,
            targets: c.targets,
            obstacles: c.obstacles,
            formation_edges: c.formation_edges,
        })
    }

    pub fn robot_position<'a>(&self, x: &'a DVector<f64>, robot: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(robot * self.robot_dim, self.robot_dim)
    }

    fn robot_distance(&self, x: &DVector<f64>, i: usize, j: usize) -> f64 {
        (self.robot_position(x, i) - self.robot_position(x, j)).norm()
    }

    /// Largest robot-to-goal distance over the targets.
    pub fn goal_error(&self, state: &NodeState) -> f64 {
        self.targets
            .iter()
            .map(|t| (self.robot_position(&state.x, t.robot) - DVector::from_column_slice(&t.goal)).norm())
            .fold(0.0, f64::max)
    }

    pub fn targets_within(&self, state: &NodeState, radius: f64) -> bool {
        !self.targets.is_empty() && self.goal_error(state) < radius
    }

    pub fn clearance(&self, state: &NodeState) -> f64 {
        let mut best = f64::INFINITY;
        for r in 0..self.n_robots {
            let p = self.robot_position(&state.x, r);
            for o in &self.obstacles {
                let d = (p - DVector::from_column_slice(&o.center)).norm() - o.radius;
                best = best.min(d);
            }
        }
        best
    }

    pub fn min_pair_distance(&self, state: &NodeState) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.n_robots {
            for j in i + 1..self.n_robots {
                best = best.min(self.robot_distance(&state.x, i, j));
            }
        }
        best
    }

    /// Largest relative edge-length error.
    pub fn formation_error(&self, state: &NodeState) -> f64 {
        self.formation_edges
            .iter()
            .map(|e| (self.robot_distance(&state.x, e.i, e.j) - e.length).abs() / e.length)
            .fold(0.0, f64::max)
    }
}
