//! Closed-loop simulation of `q̈ = u(q, q̇, t)` under an RMP-tree policy.

pub mod export;
pub mod scenario;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov;
use crate::rmp::NodeState;
use crate::tree::{RmpTree, TreeEvaluation};

pub use scenario::{
    AttractorKind, CustomConfig, FormationConfig, FormationEdge, Goal2dConfig, MultiRobotConfig, MultiRobotLayout,
    NodeConfig, Obstacle, Scenario, ScenarioConfig, Target,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    Rk4,
    SemiImplicitEuler,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "semi-implicit-euler" | "euler" => Ok(Integrator::SemiImplicitEuler),
            other => Err(Error::Config(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step in seconds.
    pub step: f64,
    /// Horizon in seconds.
    pub horizon: f64,
    pub integrator: Integrator,
    /// Early stop once ‖q̇‖ is below this and every target is within `position_tol`.
    pub velocity_tol: f64,
    pub position_tol: f64,
    /// Radius used for the time-to-goal metric.
    pub goal_radius: f64,
    /// Keep a per-node dump of every recorded step.
    pub record_nodes: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            horizon: 60.0,
            integrator: Integrator::Rk4,
            velocity_tol: 1e-4,
            position_tol: 1e-4,
            goal_radius: 1e-2,
            record_nodes: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must be at least one step ({})",
                self.horizon, self.step
            )));
        }
        for (name, v) in [
            ("velocity_tol", self.velocity_tol),
            ("position_tol", self.position_tol),
            ("goal_radius", self.goal_radius),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    /// Every target came within the goal radius for the first time.
    GoalReached { t: f64 },
    Converged { t: f64 },
    HorizonReached { t: f64 },
    PolicyError { t: f64, message: String },
    NonFinite { t: f64 },
    /// The root inertia was close to the pseudoinverse cutoff.
    IllConditioned { t: f64, min_singular_value: f64 },
}

/// Everything needed to reproduce a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunSpec {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            sim: SimConfig::default(),
            seed: 0,
        }
    }

    pub fn build(&self) -> Result<Scenario> {
        self.sim.validate()?;
        self.scenario.build(self.seed)
    }

    pub fn run(&self) -> Result<(Scenario, Trajectory)> {
        let scenario = self.build()?;
        let traj = simulate(&scenario, &self.sim)?;
        Ok((scenario, traj))
    }
}

/// Recorded closed-loop run on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<NodeState>,
    /// Control `u` evaluated at each recorded state.
    pub controls: Vec<DVector<f64>>,
    /// Root Lyapunov candidate `V_r`.
    pub energies: Vec<f64>,
    /// Minimum robot-obstacle surface clearance (infinite without obstacles).
    pub clearance: Vec<f64>,
    /// Minimum distance between robot centers (infinite for one robot).
    pub min_pair_distance: Vec<f64>,
    /// Maximum relative formation edge-length error (zero without formation).
    pub formation_error: Vec<f64>,
    pub active_constraints: Vec<usize>,
    pub events: Vec<SimEvent>,
    /// First time all targets were within the goal radius.
    pub goal_time: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_dumps: Option<Vec<serde_json::Value>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> Option<&NodeState> {
        self.states.last()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Central-difference `V̇_r` at every sample (NaN at the ends).
    pub fn energy_rate(&self) -> Vec<f64> {
        let n = self.energies.len();
        (0..n)
            .map(|i| {
                if i == 0 || i + 1 >= n {
                    f64::NAN
                } else {
                    (self.energies[i + 1] - self.energies[i - 1]) / (self.times[i + 1] - self.times[i - 1])
                }
            })
            .collect()
    }

    pub fn min_clearance(&self) -> f64 {
        self.clearance.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_pair_distance_overall(&self) -> f64 {
        self.min_pair_distance.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_formation_error(&self) -> f64 {
        self.formation_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn error(&self) -> Option<&SimEvent> {
        self.events
            .iter()
            .find(|e| matches!(e, SimEvent::PolicyError { .. } | SimEvent::NonFinite { .. }))
    }

    /// Planar path of one robot.
    pub fn robot_path(&self, robot: usize, robot_dim: usize) -> Vec<[f64; 2]> {
        self.states
            .iter()
            .map(|s| {
                let base = robot * robot_dim;
                [s.x[base], if robot_dim > 1 { s.x[base + 1] } else { 0.0 }]
            })
            .collect()
    }

    pub fn path_length(&self, robot: usize, robot_dim: usize) -> f64 {
        self.robot_path(robot, robot_dim)
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// True if two polylines properly intersect at a point farther than `exclude` from
/// both endpoints of `a` (shared start and goal do not count).
pub fn paths_cross(a: &[[f64; 2]], b: &[[f64; 2]], exclude: f64) -> bool {
    let (Some(&start), Some(&end)) = (a.first(), a.last()) else {
        return false;
    };
    let far = |p: [f64; 2]| {
        let d = |q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        d(start) > exclude && d(end) > exclude
    };
    for sa in a.windows(2) {
        if !far(sa[0]) || !far(sa[1]) {
            continue;
        }
        for sb in b.windows(2) {
            if segments_cross(sa[0], sa[1], sb[0], sb[1]) {
                return true;
            }
        }
    }
    false
}

fn advance(state: &NodeState, deriv_q: &DVector<f64>, deriv_v: &DVector<f64>, h: f64) -> NodeState {
    NodeState {
        x: &state.x + deriv_q * h,
        xdot: &state.xdot + deriv_v * h,
    }
}

fn control_at(tree: &RmpTree, state: &NodeState, t: f64) -> Result<DVector<f64>> {
    Ok(tree.evaluate(state, t)?.root.a)
}

/// One integrator step from `state` given the control `u0` already evaluated there.
pub fn integrate_step(
    tree: &RmpTree,
    integrator: Integrator,
    state: &NodeState,
    u0: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<NodeState> {
    match integrator {
        Integrator::SemiImplicitEuler => {
            let xdot = &state.xdot + u0 * h;
            let x = &state.x + &xdot * h;
            Ok(NodeState { x, xdot })
        }
        Integrator::Rk4 => {
            let k1q = state.xdot.clone();
            let k1v = u0.clone();
            let s2 = advance(state, &k1q, &k1v, 0.5 * h);
            let k2v = control_at(tree, &s2, t + 0.5 * h)?;
            let k2q = s2.xdot;
            let s3 = advance(state, &k2q, &k2v, 0.5 * h);
            let k3v = control_at(tree, &s3, t + 0.5 * h)?;
            let k3q = s3.xdot;
            let s4 = advance(state, &k3q, &k3v, h);
            let k4v = control_at(tree, &s4, t + h)?;
            let k4q = s4.xdot;
            let dq = (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
            let dv = (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            Ok(NodeState {
                x: &state.x + dq,
                xdot: &state.xdot + dv,
            })
        }
    }
}

/// Runs the closed loop until convergence, failure, or the horizon.
pub fn simulate(scenario: &Scenario, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    scenario.tree.validate()?;
    if scenario.initial.dim() != scenario.tree.dim() {
        return Err(Error::Dimension {
            path: RmpTree::ROOT_NAME.into(),
            expected: scenario.tree.dim(),
            got: scenario.initial.dim(),
        });
    }
    let h = config.step;
    let n_steps = (config.horizon / h).round() as usize;
    let mut traj = Trajectory {
        step: h,
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        controls: Vec::with_capacity(n_steps + 1),
        energies: Vec::with_capacity(n_steps + 1),
        clearance: Vec::with_capacity(n_steps + 1),
        min_pair_distance: Vec::with_capacity(n_steps + 1),
        formation_error: Vec::with_capacity(n_steps + 1),
        active_constraints: Vec::with_capacity(n_steps + 1),
        events: Vec::new(),
        goal_time: None,
        converged: false,
        node_dumps: config.record_nodes.then(Vec::new),
    };
    let mut state = scenario.initial.clone();
    for k in 0..=n_steps {
        let t = k as f64 * h;
        let eval = match scenario.tree.evaluate(&state, t) {
            Ok(e) => e,
            Err(e) => {
                traj.events.push(SimEvent::PolicyError {
                    t,
                    message: e.to_string(),
                });
                break;
            }
        };
        record(&mut traj, scenario, &state, t, &eval);
        if traj.goal_time.is_none() && scenario.targets_within(&state, config.goal_radius) {
            traj.goal_time = Some(t);
            traj.events.push(SimEvent::GoalReached { t });
        }
        if !scenario.targets.is_empty()
            && state.xdot.norm() < config.velocity_tol
            && scenario.targets_within(&state, config.position_tol)
        {
            traj.converged = true;
            traj.events.push(SimEvent::Converged { t });
            break;
        }
        if k == n_steps {
            traj.events.push(SimEvent::HorizonReached { t });
            break;
        }
        let next = match integrate_step(&scenario.tree, config.integrator, &state, eval.control(), t, h) {
            Ok(s) => s,
            Err(e) => {
                traj.events.push(SimEvent::PolicyError {
                    t,
                    message: e.to_string(),
                });
                break;
            }
        };
        if !next.is_finite() {
            traj.events.push(SimEvent::NonFinite { t: t + h });
            break;
        }
        state = next;
    }
    Ok(traj)
}

fn record(traj: &mut Trajectory, scenario: &Scenario, state: &NodeState, t: f64, eval: &TreeEvaluation) {
    let energy = lyapunov::root_aggregate(&scenario.tree, &eval.forward).value;
    if let Some(w) = eval.warning {
        traj.events.push(SimEvent::IllConditioned {
            t,
            min_singular_value: w.min_retained_singular_value,
        });
    }
    traj.times.push(t);
    traj.states.push(state.clone());
    traj.controls.push(eval.control().clone());
    traj.energies.push(energy);
    traj.clearance.push(scenario.clearance(state));
    traj.min_pair_distance.push(scenario.min_pair_distance(state));
    traj.formation_error.push(scenario.formation_error(state));
    traj.active_constraints.push(eval.active_constraints());
    if let Some(dumps) = traj.node_dumps.as_mut() {
        let energies = lyapunov::node_energies(&scenario.tree, &eval.forward);
        dumps.push(eval.dump(&scenario.tree, Some(&energies)));
    }
}
