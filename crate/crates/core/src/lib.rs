//! Composition of Riemannian motion policies on a tree of task maps, with
//! geometric-dynamical-system and control-Lyapunov-constrained leaves, a
//! closed-loop simulator, and numerical Lyapunov certificates.

pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod policy;
pub mod rmp;
pub mod sim;
pub mod task_map;
pub mod tree;

pub use error::{Error, Result};
pub use rmp::{pullback, resolve, NodeState, RmpCanonical, RmpNatural};
pub use sim::{simulate, RunSpec, Scenario, ScenarioConfig, SimConfig, Trajectory};
pub use tree::{NodeId, RmpTree};
