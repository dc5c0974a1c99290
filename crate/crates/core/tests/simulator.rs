mod common;

use std::sync::Arc;

use common::*;
use rmpflow::policy::{ConstantDamping, ConstantMetric, GdsLeaf, LeafPolicy, LeafSpec, QuadraticPotential, ZeroPotential};
use rmpflow::sim::scenario::{FormationConfig, Goal2dConfig, MultiRobotConfig, MultiRobotLayout};
use rmpflow::sim::{export, simulate, AttractorKind, Integrator, RunSpec, ScenarioConfig, SimConfig, SimEvent};
use rmpflow::{task_map, NodeState, RmpTree};

const G: f64 = 1.5;
const B: f64 = 0.8;
const K: f64 = 2.0;

fn oscillator_tree(g: f64, b: f64, k: f64) -> RmpTree {
    let leaf = GdsLeaf::new(
        Arc::new(ConstantMetric::scaled_identity(1, g).unwrap()),
        Arc::new(ConstantDamping { dim: 1, gain: b }),
        Arc::new(QuadraticPotential::new(v(&[0.0]), k).unwrap()),
    );
    let mut tree = RmpTree::new(1).unwrap();
    let root = tree.root();
    tree.add_leaf(root, "spring", task_map::identity(1).unwrap(), LeafPolicy::Gds(leaf))
        .unwrap();
    tree
}

fn final_error(integrator: Integrator, h: f64, horizon: f64, g: f64, b: f64, k: f64) -> f64 {
    let s = bare_scenario(oscillator_tree(g, b, k), NodeState::from_slices(&[1.0], &[0.5]).unwrap());
    let cfg = SimConfig {
        step: h,
        horizon,
        integrator,
        ..SimConfig::default()
    };
    let traj = simulate(&s, &cfg).unwrap();
    assert!((traj.final_time() - horizon).abs() < 1e-9);
    let (x, xd) = damped_oscillator(g, b, k, 1.0, 0.5, horizon);
    let last = traj.final_state().unwrap();
    ((last.x[0] - x).powi(2) + (last.xdot[0] - xd).powi(2)).sqrt()
}

#[test]
fn rk4_is_fourth_order() {
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| final_error(Integrator::Rk4, h, 2.0, G, B, K))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.5, "observed order {order}, errors {errs:?}");
    }
}

#[test]
fn semi_implicit_euler_is_first_order() {
    let e1 = final_error(Integrator::SemiImplicitEuler, 0.01, 2.0, G, B, K);
    let e2 = final_error(Integrator::SemiImplicitEuler, 0.005, 2.0, G, B, K);
    let order = (e1 / e2).log2();
    assert!((0.8..1.3).contains(&order), "observed order {order}");
}

#[test]
fn critically_damped_run_matches_closed_form() {
    // b² = 4gk
    let (g, k): (f64, f64) = (1.0, 4.0);
    let b = 2.0 * (g * k).sqrt();
    assert!(final_error(Integrator::Rk4, 1e-3, 3.0, g, b, k) < 1e-10);
}

#[test]
fn free_particle_moves_in_a_straight_line() {
    let leaf = LeafSpec::GdsDamper {
        dim: 2,
        metric: 1.0,
        damping: 0.0,
    }
    .build()
    .unwrap();
    let mut tree = RmpTree::new(2).unwrap();
    let root = tree.root();
    tree.add_leaf(root, "free", task_map::identity(2).unwrap(), leaf).unwrap();
    let s = bare_scenario(tree, NodeState::from_slices(&[1.0, -1.0], &[0.3, 0.7]).unwrap());
    let traj = simulate(
        &s,
        &SimConfig {
            horizon: 1.0,
            ..SimConfig::default()
        },
    )
    .unwrap();
    for (t, st) in traj.times.iter().zip(&traj.states) {
        let expect = v(&[1.0 + 0.3 * t, -1.0 + 0.7 * t]);
        assert!((&st.x - expect).norm() <= 1e-8);
    }
}

#[test]
fn policy_error_truncates_trajectory() {
    let leaf = GdsLeaf::new(
        Arc::new(ConstantMetric::scaled_identity(1, 1.0).unwrap()),
        Arc::new(ConstantDamping { dim: 1, gain: 0.0 }),
        Arc::new(ZeroPotential { dim: 1 }),
    );
    let mut tree = RmpTree::new(2).unwrap();
    let root = tree.root();
    tree.add_leaf(root, "range", task_map::distance_to_point(v(&[0.0, 0.0])).unwrap(), LeafPolicy::Gds(leaf))
        .unwrap();
    let free = LeafSpec::GdsDamper {
        dim: 2,
        metric: 1.0,
        damping: 0.0,
    };
    tree.add_leaf(root, "free", task_map::identity(2).unwrap(), free.build().unwrap()).unwrap();
    let s = bare_scenario(tree, NodeState::from_slices(&[-1.0, 0.0], &[1.0, 0.0]).unwrap());
    let traj = simulate(
        &s,
        &SimConfig {
            step: 0.25,
            horizon: 5.0,
            ..SimConfig::default()
        },
    )
    .unwrap();
    assert!(matches!(traj.error(), Some(SimEvent::PolicyError { .. })));
    assert_eq!(traj.len(), 4);
    assert!(traj.states.iter().all(NodeState::is_finite));
}

#[test]
fn runs_are_bit_identical_for_same_seed() {
    let cfg = ScenarioConfig::MultiRobot(MultiRobotConfig {
        jitter: 0.05,
        ..MultiRobotConfig::default()
    });
    let mut spec = RunSpec::new(cfg);
    spec.seed = 42;
    spec.sim.horizon = 3.0;
    spec.sim.step = 1e-3;
    let (_, a) = spec.run().unwrap();
    let (_, b) = spec.run().unwrap();
    assert_eq!(a, b);
    spec.seed = 43;
    let (_, c) = spec.run().unwrap();
    assert_ne!(a.states, c.states);
}

#[test]
fn obstacle_free_potential_run_is_straight() {
    let cfg = ScenarioConfig::Goal2d(Goal2dConfig {
        obstacle_radius: 0.0,
        ..Goal2dConfig::default()
    });
    let (_, traj) = RunSpec::new(cfg).run().unwrap();
    assert!(traj.converged);
    assert!(traj.states.iter().all(|s| s.x[1].abs() <= 1e-12));
    let last = traj.final_state().unwrap();
    assert!((last.x[0] - 2.5).abs() < 1e-3);
}

#[test]
fn separated_lanes_stay_straight() {
    for nominal in [AttractorKind::Potential, AttractorKind::Gds] {
        let cfg = ScenarioConfig::MultiRobot(MultiRobotConfig {
            n_robots: 2,
            nominal,
            layout: MultiRobotLayout::Lanes {
                spacing: 3.0,
                half_length: 2.0,
            },
            ..MultiRobotConfig::default()
        });
        let mut spec = RunSpec::new(cfg);
        spec.sim.horizon = 30.0;
        let (scenario, traj) = spec.run().unwrap();
        for r in 0..2 {
            let y0 = scenario.initial.x[2 * r + 1];
            let dev = traj.robot_path(r, 2).iter().map(|p| (p[1] - y0).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-3, "{nominal:?} robot {r} deviates {dev}");
        }
        assert!(traj.goal_time.is_some());
    }
}

#[test]
fn formation_at_goal_stays_static() {
    let cfg = ScenarioConfig::Formation(FormationConfig {
        leader_goal_offset: [0.0, 0.0],
        ..FormationConfig::default()
    });
    let mut spec = RunSpec::new(cfg);
    spec.sim.horizon = 2.0;
    let (scenario, traj) = spec.run().unwrap();
    assert!(traj.converged);
    let last = traj.final_state().unwrap();
    assert!((&last.x - &scenario.initial.x).norm() < 1e-12);
    assert!(traj.max_formation_error() < 1e-12);
}

#[test]
fn gds_leader_takes_near_straight_path() {
    let spiral = RunSpec::new(ScenarioConfig::preset("formation").unwrap());
    let mut gds = spiral.clone();
    gds.scenario.set_nominal(AttractorKind::Gds).unwrap();
    let (_, ts) = spiral.run().unwrap();
    let (scenario, tg) = gds.run().unwrap();
    let direct = {
        let g = &scenario.targets[0].goal;
        ((g[0] - scenario.initial.x[0]).powi(2) + (g[1] - scenario.initial.x[1]).powi(2)).sqrt()
    };
    assert!(tg.path_length(0, 2) < 1.1 * direct, "gds leader path {} vs {direct}", tg.path_length(0, 2));
    assert!(ts.path_length(0, 2) > tg.path_length(0, 2));
}

#[test]
fn csv_roundtrip_and_plot_files() {
    let mut spec = RunSpec::new(ScenarioConfig::preset("goal2d").unwrap());
    spec.sim.horizon = 1.0;
    let (scenario, traj) = spec.run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trajectory.csv");
    export::write_trajectory_csv(&csv, &traj).unwrap();
    let (times, states) = export::read_trajectory_csv(&csv).unwrap();
    assert_eq!(times, traj.times);
    assert_eq!(states, traj.states);
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "t,q0,q1,qdot0,qdot1,u0,u1,V_r,Vdot_fd,clearance,min_pair_dist,formation_error,active_constraints"
    );
    export::write_plot_data(dir.path(), &traj, scenario.robot_dim).unwrap();
    for (name, cols) in [("path.dat", 3), ("energy.dat", 3), ("clearance.dat", 3)] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), traj.len());
        assert!(rows.iter().all(|r| r.split_whitespace().count() == cols));
    }
}

#[test]
fn horizon_and_goal_events_are_recorded() {
    let mut spec = RunSpec::new(ScenarioConfig::preset("goal2d").unwrap());
    spec.sim.horizon = 0.5;
    let (_, traj) = spec.run().unwrap();
    assert!(!traj.converged);
    assert!(matches!(traj.events.last(), Some(SimEvent::HorizonReached { .. })));
    assert_eq!(traj.len(), 51);
    let (_, full) = RunSpec::new(ScenarioConfig::preset("goal2d").unwrap()).run().unwrap();
    assert!(full.converged);
    assert!(full.events.iter().any(|e| matches!(e, SimEvent::GoalReached { .. })));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad_n = ScenarioConfig::MultiRobot(MultiRobotConfig {
        n_robots: 1,
        ..MultiRobotConfig::default()
    });
    assert!(bad_n.build(0).is_err());
    let bad_formation = ScenarioConfig::Formation(FormationConfig {
        n_robots: 6,
        ..FormationConfig::default()
    });
    assert!(bad_formation.build(0).is_err());
    let mut spec = RunSpec::new(ScenarioConfig::preset("goal2d").unwrap());
    spec.sim.horizon = 0.0;
    assert!(spec.run().is_err());
    assert!("wobble".parse::<AttractorKind>().is_err());
}
