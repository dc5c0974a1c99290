//! `rmpflow` command line: run scenarios, write trajectories and plot data,
//! and certify recorded runs.

mod checks;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rmpflow::sim::{self, export, AttractorKind, Integrator, RunSpec, ScenarioConfig, Trajectory};
use rmpflow::{Error, Scenario};
use serde_json::json;

pub use checks::{CheckOutcome, CheckSelection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "RMPFLOW_OUT";
const DEFAULT_OUT_ROOT: &str = "rmpflow-out";

#[derive(Parser, Debug)]
#[command(name = "rmpflow", version, about = "Run and verify RMP-tree closed-loop scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write trajectory, report and plot data.
    Run(RunArgs),
    /// Check recorded runs or freshly simulated scenarios.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct SourceArgs {
    /// Preset scenario: goal2d, multi_robot or formation.
    #[arg(long)]
    scenario: Option<String>,
    /// JSON run configuration (`scenario`, `sim`, `seed`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attractor nominal: potential, spiral, sinusoidal or gds.
    #[arg(long)]
    nominal: Option<String>,
    /// Integration step in seconds.
    #[arg(long)]
    h: Option<f64>,
    /// Horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// rk4 or semi-implicit-euler.
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    check_decay: bool,
    #[arg(long)]
    check_invariant_set: bool,
    #[arg(long)]
    check_immersion: bool,
}

impl CheckArgs {
    fn selection(&self) -> CheckSelection {
        CheckSelection {
            decay: self.check_decay,
            invariant_set: self.check_invariant_set,
            immersion: self.check_immersion,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Preset scenario name (same as --scenario).
    name: Option<String>,
    #[command(flatten)]
    source: SourceArgs,
    /// Output directory; defaults to `$RMPFLOW_OUT/<scenario>` or `rmpflow-out/<scenario>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    checks: CheckArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Preset scenarios to simulate and check.
    names: Vec<String>,
    /// Run directory (or its trajectory.csv) written by `rmpflow run`.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    checks: CheckArgs,
}

/// Resolves the run configuration from a config file or a preset plus overrides.
fn resolve_spec(name: Option<&str>, src: &SourceArgs) -> Result<RunSpec, Error> {
    let preset = match (name, src.scenario.as_deref()) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Config(format!("scenario given twice: `{a}` and `{b}`")));
        }
        (Some(a), _) | (None, Some(a)) => Some(a),
        (None, None) => None,
    };
    let mut spec = match (&src.config, preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("use either a scenario name or --config, not both".into()));
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<RunSpec>(&text)
                .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?
        }
        (None, Some(p)) => {
            let scenario = ScenarioConfig::preset(p)?;
            let mut spec = RunSpec::new(scenario);
            spec.sim.step = spec.scenario.default_step();
            spec
        }
        (None, None) => return Err(Error::Config("no scenario given (name, --scenario or --config)".into())),
    };
    if let Some(n) = &src.nominal {
        spec.scenario.set_nominal(n.parse::<AttractorKind>()?)?;
    }
    if let Some(h) = src.h {
        spec.sim.step = h;
    }
    if let Some(t) = src.horizon {
        spec.sim.horizon = t;
    }
    if let Some(i) = &src.integrator {
        spec.sim.integrator = i.parse::<Integrator>()?;
    }
    if let Some(s) = src.seed {
        spec.seed = s;
    }
    spec.sim.validate()?;
    Ok(spec)
}

fn default_out_dir(spec: &RunSpec) -> PathBuf {
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    root.join(spec.scenario.name())
}

fn summary_json(scenario: &Scenario, traj: &Trajectory) -> serde_json::Value {
    let last = traj.final_state();
    json!({
        "steps": traj.len(),
        "final_time": traj.final_time(),
        "converged": traj.converged,
        "goal_time": traj.goal_time,
        "final_goal_error": last.map(|s| scenario.goal_error(s)),
        "final_speed": last.map(|s| s.xdot.norm()),
        "min_clearance": finite_or_null(traj.min_clearance()),
        "min_pair_distance": finite_or_null(traj.min_pair_distance_overall()),
        "max_formation_error": traj.max_formation_error(),
        "events": traj.events,
    })
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn run_report(spec: &RunSpec, scenario: &Scenario, traj: &Trajectory, outcomes: &[CheckOutcome]) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "scenario: {}", spec.scenario.name());
    let _ = writeln!(
        r,
        "integrator: {:?}  step: {}  horizon: {}  seed: {}",
        spec.sim.integrator, spec.sim.step, spec.sim.horizon, spec.seed
    );
    let _ = writeln!(r, "tree: {} nodes, {} leaves", scenario.tree.len(), scenario.tree.leaves().len());
    let _ = writeln!(r, "steps recorded: {}  final time: {:.4}", traj.len(), traj.final_time());
    let _ = writeln!(r, "converged: {}", traj.converged);
    match traj.goal_time {
        Some(t) => {
            let _ = writeln!(r, "time to goal (radius {}): {t:.4}", spec.sim.goal_radius);
        }
        None => {
            let _ = writeln!(r, "time to goal (radius {}): not reached", spec.sim.goal_radius);
        }
    }
    if let Some(s) = traj.final_state() {
        let _ = writeln!(r, "final goal error: {:.3e}", scenario.goal_error(s));
        let _ = writeln!(r, "final speed: {:.3e}", s.xdot.norm());
    }
    let _ = writeln!(r, "min obstacle clearance: {:.6}", traj.min_clearance());
    let _ = writeln!(r, "min pairwise distance: {:.6}", traj.min_pair_distance_overall());
    if !scenario.formation_edges.is_empty() {
        let _ = writeln!(r, "max formation edge error: {:.4}", traj.max_formation_error());
    }
    let mut ill = 0usize;
    for e in &traj.events {
        match e {
            sim::SimEvent::IllConditioned { .. } => ill += 1,
            other => {
                let _ = writeln!(r, "event: {}", serde_json::to_string(other).unwrap_or_default());
            }
        }
    }
    if ill > 0 {
        let _ = writeln!(r, "ill-conditioned root inertia at {ill} samples");
    }
    if !outcomes.is_empty() {
        let _ = writeln!(r, "\nchecks:");
        for o in outcomes {
            r.push_str(&o.render());
        }
    }
    r
}

fn write_run(dir: &Path, spec: &RunSpec, scenario: &Scenario, traj: &Trajectory, report: &str) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    export::write_trajectory_csv(&dir.join("trajectory.csv"), traj)?;
    export::write_plot_data(dir, traj, scenario.robot_dim)?;
    let meta = json!({
        "config": spec,
        "summary": summary_json(scenario, traj),
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("metadata.json"), text)?;
    fs::write(dir.join("report.txt"), report)?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> i32 {
    let spec = match resolve_spec(args.name.as_deref(), &args.source) {
        Ok(s) => s,
        Err(e) => return usage_error(&e),
    };
    let (scenario, traj) = match spec.run() {
        Ok(r) => r,
        Err(e) => return usage_error(&e),
    };
    let selection = args.checks.selection();
    let outcomes = match checks::run_checks(&scenario, &traj.times, &traj.states, selection) {
        Ok(o) => o,
        Err(e) => return usage_error(&e),
    };
    let dir = args.out.unwrap_or_else(|| default_out_dir(&spec));
    let report = run_report(&spec, &scenario, &traj, &outcomes);
    if let Err(e) = write_run(&dir, &spec, &scenario, &traj, &report) {
        return usage_error(&e);
    }
    println!("wrote {}", dir.display());
    for o in &outcomes {
        print!("{}", o.render());
    }
    let sim_failed = traj.error().is_some();
    if sim_failed {
        eprintln!("simulation stopped early: {}", serde_json::to_string(traj.error().unwrap()).unwrap_or_default());
    }
    if sim_failed || outcomes.iter().any(|o| !o.passed()) {
        eprintln!("check failed; see {}", dir.join("report.txt").display());
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}

/// Loads a recorded run: `dir/metadata.json` and `dir/trajectory.csv`.
fn load_recorded(path: &Path) -> Result<(RunSpec, Scenario, Vec<f64>, Vec<rmpflow::NodeState>), Error> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let csv = if path.is_dir() { dir.join("trajectory.csv") } else { path.to_path_buf() };
    if !csv.is_file() {
        return Err(Error::Config(format!("missing trajectory {}", csv.display())));
    }
    let meta_path = dir.join("metadata.json");
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: serde_json::Value = serde_json::from_str(&text)?;
    let spec: RunSpec = serde_json::from_value(meta.get("config").cloned().unwrap_or_default())
        .map_err(|e| Error::Config(format!("{}: invalid config: {e}", meta_path.display())))?;
    let scenario = spec.build()?;
    let (times, states) = export::read_trajectory_csv(&csv)?;
    if states.len() < 3 {
        return Err(Error::Config(format!(
            "{}: {} samples is too short for central differences",
            csv.display(),
            states.len()
        )));
    }
    Ok((spec, scenario, times, states))
}

fn cmd_verify(args: VerifyArgs) -> i32 {
    let mut selection = args.checks.selection();
    if selection.is_empty() {
        selection = CheckSelection::all();
    }
    let mut any_failed = false;
    let mut targets = 0;
    for path in &args.trajectory {
        targets += 1;
        let (_, scenario, times, states) = match load_recorded(path) {
            Ok(r) => r,
            Err(e) => return usage_error(&e),
        };
        println!("== {} ({})", path.display(), scenario.name);
        match checks::run_checks(&scenario, &times, &states, selection) {
            Ok(outcomes) => {
                for o in &outcomes {
                    print!("{}", o.render());
                }
                any_failed |= outcomes.iter().any(|o| !o.passed());
            }
            Err(e) => return usage_error(&e),
        }
    }
    let mut names: Vec<Option<&str>> = args.names.iter().map(|n| Some(n.as_str())).collect();
    if names.is_empty() && (args.source.scenario.is_some() || args.source.config.is_some()) {
        names.push(None);
    }
    for name in names {
        targets += 1;
        let spec = match resolve_spec(name, &args.source) {
            Ok(s) => s,
            Err(e) => return usage_error(&e),
        };
        let (scenario, traj) = match spec.run() {
            Ok(r) => r,
            Err(e) => return usage_error(&e),
        };
        println!("== {} (simulated, {} steps)", spec.scenario.name(), traj.len());
        if let Some(e) = traj.error() {
            println!("simulation stopped early: {}", serde_json::to_string(e).unwrap_or_default());
            any_failed = true;
        }
        match checks::run_checks(&scenario, &traj.times, &traj.states, selection) {
            Ok(outcomes) => {
                for o in &outcomes {
                    print!("{}", o.render());
                }
                any_failed |= outcomes.iter().any(|o| !o.passed());
            }
            Err(e) => return usage_error(&e),
        }
    }
    if targets == 0 {
        eprintln!("error: nothing to verify (give scenario names or --trajectory)");
        return EXIT_USAGE;
    }
    if any_failed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}

fn usage_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> SourceArgs {
        SourceArgs::default()
    }

    #[test]
    fn preset_and_overrides_resolve() {
        let mut s = src();
        s.nominal = Some("spiral".into());
        s.h = Some(0.02);
        s.seed = Some(9);
        let spec = resolve_spec(Some("goal2d"), &s).unwrap();
        assert_eq!(spec.sim.step, 0.02);
        assert_eq!(spec.seed, 9);
        match spec.scenario {
            ScenarioConfig::Goal2d(c) => assert_eq!(c.nominal, AttractorKind::Spiral),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conflicting_sources_are_rejected() {
        let mut s = src();
        s.scenario = Some("formation".into());
        assert!(resolve_spec(Some("goal2d"), &s).is_err());
        assert!(resolve_spec(None, &src()).is_err());
        let mut s = src();
        s.nominal = Some("zigzag".into());
        assert!(resolve_spec(Some("goal2d"), &s).is_err());
        let mut s = src();
        s.h = Some(-1.0);
        assert!(resolve_spec(Some("goal2d"), &s).is_err());
    }

    #[test]
    fn multi_robot_preset_uses_fine_step() {
        let spec = resolve_spec(Some("multi_robot"), &src()).unwrap();
        assert_eq!(spec.sim.step, 1e-3);
    }
}
