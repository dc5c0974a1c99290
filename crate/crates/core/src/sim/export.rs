//! Trajectory CSV and whitespace-separated plot data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rmp::NodeState;

use super::Trajectory;

/// Columns: `t, q0.., qdot0.., u0.., V_r, Vdot_fd, clearance, min_pair_dist, formation_error, active_constraints`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let dim = traj.states.first().map_or(0, NodeState::dim);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("q{i}")));
    header.extend((0..dim).map(|i| format!("qdot{i}")));
    header.extend((0..dim).map(|i| format!("u{i}")));
    header.extend(
        ["V_r", "Vdot_fd", "clearance", "min_pair_dist", "formation_error", "active_constraints"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    let rate = traj.energy_rate();
    for k in 0..traj.len() {
        let s = &traj.states[k];
        let mut row = Vec::with_capacity(header.len());
        row.push(traj.times[k].to_string());
        row.extend(s.x.iter().map(f64::to_string));
        row.extend(s.xdot.iter().map(f64::to_string));
        row.extend(traj.controls[k].iter().map(f64::to_string));
        row.push(traj.energies[k].to_string());
        row.push(rate[k].to_string());
        row.push(traj.clearance[k].to_string());
        row.push(traj.min_pair_distance[k].to_string());
        row.push(traj.formation_error[k].to_string());
        row.push(traj.active_constraints[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Times and states from a CSV written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, Vec<NodeState>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let t_col = col("t").ok_or_else(|| Error::Config(format!("{}: missing `t` column", path.display())))?;
    let q_cols: Vec<usize> = (0..).map_while(|i| col(&format!("q{i}"))).collect();
    let qd_cols: Vec<usize> = (0..).map_while(|i| col(&format!("qdot{i}"))).collect();
    if q_cols.is_empty() || q_cols.len() != qd_cols.len() {
        return Err(Error::Config(format!(
            "{}: expected matching q*/qdot* columns",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad value on row {}", path.display(), line + 1)))
        };
        times.push(parse(t_col)?);
        let x = q_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?;
        let xdot = qd_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?;
        states.push(NodeState::new(DVector::from_vec(x), DVector::from_vec(xdot))?);
    }
    Ok((times, states))
}

fn write_dat(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path.dat`, `energy.dat` and `clearance.dat` into `dir`.
pub fn write_plot_data(dir: &Path, traj: &Trajectory, robot_dim: usize) -> Result<()> {
    let dim = traj.states.first().map_or(0, NodeState::dim);
    let n_robots = dim.checked_div(robot_dim).unwrap_or(0);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n_robots).flat_map(|r| [format!("x{r}"), format!("y{r}")]))
        .collect();
    let paths: Vec<Vec<[f64; 2]>> = (0..n_robots).map(|r| traj.robot_path(r, robot_dim)).collect();
    write_dat(
        &dir.join("path.dat"),
        &header.join(" "),
        (0..traj.len()).map(|k| {
            std::iter::once(traj.times[k])
                .chain(paths.iter().flat_map(|p| p[k]))
                .collect()
        }),
    )?;
    let rate = traj.energy_rate();
    write_dat(
        &dir.join("energy.dat"),
        "t V dVdt",
        (0..traj.len()).map(|k| vec![traj.times[k], traj.energies[k], rate[k]]),
    )?;
    write_dat(
        &dir.join("clearance.dat"),
        "t clearance min_pair_distance",
        (0..traj.len()).map(|k| vec![traj.times[k], traj.clearance[k], traj.min_pair_distance[k]]),
    )?;
    Ok(())
}
