//! CSV and JSON writers for trajectories and simulation results.
//!
//! Numbers are written with 12 significant digits so that outputs of
//! separate runs can be diffed.

use std::io::{self, Write};

use serde::Serialize;

use crate::fluid::{FluidTrajectory, OptimalPath};
use crate::momenta::MomentaTable;
use crate::simulate::SimResult;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` with 12 significant digits, trailing zeros removed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig(x).parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| round_sig(x)).collect()
}

/// One vertex of an exported trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub face: String,
    pub theta: Vec<f64>,
    pub segment_index: usize,
}

/// Vertices of the optimal path: the start of every segment, then the target.
pub fn optimal_path_rows(path: &OptimalPath) -> Vec<TrajectoryRow> {
    let mut rows: Vec<TrajectoryRow> = path
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| TrajectoryRow {
            t: round_sig(s.t_start),
            q: round_all(&s.start_point),
            face: s.face.to_string(),
            theta: round_all(&s.momentum),
            segment_index: i,
        })
        .collect();
    if let Some(last) = path.segments.last() {
        rows.push(TrajectoryRow {
            t: round_sig(path.total_time),
            q: round_all(&path.target),
            face: last.face.to_string(),
            theta: round_all(&last.momentum),
            segment_index: path.segments.len() - 1,
        });
    }
    rows
}

/// Vertices of the dual fluid path, each carrying its face momentum.
pub fn fluid_rows(traj: &FluidTrajectory, table: &MomentaTable) -> crate::Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::with_capacity(traj.segments.len() + 1);
    for (i, s) in traj.segments.iter().enumerate() {
        rows.push(TrajectoryRow {
            t: round_sig(s.t_start),
            q: round_all(&s.start_point),
            face: s.face.to_string(),
            theta: round_all(&table.face(s.face)?.theta_tilde),
            segment_index: i,
        });
    }
    if let Some(last) = traj.segments.last() {
        rows.push(TrajectoryRow {
            t: round_sig(traj.t_star),
            q: vec![0.0; traj.source.len()],
            face: last.face.to_string(),
            theta: round_all(&table.face(last.face)?.theta_tilde),
            segment_index: traj.segments.len() - 1,
        });
    }
    Ok(rows)
}

pub fn write_trajectory_csv<W: Write>(out: &mut W, k: usize, rows: &[TrajectoryRow]) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("q_{i}")));
    header.push("face".into());
    header.extend((1..=k).map(|i| format!("theta_{i}")));
    header.push("segment_index".into());
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut cells = vec![fmt_sig(r.t)];
        cells.extend(r.q.iter().map(|&v| fmt_sig(v)));
        cells.push(r.face.clone());
        cells.extend(r.theta.iter().map(|&v| fmt_sig(v)));
        cells.push(r.segment_index.to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_trajectory_json<W: Write>(out: &mut W, rows: &[TrajectoryRow]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, rows)?;
    writeln!(out)
}

#[derive(Serialize)]
struct ReplicaJson {
    replica: usize,
    final_state: Vec<u64>,
    events: u64,
    departures: Vec<u64>,
    elapsed: f64,
    sup_distance: Option<f64>,
    occupancy: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SimJson<'a> {
    config: &'a crate::simulate::SimConfig,
    throughputs: Vec<f64>,
    replicas: Vec<ReplicaJson>,
}

/// Per-replica records; scaled paths go to the CSV writer.
pub fn write_sim_json<W: Write>(out: &mut W, res: &SimResult) -> io::Result<()> {
    let doc = SimJson {
        config: &res.config,
        throughputs: round_all(&res.throughputs()),
        replicas: res
            .replicas
            .iter()
            .map(|r| ReplicaJson {
                replica: r.replica,
                final_state: r.final_state.clone(),
                events: r.events,
                departures: r.departures.clone(),
                elapsed: round_sig(r.elapsed),
                sup_distance: r.sup_distance.map(round_sig),
                occupancy: r.occupancy.iter().map(|o| round_all(o)).collect(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut *out, &doc)?;
    writeln!(out)
}

/// Downsampled scaled paths, columns `t,q_1..q_K,replica`.
pub fn write_sim_paths_csv<W: Write>(out: &mut W, res: &SimResult) -> io::Result<()> {
    let k = res.config.initial_state.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("q_{i}")));
    header.push("replica".into());
    writeln!(out, "{}", header.join(","))?;
    for r in &res.replicas {
        for s in r.path.iter().flatten() {
            let mut cells = vec![fmt_sig(s.t)];
            cells.extend(s.q.iter().map(|&v| fmt_sig(v)));
            cells.push(r.replica.to_string());
            writeln!(out, "{}", cells.join(","))?;
        }
    }
    Ok(())
}
