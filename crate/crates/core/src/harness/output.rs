//! CSV tables and their on-disk layout.
//!
//! Numbers are written with 12 significant digits; missing values are empty
//! fields. Each table parses back into the row type it was written from.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::CostReport;
use crate::control::ClosedLoopRun;
use crate::estimation::MeasuredSample;
use crate::harness::scenario::{EstimateRow, RunArtifacts};
use crate::integrate::Trajectory;

pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "S_true", "I_true", "R_true", "S_meas", "I_meas", "u_applied", "stage"];
pub const ESTIMATES_HEADER: [&str; 7] = ["alpha", "h", "beta_hat", "gamma_hat", "err_norm", "bound_b", "contained"];
pub const COSTS_HEADER: [&str; 9] =
    ["policy", "total_cost", "gap_direct", "gap_lemma4", "gap_thm4", "gap_upper", "t_b", "t_h", "feasible"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o failure at {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s_true: f64,
    pub i_true: f64,
    pub r_true: f64,
    pub s_meas: f64,
    pub i_meas: f64,
    pub u_applied: f64,
    pub stage: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub alpha: usize,
    pub h: f64,
    pub beta_hat: f64,
    pub gamma_hat: f64,
    pub err_norm: f64,
    pub bound_b: f64,
    pub contained: bool,
}

impl From<&EstimateRow> for EstimateRecord {
    fn from(r: &EstimateRow) -> Self {
        Self {
            alpha: r.alpha,
            h: r.h,
            beta_hat: r.beta_hat,
            gamma_hat: r.gamma_hat,
            err_norm: r.err_norm,
            bound_b: r.bound_b,
            contained: r.contained,
        }
    }
}

pub fn closed_loop_rows(run: &ClosedLoopRun) -> Vec<TrajectoryRow> {
    run.trajectory
        .samples
        .iter()
        .zip(&run.measured)
        .zip(&run.trace.stages)
        .map(|((s, m), stage)| TrajectoryRow {
            t: s.state.t,
            s_true: s.state.s,
            i_true: s.state.i,
            r_true: s.state.r,
            s_meas: m.s_hat,
            i_meas: m.i_hat,
            u_applied: s.u,
            stage: stage.number(),
        })
        .collect()
}

/// Rows for a run without a stage machine; every row is labelled stage 1.
pub fn open_loop_rows(traj: &Trajectory, measured: &[MeasuredSample]) -> Vec<TrajectoryRow> {
    traj.samples
        .iter()
        .zip(measured)
        .map(|(s, m)| TrajectoryRow {
            t: s.state.t,
            s_true: s.state.s,
            i_true: s.state.i,
            r_true: s.state.r,
            s_meas: m.s_hat,
            i_meas: m.i_hat,
            u_applied: s.u,
            stage: 1,
        })
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T, OutputError> {
    let raw = rec.get(idx).ok_or_else(|| OutputError::Parse { row, message: format!("missing column {idx}") })?;
    raw.parse().map_err(|_| OutputError::Parse { row, message: format!("cannot parse {raw:?} in column {idx}") })
}

fn opt_field(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<Option<f64>, OutputError> {
    match rec.get(idx) {
        Some("") => Ok(None),
        _ => field(rec, idx, row).map(Some),
    }
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), OutputError> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(OutputError::Parse { row: 0, message: format!("unexpected header {header:?}") });
    }
    Ok(())
}

pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record([
            num(r.t),
            num(r.s_true),
            num(r.i_true),
            num(r.r_true),
            num(r.s_meas),
            num(r.i_meas),
            num(r.u_applied),
            r.stage.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryRow>, OutputError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &TRAJECTORY_HEADER)?;
    reader
        .records()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec?;
            Ok(TrajectoryRow {
                t: field(&rec, 0, row)?,
                s_true: field(&rec, 1, row)?,
                i_true: field(&rec, 2, row)?,
                r_true: field(&rec, 3, row)?,
                s_meas: field(&rec, 4, row)?,
                i_meas: field(&rec, 5, row)?,
                u_applied: field(&rec, 6, row)?,
                stage: field(&rec, 7, row)?,
            })
        })
        .collect()
}

pub fn write_estimates<W: Write>(out: W, rows: &[EstimateRecord]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATES_HEADER)?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            num(r.h),
            num(r.beta_hat),
            num(r.gamma_hat),
            num(r.err_norm),
            num(r.bound_b),
            r.contained.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_estimates<R: Read>(input: R) -> Result<Vec<EstimateRecord>, OutputError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &ESTIMATES_HEADER)?;
    reader
        .records()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec?;
            Ok(EstimateRecord {
                alpha: field(&rec, 0, row)?,
                h: field(&rec, 1, row)?,
                beta_hat: field(&rec, 2, row)?,
                gamma_hat: field(&rec, 3, row)?,
                err_norm: field(&rec, 4, row)?,
                bound_b: field(&rec, 5, row)?,
                contained: field(&rec, 6, row)?,
            })
        })
        .collect()
}

pub fn write_costs<W: Write>(out: W, rows: &[CostReport]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COSTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            num(r.total_cost),
            opt(r.gap_direct),
            opt(r.gap_lemma4),
            opt(r.gap_thm4),
            opt(r.gap_upper),
            opt(r.t_b),
            opt(r.t_h),
            r.feasible.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_costs<R: Read>(input: R) -> Result<Vec<CostReport>, OutputError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &COSTS_HEADER)?;
    reader
        .records()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec?;
            Ok(CostReport {
                policy: field(&rec, 0, row)?,
                total_cost: field(&rec, 1, row)?,
                gap_direct: opt_field(&rec, 2, row)?,
                gap_lemma4: opt_field(&rec, 3, row)?,
                gap_thm4: opt_field(&rec, 4, row)?,
                gap_upper: opt_field(&rec, 5, row)?,
                t_b: opt_field(&rec, 6, row)?,
                t_h: opt_field(&rec, 7, row)?,
                feasible: field(&rec, 8, row)?,
            })
        })
        .collect()
}

/// Tables to be written for one command.
///
/// Trajectories land in `<label>/trajectory.csv`; the other tables and the
/// JSON summary sit at the top of the output directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSet {
    pub trajectories: Vec<(String, Vec<TrajectoryRow>)>,
    pub estimates: Option<Vec<EstimateRecord>>,
    pub costs: Option<Vec<CostReport>>,
    pub summary_json: Option<String>,
}

impl From<&RunArtifacts> for OutputSet {
    fn from(a: &RunArtifacts) -> Self {
        Self {
            trajectories: a.outcomes.iter().map(|o| (o.cost.policy.clone(), closed_loop_rows(&o.run))).collect(),
            estimates: a.estimates.as_ref().map(|rows| rows.iter().map(EstimateRecord::from).collect()),
            costs: Some(a.outcomes.iter().map(|o| o.cost.clone()).collect()),
            summary_json: Some(serde_json::to_string_pretty(&a.summary).expect("summary serialises")),
        }
    }
}

fn create(path: &Path) -> Result<fs::File, OutputError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::File::create(path).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

/// Write every table of `set` under `out_dir`, overwriting existing files.
pub fn emit_csv(set: &OutputSet, out_dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    let mut written = Vec::new();
    for (label, rows) in &set.trajectories {
        let path = out_dir.join(label).join("trajectory.csv");
        write_trajectory(std::io::BufWriter::new(create(&path)?), rows)?;
        written.push(path);
    }
    if let Some(rows) = &set.estimates {
        let path = out_dir.join("estimates.csv");
        write_estimates(std::io::BufWriter::new(create(&path)?), rows)?;
        written.push(path);
    }
    if let Some(rows) = &set.costs {
        let path = out_dir.join("costs.csv");
        write_costs(std::io::BufWriter::new(create(&path)?), rows)?;
        written.push(path);
    }
    if let Some(json) = &set.summary_json {
        let path = out_dir.join("summary.json");
        let mut f = create(&path)?;
        f.write_all(json.as_bytes()).map_err(|source| OutputError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
