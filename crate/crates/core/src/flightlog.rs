//! Comma-separated flight logs: one row per executed timestep.
//!
//! The base columns carry the pre-step state, the executed command and the
//! acceleration obtained by finite-differencing velocity over the step.
//! Trial logs append per-step bookkeeping columns.

use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::{Control, QuadState, Vec3};
use crate::error::{Error, Result};

pub const BASE_COLUMNS: [&str; 20] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r", "cmd_p", "cmd_q", "cmd_r", "thrust",
    "ax", "ay", "az",
];

pub const TRIAL_COLUMNS: [&str; 6] =
    ["active_waypoint", "q_cost", "lwpr_var_ax", "lwpr_var_ay", "lwpr_var_az", "horizon_cost"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialColumns {
    pub active_waypoint: usize,
    pub q_cost: f64,
    /// NaN when no learned model was probed.
    pub lwpr_variance: Vec3,
    /// Planned cost-to-go of the optimized plan at this cycle.
    pub horizon_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: QuadState,
    pub command: Control,
    pub accel: Vec3,
    pub trial: Option<TrialColumns>,
}

/// A row that failed validation, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLog {
    pub rows: Vec<LogRow>,
    pub rejected: Vec<Rejected>,
}

pub fn write_log<W: Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let with_trial = rows.iter().any(|r| r.trial.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if with_trial {
        header.extend(TRIAL_COLUMNS);
    }
    w.write_record(&header)?;
    for row in rows {
        let s = &row.state;
        let mut rec: Vec<String> = [row.t]
            .iter()
            .chain(&s.position)
            .chain(&s.velocity)
            .chain(&s.angles)
            .chain(&s.rates)
            .chain(&row.command.desired_rates)
            .chain(&[row.command.thrust])
            .chain(&row.accel)
            .map(|v| v.to_string())
            .collect();
        if with_trial {
            let tc = row.trial.unwrap_or(TrialColumns {
                active_waypoint: 0,
                q_cost: f64::NAN,
                lwpr_variance: [f64::NAN; 3],
                horizon_cost: f64::NAN,
            });
            rec.push(tc.active_waypoint.to_string());
            rec.push(tc.q_cost.to_string());
            rec.extend(tc.lwpr_variance.iter().map(|v| v.to_string()));
            rec.push(tc.horizon_cost.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log_file(path: &Path, rows: &[LogRow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_log(std::io::BufWriter::new(f), rows)
}

/// Parses a log. Missing base columns are an error; rows with unparsable or
/// non-finite base values are collected in `rejected`.
pub fn read_log<R: Read>(input: R, path: &Path) -> Result<ParsedLog> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut base_idx = [0usize; 20];
    for (i, col) in BASE_COLUMNS.iter().enumerate() {
        base_idx[i] =
            find(col).ok_or_else(|| Error::MissingColumn { path: path.to_path_buf(), column: col.to_string() })?;
    }
    let trial_idx: Option<Vec<usize>> = TRIAL_COLUMNS.iter().map(|c| find(c)).collect();

    let mut parsed = ParsedLog::default();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = [0.0f64; 20];
        let mut problem = None;
        for (i, &idx) in base_idx.iter().enumerate() {
            match record.get(idx).map(|s| s.trim().parse::<f64>()) {
                Some(Ok(v)) if v.is_finite() => vals[i] = v,
                Some(Ok(v)) => {
                    problem = Some(format!("non-finite {} ({v})", BASE_COLUMNS[i]));
                    break;
                }
                Some(Err(e)) => {
                    problem = Some(format!("bad {}: {e}", BASE_COLUMNS[i]));
                    break;
                }
                None => {
                    problem = Some(format!("missing field {}", BASE_COLUMNS[i]));
                    break;
                }
            }
        }
        if let Some(reason) = problem {
            parsed.rejected.push(Rejected { line, reason });
            continue;
        }
        let trial = match &trial_idx {
            Some(idx) => {
                let get = |k: usize| record.get(idx[k]).and_then(|s| s.trim().parse::<f64>().ok());
                match (
                    record.get(idx[0]).and_then(|s| s.trim().parse::<usize>().ok()),
                    get(1),
                    get(2),
                    get(3),
                    get(4),
                    get(5),
                ) {
                    (Some(wp), Some(q), Some(a), Some(b), Some(c), Some(h)) => {
                        Some(TrialColumns { active_waypoint: wp, q_cost: q, lwpr_variance: [a, b, c], horizon_cost: h })
                    }
                    _ => {
                        parsed.rejected.push(Rejected { line, reason: "bad trial columns".into() });
                        continue;
                    }
                }
            }
            None => None,
        };
        let v = vals;
        parsed.rows.push(LogRow {
            t: v[0],
            state: QuadState {
                position: [v[1], v[2], v[3]],
                velocity: [v[4], v[5], v[6]],
                angles: [v[7], v[8], v[9]],
                rates: [v[10], v[11], v[12]],
            },
            command: Control { desired_rates: [v[13], v[14], v[15]], thrust: v[16] },
            accel: [v[17], v[18], v[19]],
            trial,
        });
    }
    Ok(parsed)
}

pub fn read_log_file(path: &Path) -> Result<ParsedLog> {
    let f = std::fs::File::open(path)?;
    read_log(std::io::BufReader::new(f), path)
}
