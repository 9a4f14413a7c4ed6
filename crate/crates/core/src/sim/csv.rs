//! Trace CSV: one row per sample.
//!
//! Columns are `t`, then for each follower `i`: `x_i, v_i, a_i, u_i, gap_i,
//! w_i, k3_i`, then `psi, x0, v0, a0`. Numbers use the shortest scientific
//! representation that parses back to the identical double.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{RunMeta, SimulationTrace, TraceSample};
use crate::funnel::{ControllerParams, PairDiagnostics};
use crate::leader::LeaderSample;
use crate::state::PlatoonState;

const PER_VEHICLE: [&str; 7] = ["x", "v", "a", "u", "gap", "w", "k3"];

pub fn column_count(n: usize) -> usize {
    1 + PER_VEHICLE.len() * n + 4
}

pub fn header(n: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(column_count(n));
    cols.push("t".to_string());
    for i in 1..=n {
        cols.extend(PER_VEHICLE.iter().map(|c| format!("{c}_{i}")));
    }
    cols.extend(["psi", "x0", "v0", "a0"].map(String::from));
    cols
}

pub fn write_csv<W: Write>(trace: &SimulationTrace, mut out: W) -> io::Result<()> {
    let n = trace.vehicles();
    writeln!(out, "{}", header(n).join(","))?;
    let mut row = String::new();
    for s in &trace.samples {
        row.clear();
        push(&mut row, s.time());
        let gaps = s.gaps();
        for (i, (p, gap)) in s.pairs.iter().zip(&gaps).enumerate().take(n) {
            for v in [
                s.state.positions[i],
                s.state.velocities[i],
                s.accelerations[i],
                p.control,
                *gap,
                p.funnel_var,
                p.funnel_gain,
            ] {
                push(&mut row, v);
            }
        }
        for v in [s.psi, s.leader.position, s.leader.velocity, s.leader.acceleration] {
            push(&mut row, v);
        }
        writeln!(out, "{row}")?;
    }
    out.flush()
}

fn push(row: &mut String, v: f64) {
    if !row.is_empty() {
        row.push(',');
    }
    row.push_str(&format!("{v:e}"));
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Reads a trace written by [`write_csv`]. Quantities not stored in the
/// file (spacing and headway errors) are rebuilt from `cp`; run metadata is
/// left at its defaults.
pub fn read_csv<R: BufRead>(input: R, cp: &ControllerParams) -> Result<SimulationTrace, CsvError> {
    let mut lines = input.lines();
    let head = lines.next().ok_or(CsvError::Format {
        line: 1,
        message: "empty file".into(),
    })??;
    let cols = head.split(',').count();
    if cols < 5 || (cols - 5) % PER_VEHICLE.len() != 0 {
        return Err(CsvError::Format {
            line: 1,
            message: format!("unexpected column count {cols}"),
        });
    }
    let n = (cols - 5) / PER_VEHICLE.len();
    if head.split(',').map(str::to_string).collect::<Vec<_>>() != header(n) {
        return Err(CsvError::Format {
            line: 1,
            message: "header does not match the trace schema".into(),
        });
    }

    let mut samples = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k + 2;
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CsvError::Format {
                line: lineno,
                message: e.to_string(),
            })?;
        if vals.len() != cols {
            return Err(CsvError::Format {
                line: lineno,
                message: format!("expected {cols} fields, found {}", vals.len()),
            });
        }
        let t = vals[0];
        let tail = &vals[1 + PER_VEHICLE.len() * n..];
        let psi = tail[0];
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        let mut accelerations = Vec::with_capacity(n);
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            let c = &vals[1 + PER_VEHICLE.len() * i..1 + PER_VEHICLE.len() * (i + 1)];
            let (x, v, a, u, gap, w, k3) = (c[0], c[1], c[2], c[3], c[4], c[5], c[6]);
            let xi = cp.d_min - gap;
            positions.push(x);
            velocities.push(v);
            accelerations.push(a);
            pairs.push(PairDiagnostics {
                xi,
                headway_err: xi + cp.headway * v,
                funnel_var: w,
                funnel_gain: k3,
                control: u,
                funnel_margin: psi - w.abs(),
            });
        }
        samples.push(TraceSample {
            state: PlatoonState::new(t, positions, velocities),
            leader: LeaderSample {
                position: tail[1],
                velocity: tail[2],
                acceleration: tail[3],
            },
            pairs,
            accelerations,
            psi,
        });
    }
    Ok(SimulationTrace {
        samples,
        meta: RunMeta::default(),
    })
}
