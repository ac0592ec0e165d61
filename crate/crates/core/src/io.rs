//! File formats: loop CSV with a JSON sidecar, orbit CSV and sweep tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::Orbit;
use crate::error::{Error, Result};
use crate::geometry::{FreeHomotopyClass, Vec2};
use crate::loopspace::{DiscreteLoop, TimedLoop};
use crate::solvers::SweepResult;

/// JSON number for finite values, `"inf"`/`"-inf"`/`"nan"` strings otherwise.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

/// Parses a value written by [`num`].
pub fn parse_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// `serialize_with` helper writing non-finite floats as their string flags.
pub fn flagged_f64<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        num(*x).serialize(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSidecar {
    pub class: FreeHomotopyClass,
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

/// Sidecar path: the CSV path with extension `json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn loop_csv(timed: &TimedLoop) -> String {
    let n = timed.len();
    let mut s = String::from("i,t,x,y\n");
    for (i, p) in timed.points().iter().enumerate() {
        s.push_str(&format!("{},{},{},{}\n", i, i as f64 / n as f64, p.x, p.y));
    }
    s
}

/// Writes `path` (CSV `i,t,x,y`) and its JSON sidecar `{"class", "T", "N"}`.
pub fn write_loop(path: &Path, timed: &TimedLoop) -> Result<()> {
    fs::write(path, loop_csv(timed))?;
    let side = LoopSidecar {
        class: timed.class(),
        period: timed.period(),
        n: timed.len(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

/// Reads a loop written by [`write_loop`].
pub fn read_loop(path: &Path) -> Result<TimedLoop> {
    let side: LoopSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "i,t,x,y" {
        return Err(Error::Io(format!("unexpected loop header {header:?}")));
    }
    let mut pts = Vec::new();
    for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::Io(format!("row {row}: expected 4 columns")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Io(format!("row {row}: {e}")));
        let i: usize = cols[0].parse().map_err(|e| Error::Io(format!("row {row}: {e}")))?;
        if i != row {
            return Err(Error::Io(format!("row {row}: index {i} out of order")));
        }
        pts.push(Vec2::new(parse(cols[2])?, parse(cols[3])?));
    }
    if pts.len() != side.n {
        return Err(Error::DimensionMismatch {
            expected: side.n,
            got: pts.len(),
        });
    }
    TimedLoop::new(DiscreteLoop::new(pts, side.class)?, side.period)
}

/// CSV `t,x,y,vx,vy,E`.
pub fn orbit_csv(orbit: &Orbit) -> String {
    let mut s = String::from("t,x,y,vx,vy,E\n");
    for o in &orbit.samples {
        let (q, v) = (o.state.q, o.state.v);
        s.push_str(&format!("{},{},{},{},{},{}\n", o.t, q.x, q.y, v.x, v.y, o.energy));
    }
    s
}

fn csv_num(x: f64) -> String {
    match num(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

/// CSV `k,mu,position_gap,energy_error,converged`; failed energies leave the
/// numeric columns empty.
pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut s = String::from("k,mu,position_gap,energy_error,converged\n");
    for e in &sweep.entries {
        match &e.result {
            Ok(r) => {
                let (gap, err) = r
                    .verification
                    .map_or((String::new(), String::new()), |c| (csv_num(c.position_gap), csv_num(c.energy_error)));
                s.push_str(&format!("{},{},{},{},{}\n", e.k, csv_num(r.mu_estimate), gap, err, r.converged));
            }
            Err(_) => s.push_str(&format!("{},,,,false\n", e.k)),
        }
    }
    s
}
