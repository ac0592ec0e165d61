//! One function per subcommand. Each returns its exit code and the files to
//! write; nothing touches the filesystem until the run has finished.

use std::fmt::Display;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use magorb_core::dynamics::{self, PhaseState};
use magorb_core::io::{self, num, LoopSidecar};
use magorb_core::mane::{self, BracketOptions, PotentialEstimate, SearchBudget};
use magorb_core::solvers::{self, sweep::MONOTONE_TOL, MountainPassResult, PSDiagnostics, PsConstants};
use magorb_core::{action, Error, TimedLoop, Vec2};

use crate::config::Run;
use crate::output;
use crate::Command;

pub const EXIT_OK: u8 = 0;
pub const EXIT_UNCONVERGED: u8 = 2;
pub const EXIT_INVALID: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

/// Fraction of converged energies a sweep needs to count as a success.
const SWEEP_SUCCESS: f64 = 0.9;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn invalid(e: impl Display) -> Self {
        Self { code: EXIT_INVALID, error: anyhow::anyhow!("{e}") }
    }

    pub fn internal(e: impl Display) -> Self {
        Self { code: EXIT_INTERNAL, error: anyhow::anyhow!("{e}") }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SingularSystem(_) | Error::Integration(_) | Error::Divergence(_) => EXIT_UNCONVERGED,
            Error::Io(_) => EXIT_INTERNAL,
            _ => EXIT_INVALID,
        };
        Self { code, error: e.into() }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub code: u8,
    /// `(relative path, contents)`.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    fn add(&mut self, rel: impl Into<String>, contents: String) {
        self.files.push((rel.into(), contents));
    }

    fn add_json(&mut self, rel: impl Into<String>, v: &Value) -> Result<(), Failure> {
        let s = serde_json::to_string_pretty(v).map_err(Failure::internal)?;
        self.add(rel, s + "\n");
        Ok(())
    }

    /// Loop CSV plus its JSON sidecar.
    fn add_loop(&mut self, rel: &str, x: &TimedLoop) -> Result<(), Failure> {
        self.add(rel, io::loop_csv(x));
        let side = LoopSidecar { class: x.class(), period: x.period(), n: x.len() };
        let side = serde_json::to_value(&side).map_err(Failure::internal)?;
        self.add_json(io::sidecar_path(Path::new(rel)).to_string_lossy(), &side)
    }
}

pub fn dispatch(run: &Run, command: Command) -> Result<Outcome, Failure> {
    match command {
        Command::Orbit => orbit(run),
        Command::Sweep => sweep(run),
        Command::CriticalValue => critical_value(run),
        Command::Potential => potential(run),
        Command::Verify => verify(run),
        Command::Geodesic => geodesic(run),
    }
}

fn diagnostics_json(diag: &PSDiagnostics, iterations: usize, grad_norm: f64) -> Value {
    let ps = solvers::ps_monitor(diag, &PsConstants::default());
    json!({
        "file": "diagnostics.csv",
        "iterations": iterations,
        "grad_norm": num(grad_norm),
        "records": diag.records.len(),
        "min_period": num(diag.min_period()),
        "max_period": num(diag.max_period()),
        "kinetic_bound": num(ps.bound),
        "energy_violations": ps.energy_violations,
        "cauchy_schwarz_violations": ps.cauchy_schwarz_violations,
    })
}

fn mountain_pass_json(run: &Run, k: f64, r: &MountainPassResult) -> Value {
    let probe = r.probe.as_ref().map(|p| {
        json!({
            "directions": p.directions,
            "descent_found": p.descent_found,
            "best_drop": num(p.best_drop),
            "lowest_curvature": p.lowest_curvature.map(num),
        })
    });
    json!({
        "command": "orbit",
        "method": "mountain_pass",
        "model": run.config.model,
        "k": num(k),
        "class": r.saddle.class(),
        "mu": num(r.mu_estimate),
        "period": num(r.period()),
        "converged": r.converged,
        "saddle_loop": output::loop_ref("loop.csv", &r.saddle),
        "saddle_index": r.saddle_index,
        "path_nodes": r.path_nodes.len(),
        "closure": r.verification.as_ref().map(output::closure),
        "diagnostics": diagnostics_json(&r.diagnostics, r.iterations, r.grad_norm),
        "probe": probe,
        "flags": r.flags,
        "action": output::action(&r.action),
    })
}

fn orbit(run: &Run) -> Result<Outcome, Failure> {
    let (model, k, class) = (&run.model, run.k(), run.config.class);
    let mut out = Outcome::default();
    let (x, converged, diag) = if class.is_trivial() {
        let r = solvers::mountain_pass(model, k, &run.solver)?;
        out.add_json("result.json", &mountain_pass_json(run, k, &r))?;
        (r.saddle, r.converged, r.diagnostics)
    } else {
        let r = solvers::minimize(model, k, class, None, &run.solver)?;
        let doc = json!({
            "command": "orbit",
            "method": "minimize",
            "model": run.config.model,
            "k": num(k),
            "class": class,
            "mu": num(r.action.total),
            "period": num(r.minimizer.period()),
            "converged": r.converged,
            "saddle_loop": output::loop_ref("loop.csv", &r.minimizer),
            "closure": r.closure.as_ref().map(output::closure),
            "diagnostics": diagnostics_json(&r.diagnostics, r.iterations, r.grad_norm),
            "flags": r.flags,
            "action": output::action(&r.action),
        });
        out.add_json("result.json", &doc)?;
        (r.minimizer, r.converged, r.diagnostics)
    };
    let (_, orbit) = dynamics::verify_orbit(model, &x, k, &run.config.integrate)?;
    out.add_loop("loop.csv", &x)?;
    out.add("orbit.csv", io::orbit_csv(&orbit));
    out.add("diagnostics.csv", diag.to_csv());
    out.add("orbit.svg", output::orbit_svg(model, &x, &orbit));
    out.code = if converged { EXIT_OK } else { EXIT_UNCONVERGED };
    Ok(out)
}

fn sweep(run: &Run) -> Result<Outcome, Failure> {
    let ks = run.config.k_range.as_ref().expect("validated").values();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.config.workers.unwrap_or(0))
        .build()
        .map_err(Failure::internal)?;
    // collect keeps the input order, so the merge is in k order whatever the scheduling
    let entries: Vec<_> = pool.install(|| ks.par_iter().map(|k| solvers::sweep::solve_energy(&run.model, *k, &run.solver)).collect());
    let result = solvers::sweep_from_results(entries, MONOTONE_TOL);
    let mut out = Outcome::default();
    out.add("sweep.csv", io::sweep_csv(&result));
    let mut rows = Vec::new();
    for (i, e) in result.entries.iter().enumerate() {
        let dir = format!("k{i:03}");
        match &e.result {
            Ok(r) => {
                out.add_json(format!("{dir}/result.json"), &mountain_pass_json(run, e.k, r))?;
                out.add_loop(&format!("{dir}/loop.csv"), &r.saddle)?;
                rows.push(json!({"k": num(e.k), "mu": num(r.mu_estimate), "converged": r.converged, "dir": dir}));
            }
            Err(msg) => rows.push(json!({"k": num(e.k), "mu": null, "converged": false, "error": msg})),
        }
    }
    let frac = result.converged_fraction();
    let doc = json!({
        "command": "sweep",
        "model": run.config.model,
        "converged_fraction": num(frac),
        "monotone_fraction": num(result.monotone_fraction),
        "monotone_tol": num(result.monotone_tol),
        "entries": rows,
    });
    out.add_json("sweep.json", &doc)?;
    out.code = if frac >= SWEEP_SUCCESS { EXIT_OK } else { EXIT_UNCONVERGED };
    Ok(out)
}

fn loop_certificate(out: &mut Outcome, run: &Run, file: &str, x: &TimedLoop, k: f64) -> Result<Value, Failure> {
    out.add_loop(file, x)?;
    let mut v = output::loop_ref(file, x);
    v["k"] = num(k);
    v["action"] = num(action::action_value(&run.model, x, k)?);
    Ok(v)
}

fn critical_value(run: &Run) -> Result<Outcome, Failure> {
    let block = run.config.critical_value.clone().unwrap_or_default();
    let mut opts = BracketOptions::for_model(&run.model);
    if let Some(r) = block.radius {
        opts.radius = r;
    }
    if let Some(n) = block.grid_n {
        opts.grid_n = n;
    }
    opts.bisection_steps = run.solver.bisection_steps;
    opts.search = SearchBudget::from_config(&run.solver);
    let b = mane::critical_value_bracket(&run.model, block.k_max, block.tol, &opts)?;
    let mut out = Outcome::default();
    let negative = match &b.certificate {
        Some(x) => loop_certificate(&mut out, run, "negative_loop.csv", x, b.lower)?,
        None => Value::Null,
    };
    let last = b.upper_detail.estimates.last().expect("three radii");
    let n = last.grid_n;
    let h = 2.0 * last.radius / n as f64;
    let mut csv = String::from("i,j,g1,g2,u\n");
    for j in 0..=n {
        for i in 0..=n {
            let g1 = last.center[0] - last.radius + h * i as f64;
            let g2 = last.center[1] - last.radius + h * j as f64;
            csv.push_str(&format!("{i},{j},{g1},{g2},{}\n", last.u[j * (n + 1) + i]));
        }
    }
    out.add("potential_u.csv", csv);
    let estimates: Vec<Value> = b
        .upper_detail
        .estimates
        .iter()
        .map(|e| json!({"radius": num(e.radius), "grid_n": e.grid_n, "value": num(e.value), "iterations": e.iterations}))
        .collect();
    let doc = json!({
        "command": "critical-value",
        "model": run.config.model,
        "lower": num(b.lower),
        "upper": num(b.upper),
        "upper_infinite": b.upper_infinite,
        "search_limit": num(b.search_limit),
        "bisection_steps": b.bisection_steps,
        "budget_exhausted": b.budget_exhausted,
        "inconsistent": b.inconsistent,
        "certificates": {
            "negative_loop": negative,
            "potential": {
                "file": "potential_u.csv",
                "coordinates": if run.model.kind() == magorb_core::ModelKind::HyperbolicHalfplane { "x, ln y" } else { "x, y" },
                "estimates": estimates,
            },
        },
    });
    out.add_json("critical_value.json", &doc)?;
    out.code = if b.budget_exhausted || b.inconsistent { EXIT_UNCONVERGED } else { EXIT_OK };
    Ok(out)
}

fn path_certificate(out: &mut Outcome, file: &str, p: &PotentialEstimate) -> Value {
    let mut csv = String::from("i,x,y\n");
    for (i, q) in p.path.iter().enumerate() {
        csv.push_str(&format!("{i},{},{}\n", q.x, q.y));
    }
    out.add(file, csv);
    json!({"file": file, "value": num(p.value), "period": num(p.period), "grad_norm": num(p.grad_norm), "unconverged": p.unconverged})
}

fn potential(run: &Run) -> Result<Outcome, Failure> {
    let block = run.config.potential.as_ref().expect("validated");
    let k = run.k();
    let q0 = Vec2::new(block.q0[0], block.q0[1]);
    let q1 = Vec2::new(block.q1[0], block.q1[1]);
    let fwd = mane::mane_potential(&run.model, q0, q1, k, &block.options)?;
    let mut out = Outcome::default();
    let mut certs = serde_json::Map::new();
    let (lower, upper, unconverged) = if let Some(x) = &fwd.certificate {
        certs.insert("negative_loop".into(), loop_certificate(&mut out, run, "negative_loop.csv", x, k)?);
        (f64::NEG_INFINITY, f64::NEG_INFINITY, false)
    } else {
        // m(q0,q0) = 0 ≤ m(q0,q1) + m(q1,q0), so minus any upper estimate of the
        // reverse potential bounds the forward one from below
        let rev = mane::mane_potential(&run.model, q1, q0, k, &block.options)?;
        certs.insert("path".into(), path_certificate(&mut out, "path.csv", &fwd));
        certs.insert("reverse_path".into(), path_certificate(&mut out, "reverse_path.csv", &rev));
        if let Some(x) = &rev.certificate {
            certs.insert("negative_loop".into(), loop_certificate(&mut out, run, "negative_loop.csv", x, k)?);
            (f64::NEG_INFINITY, f64::NEG_INFINITY, false)
        } else {
            (-rev.value, fwd.value, fwd.unconverged || rev.unconverged)
        }
    };
    let doc = json!({
        "command": "potential",
        "model": run.config.model,
        "k": num(k),
        "q0": output::point(&q0),
        "q1": output::point(&q1),
        "lower": num(lower),
        "upper": num(upper),
        "unbounded": upper == f64::NEG_INFINITY,
        "unconverged": unconverged,
        "certificates": Value::Object(certs),
    });
    out.add_json("potential.json", &doc)?;
    out.code = if unconverged { EXIT_UNCONVERGED } else { EXIT_OK };
    Ok(out)
}

fn verify(run: &Run) -> Result<Outcome, Failure> {
    let block = run.config.verify.as_ref().expect("validated");
    let path = run.base_dir.join(&block.loop_csv);
    let x = io::read_loop(&path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let k = run.k();
    let (res, orbit) = dynamics::verify_orbit(&run.model, &x, k, &run.config.integrate)?;
    let closed = res.position_gap < block.tolerance;
    let mut out = Outcome::default();
    let doc = json!({
        "command": "verify",
        "model": run.config.model,
        "k": num(k),
        "loop": output::loop_ref(&path.to_string_lossy(), &x),
        "closure": output::closure(&res),
        "tolerance": num(block.tolerance),
        "closed": closed,
        "action": output::action(&action::action_s(&run.model, &x, k)?),
        "ds_dT": num(action::ds_dt(&run.model, &x, k)?),
    });
    out.add_json("verify.json", &doc)?;
    out.add("orbit.csv", io::orbit_csv(&orbit));
    out.add("orbit.svg", output::orbit_svg(&run.model, &x, &orbit));
    out.code = if closed { EXIT_OK } else { EXIT_UNCONVERGED };
    Ok(out)
}

fn geodesic(run: &Run) -> Result<Outcome, Failure> {
    let block = run.config.geodesic.as_ref().expect("validated");
    let s0 = PhaseState::new(Vec2::new(block.q[0], block.q[1]), Vec2::new(block.v[0], block.v[1]));
    let orbit = dynamics::integrate(&run.model, &s0, block.duration, &run.config.integrate)?;
    let end = orbit.last();
    let mut out = Outcome::default();
    let doc = json!({
        "command": "geodesic",
        "model": run.config.model,
        "duration": num(block.duration),
        "initial": {"q": output::point(&s0.q), "v": output::point(&s0.v), "energy": num(s0.energy(&run.model))},
        "final": {"q": output::point(&end.state.q), "v": output::point(&end.state.v), "energy": num(end.energy)},
        "steps": orbit.steps,
        "step_size": num(orbit.step_size),
        "halvings": orbit.halvings,
        "energy_drift": num(orbit.energy_drift),
        "drift_exceeded": orbit.drift_exceeded,
        "file": "orbit.csv",
    });
    out.add_json("geodesic.json", &doc)?;
    out.add("orbit.csv", io::orbit_csv(&orbit));
    out.code = if orbit.drift_exceeded { EXIT_UNCONVERGED } else { EXIT_OK };
    Ok(out)
}
