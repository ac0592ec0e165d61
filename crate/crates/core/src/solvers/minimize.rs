//! Global minimization of `S_k` in a free homotopy class.

use serde::Serialize;

use crate::action::{self, ActionReport};
use crate::dynamics::{self, ClosureResidual};
use crate::error::{Error, Result};
use crate::geometry::{FreeHomotopyClass, SurfaceModel};
use crate::loopspace::{self, TimedLoop};
use crate::mane::{self, SearchBudget};

use super::descent::Descender;
use super::diagnostics::PSDiagnostics;
use super::SolverConfig;

pub const FLAG_UNCONVERGED: &str = "unconverged";
pub const FLAG_STAGNATED: &str = "stagnated";
pub const FLAG_ZERO_PERIOD: &str = "degenerating to zero period";
pub const FLAG_CLOSURE_FAILED: &str = "closure check failed";

#[derive(Clone, Debug, Serialize)]
pub struct MinimizeResult {
    #[serde(skip)]
    pub minimizer: TimedLoop,
    pub action: ActionReport,
    #[serde(skip)]
    pub diagnostics: PSDiagnostics,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub closure: Option<ClosureResidual>,
    pub flags: Vec<String>,
}

/// Straight class loop at its optimal period (period 1 for the constant loop).
pub fn default_initial_loop(model: &SurfaceModel, class: FreeHomotopyClass, k: f64, n: usize) -> Result<TimedLoop> {
    let curve = loopspace::make_class_loop(model, class, n)?;
    let t = match loopspace::optimal_period_action(model, &curve, k)? {
        Some((_, t)) => t,
        None => 1.0,
    };
    TimedLoop::new(curve, t)
}

/// Sobolev-preconditioned descent on `(x, T)` from `init` (default: the straight
/// class loop).
///
/// Refuses contractible runs below the critical value and non-contractible runs
/// at or below the model's bound on it, where no minimum needs to exist.
pub fn minimize(
    model: &SurfaceModel,
    k: f64,
    class: FreeHomotopyClass,
    init: Option<TimedLoop>,
    cfg: &SolverConfig,
) -> Result<MinimizeResult> {
    cfg.validate()?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArgument(format!("energy must be positive, got {k}")));
    }
    if class.is_trivial() {
        let budget = SearchBudget::from_config(cfg);
        if mane::negative_loop_search(model, k, &budget)?.is_some() {
            return Err(Error::NotBoundedBelow(format!(
                "contractible loops with negative action exist at k = {k}"
            )));
        }
    } else {
        action::reference_flux(model, class)?;
        if !model.has_invariant_primitive() {
            return Err(Error::FluxUndefined(class));
        }
        let c_up = model.critical_value_upper_bound();
        if k <= c_up {
            return Err(Error::NotBoundedBelow(format!(
                "k = {k} does not exceed the critical value bound {c_up}"
            )));
        }
    }
    let mut x = match init {
        Some(x) => {
            if x.class() != class {
                return Err(Error::InvalidArgument(format!(
                    "initial loop has class {}, expected {class}",
                    x.class()
                )));
            }
            x
        }
        None => default_initial_loop(model, class, k, cfg.n_points)?,
    };
    let a_nu = action::reference_flux(model, class)?;
    let mut diag = PSDiagnostics::new(a_nu);
    let mut desc = Descender::new(model, k, cfg);
    let mut ev = desc.eval(&x)?;
    let mut flags = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev: Option<(TimedLoop, f64)> = None;
    let mut best_norm = f64::INFINITY;
    let mut since_best = 0;
    loop {
        diag.record(model, iterations, &x, ev.value, ev.norm, prev.as_ref().map(|(p, l)| (p, *l)))?;
        if ev.norm < cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            flags.push(FLAG_UNCONVERGED.to_string());
            break;
        }
        if ev.norm < best_norm * 0.999 {
            best_norm = ev.norm;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.stagnation_window {
                flags.push(FLAG_STAGNATED.to_string());
                break;
            }
        }
        match desc.step(&x, &ev)? {
            Some(acc) => {
                prev = Some((x, acc.step_len));
                x = acc.x;
                ev = acc.eval;
                iterations += 1;
            }
            None => {
                flags.push(FLAG_STAGNATED.to_string());
                break;
            }
        }
    }
    log::debug!("minimize: {iterations} iterations, |grad| = {:.3e}, S = {:.9}", ev.norm, ev.value);
    if class.is_trivial() && x.period() <= cfg.t_floor * (1.0 + 1e-9) {
        flags.push(FLAG_ZERO_PERIOD.to_string());
    }
    let closure = if converged {
        match dynamics::closure_residual(model, &x, k) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("closure check failed: {e}");
                flags.push(FLAG_CLOSURE_FAILED.to_string());
                None
            }
        }
    } else {
        None
    };
    if !converged && !flags.iter().any(|f| f == FLAG_UNCONVERGED) {
        flags.push(FLAG_UNCONVERGED.to_string());
    }
    let report = action::action_s(model, &x, k)?;
    Ok(MinimizeResult {
        minimizer: x,
        action: report,
        diagnostics: diag,
        converged,
        iterations,
        grad_norm: ev.norm,
        closure,
        flags,
    })
}
