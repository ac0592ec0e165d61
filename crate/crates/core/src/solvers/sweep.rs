//! Mountain-pass levels over a list of energies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SurfaceModel;

use super::mountain_pass::{mountain_pass, MountainPassResult};
use super::SolverConfig;

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub k: f64,
    pub result: std::result::Result<MountainPassResult, String>,
}

impl SweepEntry {
    pub fn mu(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.mu_estimate)
    }

    pub fn converged(&self) -> bool {
        self.result.as_ref().is_ok_and(|r| r.converged)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// Fraction of adjacent successful pairs with `μ(k_{i+1}) ≥ μ(k_i) − tol`.
    pub monotone_fraction: f64,
    pub monotone_tol: f64,
}

impl SweepResult {
    pub fn converged_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().filter(|e| e.converged()).count() as f64 / self.entries.len() as f64
    }
}

/// Absolute slack in the monotonicity report.
pub const MONOTONE_TOL: f64 = 1e-6;

pub fn check_energies(k_values: &[f64]) -> Result<()> {
    if k_values.is_empty() {
        return Err(Error::InvalidArgument("no energies given".into()));
    }
    if k_values.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::InvalidArgument("energies must be positive".into()));
    }
    if k_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("energies must be sorted ascending".into()));
    }
    Ok(())
}

/// Assembles a sweep from per-energy outcomes (already in ascending `k` order).
pub fn sweep_from_results(entries: Vec<SweepEntry>, tol: f64) -> SweepResult {
    let mus: Vec<Option<f64>> = entries.iter().map(SweepEntry::mu).collect();
    let pairs: Vec<bool> = mus
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b >= a - tol),
            _ => None,
        })
        .collect();
    let monotone_fraction = if pairs.is_empty() {
        1.0
    } else {
        pairs.iter().filter(|ok| **ok).count() as f64 / pairs.len() as f64
    };
    SweepResult {
        entries,
        monotone_fraction,
        monotone_tol: tol,
    }
}

pub fn solve_energy(model: &SurfaceModel, k: f64, cfg: &SolverConfig) -> SweepEntry {
    let result = mountain_pass(model, k, cfg).map_err(|e| {
        log::warn!("k = {k}: {e}");
        e.to_string()
    });
    SweepEntry { k, result }
}

/// Runs the mountain pass at each energy in turn; failures are recorded per
/// entry and the sweep continues.
pub fn energy_sweep(model: &SurfaceModel, k_values: &[f64], cfg: &SolverConfig) -> Result<SweepResult> {
    check_energies(k_values)?;
    cfg.validate()?;
    let entries = k_values.iter().map(|k| solve_energy(model, *k, cfg)).collect();
    Ok(sweep_from_results(entries, MONOTONE_TOL))
}
