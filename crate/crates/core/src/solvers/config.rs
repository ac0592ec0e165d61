use serde::{Deserialize, Serialize};

use crate::action::GradientMetric;
use crate::error::{Error, Result};

/// Numerical knobs shared by the minimizer and the mountain-pass search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Threshold on the Sobolev norm of the gradient.
    pub grad_tol: f64,
    pub step_init: f64,
    pub step_max: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub max_backtracks: usize,
    #[serde(rename = "T_floor")]
    pub t_floor: f64,
    #[serde(rename = "N")]
    pub n_points: usize,
    /// Number of path segments in the mountain-pass search.
    #[serde(rename = "P")]
    pub path_segments: usize,
    /// Period of the constant-loop endpoint.
    #[serde(rename = "T1")]
    pub t1: f64,
    pub restarts: usize,
    pub bisection_steps: usize,
    pub metric: GradientMetric,
    pub seed: u64,
    /// Iterations without progress before a run is declared stagnant.
    pub stagnation_window: usize,
    /// Gradient norm at which the highest path node switches to Newton steps.
    pub refine_tol: f64,
    pub probe_directions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            grad_tol: 1e-6,
            step_init: 1.0,
            step_max: 1e3,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            max_backtracks: 60,
            t_floor: 1e-4,
            n_points: 512,
            path_segments: 16,
            t1: 1e-3,
            restarts: 8,
            bisection_steps: 12,
            metric: GradientMetric::H1,
            seed: 0,
            stagnation_window: 2_000,
            refine_tol: 1e-1,
            probe_directions: 16,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("grad_tol", self.grad_tol),
            ("step_init", self.step_init),
            ("step_max", self.step_max),
            ("armijo_c", self.armijo_c),
            ("armijo_shrink", self.armijo_shrink),
            ("T_floor", self.t_floor),
            ("T1", self.t1),
            ("refine_tol", self.refine_tol),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grad_tol >= 1.0 {
            return Err(Error::InvalidArgument("grad_tol must be below 1".into()));
        }
        if self.armijo_c >= 1.0 || self.armijo_shrink >= 1.0 {
            return Err(Error::InvalidArgument("Armijo constants must lie in (0, 1)".into()));
        }
        if self.n_points < crate::loopspace::MIN_POINTS {
            return Err(Error::InvalidArgument(format!("N must be at least {}", crate::loopspace::MIN_POINTS)));
        }
        if self.path_segments < 8 {
            return Err(Error::InvalidArgument("P must be at least 8".into()));
        }
        let counts = [
            ("max_iters", self.max_iters),
            ("max_backtracks", self.max_backtracks),
            ("restarts", self.restarts),
            ("bisection_steps", self.bisection_steps),
            ("stagnation_window", self.stagnation_window),
            ("probe_directions", self.probe_directions),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
