//! Palais–Smale style monitors recorded along descent sequences.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::SurfaceModel;
use crate::loopspace::{self, TimedLoop};

/// One accepted iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsRecord {
    pub iter: usize,
    /// Kinetic term `e_n`.
    pub e: f64,
    /// Length `l_n`.
    pub l: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub grad_norm: f64,
    pub action: f64,
    /// Largest `|θ|_g` over the iterate's vertices.
    pub theta_sup: f64,
    /// Smallest doubling box level containing the lift.
    pub box_level: f64,
    /// Index-matched vertex distance to the previous iterate; bounds the
    /// Hausdorff distance of the vertex sets from above.
    pub hausdorff: f64,
    /// Sobolev length of the step from the previous iterate.
    pub step_len: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PSDiagnostics {
    pub records: Vec<PsRecord>,
    /// Reference flux of the class, `a_ν`.
    pub a_nu: f64,
}

impl PSDiagnostics {
    pub fn new(a_nu: f64) -> Self {
        Self {
            records: Vec::new(),
            a_nu,
        }
    }

    pub fn record(
        &mut self,
        model: &SurfaceModel,
        iter: usize,
        x: &TimedLoop,
        action: f64,
        grad_norm: f64,
        prev: Option<(&TimedLoop, f64)>,
    ) -> Result<()> {
        let (sq, l) = loopspace::segment_sums(model, &x.curve)?;
        let e = x.len() as f64 * sq / (2.0 * x.period());
        let theta_sup = x
            .points()
            .iter()
            .map(|p| model.sq_norm_theta(p))
            .fold(0.0f64, f64::max)
            .sqrt();
        let (hausdorff, step_len) = match prev {
            Some((p, len)) if p.len() == x.len() => (
                x.points()
                    .iter()
                    .zip(p.points())
                    .map(|(a, b)| model.distance(a, b))
                    .fold(0.0, f64::max),
                len,
            ),
            _ => (0.0, 0.0),
        };
        self.records.push(PsRecord {
            iter,
            e,
            l,
            period: x.period(),
            grad_norm,
            action,
            theta_sup,
            box_level: x.curve.lift_box_level(model),
            hausdorff,
            step_len,
        });
        Ok(())
    }

    pub fn min_period(&self) -> f64 {
        self.records.iter().map(|r| r.period).fold(f64::INFINITY, f64::min)
    }

    pub fn max_period(&self) -> f64 {
        self.records.iter().map(|r| r.period).fold(0.0, f64::max)
    }

    /// CSV rows with header `iter,e,l,T,grad_norm,action,theta_sup,box_level,hausdorff,step_len`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,e,l,T,grad_norm,action,theta_sup,box_level,hausdorff,step_len\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.iter, r.e, r.l, r.period, r.grad_norm, r.action, r.theta_sup, r.box_level, r.hausdorff, r.step_len
            ));
        }
        s
    }
}

/// Constants entering the energy bound `b = (A + b₂B + |a_ν|)/(2b₁)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PsConstants {
    /// Bound on `‖θ‖∞` over the region visited; the largest recorded value is
    /// used when absent.
    pub theta_sup: Option<f64>,
    /// Action bound `A`; the largest recorded action when absent.
    pub action_bound: Option<f64>,
    /// Period bound `B`; the largest recorded period when absent.
    pub period_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsReport {
    pub b1: f64,
    pub b2: f64,
    pub action_bound: f64,
    pub period_bound: f64,
    pub bound: f64,
    /// Iterates with `e_n > b`.
    pub energy_violations: Vec<usize>,
    /// Iterates with `l_n² > 2T_n e_n`.
    pub cauchy_schwarz_violations: Vec<usize>,
    /// Largest observed ratio of vertex displacement to step length.
    pub continuity_constant: f64,
    pub max_box_level: f64,
}

impl PsReport {
    pub fn is_clean(&self) -> bool {
        self.energy_violations.is_empty() && self.cauchy_schwarz_violations.is_empty()
    }
}

/// Checks a recorded sequence against the kinetic bound and the length/energy
/// inequality.
pub fn ps_monitor(diag: &PSDiagnostics, consts: &PsConstants) -> PsReport {
    let recs = &diag.records;
    let b1 = 0.25;
    let theta = consts
        .theta_sup
        .unwrap_or_else(|| recs.iter().map(|r| r.theta_sup).fold(0.0, f64::max));
    let b2 = theta * theta;
    let action_bound = consts
        .action_bound
        .unwrap_or_else(|| recs.iter().map(|r| r.action).fold(f64::NEG_INFINITY, f64::max).max(0.0));
    let period_bound = consts.period_bound.unwrap_or_else(|| diag.max_period());
    let bound = (action_bound + b2 * period_bound + diag.a_nu.abs()) / (2.0 * b1);
    let energy_violations = recs
        .iter()
        .filter(|r| r.e > bound * (1.0 + 1e-12) + 1e-12)
        .map(|r| r.iter)
        .collect();
    let cauchy_schwarz_violations = recs
        .iter()
        .filter(|r| r.l * r.l > 2.0 * r.period * r.e + 1e-12)
        .map(|r| r.iter)
        .collect();
    let continuity_constant = recs
        .iter()
        .filter(|r| r.step_len > 0.0)
        .map(|r| r.hausdorff / r.step_len)
        .fold(0.0, f64::max);
    PsReport {
        b1,
        b2,
        action_bound,
        period_bound,
        bound,
        energy_violations,
        cauchy_schwarz_violations,
        continuity_constant,
        max_box_level: recs.iter().map(|r| r.box_level).fold(0.0, f64::max),
    }
}
