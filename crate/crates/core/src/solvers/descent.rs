//! Preconditioned gradient steps with Armijo backtracking.

use crate::action::{self, GradientMetric};
use crate::error::Result;
use crate::geometry::SurfaceModel;
use crate::loopspace::{self, LoopTangent, TimedLoop};

use super::SolverConfig;

/// Objective value, coordinate partials and the metric gradient at a point.
#[derive(Clone, Debug)]
pub(crate) struct Eval {
    pub value: f64,
    pub grad: LoopTangent,
    pub dir: LoopTangent,
    /// `√(grad·dir)`, the gradient norm in the chosen metric.
    pub norm: f64,
}

pub(crate) fn eval(model: &SurfaceModel, x: &TimedLoop, k: f64, metric: GradientMetric) -> Result<Eval> {
    let ev = action::evaluate(model, x, k)?;
    let dir = match metric {
        GradientMetric::L2 => ev.grad.clone(),
        GradientMetric::H1 => loopspace::h1_riesz(model, &x.curve, &ev.grad)?,
    };
    let norm = ev.grad.dot(&dir).max(0.0).sqrt();
    Ok(Eval {
        value: ev.total,
        grad: ev.grad,
        dir,
        norm,
    })
}

pub(crate) fn metric_norm_sq(model: &SurfaceModel, metric: GradientMetric, base: &TimedLoop, v: &LoopTangent) -> Result<f64> {
    match metric {
        GradientMetric::L2 => Ok(v.dot(v)),
        GradientMetric::H1 => loopspace::h1_inner(model, &base.curve, v, v),
    }
}

/// `x + α·d` with the period projected onto `[T_floor, ∞)`.
pub(crate) fn projected_step(x: &TimedLoop, d: &LoopTangent, alpha: f64, t_floor: f64) -> Result<TimedLoop> {
    let mut d = d.clone();
    let t_new = x.period() + alpha * d.psi;
    if t_new < t_floor {
        d.psi = (t_floor - x.period()) / alpha;
    }
    x.step(&d, alpha)
}

pub(crate) struct Accepted {
    pub x: TimedLoop,
    pub eval: Eval,
    /// Metric length of the accepted step.
    pub step_len: f64,
}

/// Armijo descent along the negative metric gradient, with Barzilai–Borwein
/// trial steps between calls.
pub(crate) struct Descender<'a> {
    model: &'a SurfaceModel,
    k: f64,
    cfg: &'a SolverConfig,
    pub alpha: f64,
}

impl<'a> Descender<'a> {
    pub fn new(model: &'a SurfaceModel, k: f64, cfg: &'a SolverConfig) -> Self {
        Self {
            model,
            k,
            cfg,
            alpha: cfg.step_init,
        }
    }

    pub fn eval(&self, x: &TimedLoop) -> Result<Eval> {
        eval(self.model, x, self.k, self.cfg.metric)
    }

    /// One accepted step, or `None` if backtracking fails to decrease `S_k`.
    pub fn step(&mut self, x: &TimedLoop, ev: &Eval) -> Result<Option<Accepted>> {
        let neg = ev.dir.scaled(-1.0);
        let mut alpha = self.alpha;
        for _ in 0..self.cfg.max_backtracks {
            let trial = projected_step(x, &neg, alpha, self.cfg.t_floor).and_then(|y| {
                let e = self.eval(&y)?;
                Ok((y, e))
            });
            if let Ok((y, e)) = trial {
                let s = x.difference(&y)?;
                // differential of S_k along the actual (projected) displacement
                let predicted = -ev.grad.dot(&s);
                if e.value < ev.value && e.value <= ev.value - self.cfg.armijo_c * predicted {
                    let ss = metric_norm_sq(self.model, self.cfg.metric, x, &s)?;
                    let mut yv = e.grad.clone();
                    yv.add_scaled(&ev.grad, -1.0);
                    let sy = s.dot(&yv);
                    self.alpha = if sy > 0.0 {
                        (ss / sy).clamp(1e-12, self.cfg.step_max)
                    } else {
                        (alpha * 2.0).min(self.cfg.step_max)
                    };
                    return Ok(Some(Accepted {
                        x: y,
                        eval: e,
                        step_len: ss.sqrt(),
                    }));
                }
            }
            alpha *= self.cfg.armijo_shrink;
        }
        self.alpha = alpha.max(1e-12);
        Ok(None)
    }
}
