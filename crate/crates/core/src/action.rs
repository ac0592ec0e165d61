//! The discrete free-period action
//!
//! `S_k(x, T) = Σ N|Δ_i|²_g/(2T) + kT − Σ θ(m_i)·Δ_i (+ a_ν)`
//!
//! and its exact partial derivatives. The gradient is that of the discrete sum
//! itself, so line searches see a consistent objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DeckMap, FreeHomotopyClass, SurfaceModel, Vec2};
use crate::loopspace::{self, DiscreteLoop, LoopTangent, TimedLoop};

/// Resolution of the reference-loop quadrature for `a_ν`.
const REFERENCE_SEGMENTS: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMetric {
    L2,
    #[default]
    H1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub kinetic: f64,
    #[serde(rename = "kT")]
    pub period_term: f64,
    pub flux: f64,
    pub total: f64,
    pub grad_loop_norm: f64,
    #[serde(rename = "grad_T")]
    pub grad_t: f64,
    pub class: FreeHomotopyClass,
}

fn flux_deck(model: &SurfaceModel, curve: &DiscreteLoop) -> Result<DeckMap> {
    let deck = curve.validate(model)?;
    if !curve.class().is_trivial() && !model.has_invariant_primitive() {
        return Err(Error::FluxUndefined(curve.class()));
    }
    Ok(deck)
}

/// `a_ν`: line integral of θ along the straight reference lift of `class`.
pub fn reference_flux(model: &SurfaceModel, class: FreeHomotopyClass) -> Result<f64> {
    if class.is_trivial() {
        return Ok(0.0);
    }
    let deck = model.deck_map(class)?;
    let o = model.origin();
    let d = (deck.apply(&o) - o) / REFERENCE_SEGMENTS as f64;
    Ok((0..REFERENCE_SEGMENTS)
        .map(|i| model.theta_at(&(o + d * (i as f64 + 0.5))).dot(&d))
        .sum())
}

/// Flux term `∫_{C(x)} σ`: the midpoint line integral of θ along the lift, less
/// the reference value `a_ν` for non-contractible classes.
pub fn flux(model: &SurfaceModel, curve: &DiscreteLoop) -> Result<f64> {
    let deck = flux_deck(model, curve)?;
    let n = curve.len();
    let mut f = 0.0;
    for i in 0..n {
        let a = curve.point_ext(&deck, i);
        let b = curve.point_ext(&deck, i + 1);
        f += model.theta_at(&((a + b) * 0.5)).dot(&(b - a));
    }
    Ok(f - reference_flux(model, curve.class())?)
}

pub(crate) struct Evaluation {
    pub kinetic: f64,
    pub flux: f64,
    pub total: f64,
    pub grad: LoopTangent,
}

/// Value and coordinate partials of the discrete `S_k`.
pub(crate) fn evaluate(model: &SurfaceModel, timed: &TimedLoop, k: f64) -> Result<Evaluation> {
    let curve = &timed.curve;
    let deck = flux_deck(model, curve)?;
    let n = curve.len();
    let t = timed.period();
    let c = n as f64 / (2.0 * t);
    let mut sq = 0.0;
    let mut fl = 0.0;
    let mut grad = vec![Vec2::zeros(); n];
    for i in 0..n {
        let a = curve.point_ext(&deck, i);
        let b = curve.point_ext(&deck, i + 1);
        let d = b - a;
        let m = (a + b) * 0.5;
        let phi = model.conformal(&m);
        let dphi = model.conformal_grad(&m);
        let d2 = d.norm_squared();
        sq += phi * d2;
        let theta = model.theta_at(&m);
        fl += theta.dot(&d);
        let jt = model.theta_jacobian(&m).transpose() * d;
        let common = dphi * (0.5 * c * d2) - jt * 0.5;
        let odd = d * (2.0 * c * phi) - theta;
        // ∂/∂b = common + odd, ∂/∂a = common − odd
        grad[i] += common - odd;
        if i + 1 == n {
            grad[0] += (common + odd) * deck.scale;
        } else {
            grad[i + 1] += common + odd;
        }
    }
    let kinetic = n as f64 * sq / (2.0 * t);
    let flux = fl - reference_flux(model, curve.class())?;
    Ok(Evaluation {
        kinetic,
        flux,
        total: kinetic + k * t - flux,
        grad: LoopTangent {
            xi: grad,
            psi: k - kinetic / t,
        },
    })
}

/// Value of the discrete `S_k` only.
pub fn action_value(model: &SurfaceModel, timed: &TimedLoop, k: f64) -> Result<f64> {
    let (sq, _) = loopspace::segment_sums(model, &timed.curve)?;
    let kinetic = timed.len() as f64 * sq / (2.0 * timed.period());
    Ok(kinetic + k * timed.period() - flux(model, &timed.curve)?)
}

/// `S_k` with its decomposition and gradient norms.
pub fn action_s(model: &SurfaceModel, timed: &TimedLoop, k: f64) -> Result<ActionReport> {
    let ev = evaluate(model, timed, k)?;
    let period_term = k * timed.period();
    Ok(ActionReport {
        kinetic: ev.kinetic,
        period_term,
        flux: ev.flux,
        total: ev.kinetic + period_term - ev.flux,
        grad_loop_norm: ev.grad.xi.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt(),
        grad_t: ev.grad.psi,
        class: timed.class(),
    })
}

/// Gradient of `S_k`: coordinate partials (`L2`) or their Sobolev Riesz
/// representative (`H1`).
pub fn grad_s(model: &SurfaceModel, timed: &TimedLoop, k: f64, metric: GradientMetric) -> Result<LoopTangent> {
    let ev = evaluate(model, timed, k)?;
    match metric {
        GradientMetric::L2 => Ok(ev.grad),
        GradientMetric::H1 => loopspace::h1_riesz(model, &timed.curve, &ev.grad),
    }
}

/// Exact period partial `k − (1/T²)·Σ N|Δ_i|²_g/2`.
pub fn ds_dt(model: &SurfaceModel, timed: &TimedLoop, k: f64) -> Result<f64> {
    let kinetic = loopspace::loop_kinetic(model, timed)?;
    Ok(k - kinetic / timed.period())
}

/// `A_k` of a sampled path on the cover: `Σ [|Δ_i|²_g/(2δt_i) − θ(m_i)·Δ_i] + k(t_M − t_0)`.
pub fn action_a(model: &SurfaceModel, path: &[Vec2], times: &[f64], k: f64) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::InvalidArgument("a path needs at least 2 points".into()));
    }
    if times.len() != path.len() {
        return Err(Error::DimensionMismatch {
            expected: path.len(),
            got: times.len(),
        });
    }
    for p in path {
        model.check_domain(p)?;
    }
    let mut a = 0.0;
    for (w, tw) in path.windows(2).zip(times.windows(2)) {
        let dt = tw[1] - tw[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        let d = w[1] - w[0];
        let m = (w[0] + w[1]) * 0.5;
        a += model.sq_norm_at(&m, &d) / (2.0 * dt) - model.theta_at(&m).dot(&d);
    }
    Ok(a + k * (times[times.len() - 1] - times[0]))
}

/// `A_k` with uniform time steps over `[0, T]` and its partials with respect to
/// every path point and `T`. Returns `(value, point partials, ∂/∂T)`.
pub(crate) fn path_value_and_grad(model: &SurfaceModel, path: &[Vec2], period: f64, k: f64) -> (f64, Vec<Vec2>, f64) {
    let m_seg = path.len() - 1;
    let c = m_seg as f64 / (2.0 * period);
    let mut sq = 0.0;
    let mut fl = 0.0;
    let mut grad = vec![Vec2::zeros(); path.len()];
    for i in 0..m_seg {
        let (a, b) = (path[i], path[i + 1]);
        let d = b - a;
        let m = (a + b) * 0.5;
        let phi = model.conformal(&m);
        let d2 = d.norm_squared();
        sq += phi * d2;
        let theta = model.theta_at(&m);
        fl += theta.dot(&d);
        let jt = model.theta_jacobian(&m).transpose() * d;
        let common = model.conformal_grad(&m) * (0.5 * c * d2) - jt * 0.5;
        let odd = d * (2.0 * c * phi) - theta;
        grad[i] += common - odd;
        grad[i + 1] += common + odd;
    }
    let kinetic = c * sq;
    (kinetic + k * period - fl, grad, k - kinetic / period)
}
