//! Magnetic flow integration and closed-orbit verification.
//!
//! In chart coordinates the flow is the Euler–Lagrange flow of
//! `L(q, v) = ½|v|²_g − θ_q(v)`:
//!
//! `q̈^l = −Γ^l_{jk} q̇^j q̇^k + b(q) (g⁻¹ J q̇)^l`, with `J(v_x, v_y) = (−v_y, v_x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SurfaceModel, Vec2};
use crate::loopspace::TimedLoop;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec2,
    pub v: Vec2,
}

impl PhaseState {
    pub fn new(q: Vec2, v: Vec2) -> Self {
        Self { q, v }
    }

    pub fn energy(&self, model: &SurfaceModel) -> f64 {
        model.energy(&self.q, &self.v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitSample {
    pub t: f64,
    pub state: PhaseState,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    pub samples: Vec<OrbitSample>,
    /// `max_t |E(t) − E(0)|`.
    pub energy_drift: f64,
    pub steps: usize,
    pub step_size: f64,
    pub halvings: u32,
    pub drift_exceeded: bool,
}

impl Orbit {
    pub fn last(&self) -> &OrbitSample {
        self.samples.last().expect("orbit has at least the initial sample")
    }

    /// Time average of the energy (trapezoid rule over the samples).
    pub fn mean_energy(&self) -> f64 {
        let s = &self.samples;
        if s.len() < 2 {
            return s[0].energy;
        }
        let span = s[s.len() - 1].t - s[0].t;
        let area: f64 = s
            .windows(2)
            .map(|w| 0.5 * (w[0].energy + w[1].energy) * (w[1].t - w[0].t))
            .sum();
        area / span
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateOptions {
    /// Largest step; the actual step divides the duration evenly.
    pub max_step: f64,
    /// Allowed energy drift per unit time.
    pub energy_tol: f64,
    /// Step halvings attempted when the drift budget is exceeded.
    pub max_halvings: u32,
    pub adaptive: bool,
    /// Keep every n-th step in the returned samples (the endpoint is always kept).
    pub sample_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            max_step: 1e-2,
            energy_tol: 1e-8,
            max_halvings: 8,
            adaptive: true,
            sample_every: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosureResidual {
    pub position_gap: f64,
    pub velocity_gap: f64,
    pub energy_error: f64,
    pub energy_drift: f64,
}

impl ClosureResidual {
    pub fn max_component(&self) -> f64 {
        self.position_gap
            .max(self.velocity_gap)
            .max(self.energy_error)
            .max(self.energy_drift)
    }
}

pub(crate) fn accel_at(model: &SurfaceModel, q: &Vec2, v: &Vec2) -> Vec2 {
    let gamma = model.christoffel_at(q);
    let mut a = Vec2::zeros();
    for (l, gl) in gamma.iter().enumerate() {
        let mut s = 0.0;
        for (j, glj) in gl.iter().enumerate() {
            for (kk, g) in glj.iter().enumerate() {
                s += g * v[j] * v[kk];
            }
        }
        a[l] = -s;
    }
    a + Vec2::new(-v.y, v.x) * (model.sigma_at(q) / model.conformal(q))
}

/// Acceleration of the magnetic flow at `state`.
pub fn lorentz_rhs(model: &SurfaceModel, state: &PhaseState) -> Result<Vec2> {
    model.check_domain(&state.q)?;
    Ok(accel_at(model, &state.q, &state.v))
}

fn rk4_step(model: &SurfaceModel, s: &PhaseState, h: f64) -> PhaseState {
    let f = |q: &Vec2, v: &Vec2| (*v, accel_at(model, q, v));
    let (k1q, k1v) = f(&s.q, &s.v);
    let (k2q, k2v) = f(&(s.q + k1q * (h / 2.0)), &(s.v + k1v * (h / 2.0)));
    let (k3q, k3v) = f(&(s.q + k2q * (h / 2.0)), &(s.v + k2v * (h / 2.0)));
    let (k4q, k4v) = f(&(s.q + k3q * h), &(s.v + k3v * h));
    PhaseState {
        q: s.q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0),
        v: s.v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
    }
}

fn integrate_fixed(model: &SurfaceModel, state: &PhaseState, duration: f64, steps: usize, sample_every: usize) -> Result<Orbit> {
    let h = duration / steps as f64;
    let e0 = state.energy(model);
    let mut s = *state;
    let mut samples = vec![OrbitSample {
        t: 0.0,
        state: s,
        energy: e0,
    }];
    let mut drift: f64 = 0.0;
    for i in 1..=steps {
        s = rk4_step(model, &s, h);
        if !model.in_domain(&s.q) || !s.v.iter().all(|c| c.is_finite()) {
            return Err(Error::Integration(format!(
                "trajectory left the chart domain at t = {:.6}",
                i as f64 * h
            )));
        }
        let e = s.energy(model);
        drift = drift.max((e - e0).abs());
        if i % sample_every == 0 || i == steps {
            samples.push(OrbitSample {
                t: i as f64 * h,
                state: s,
                energy: e,
            });
        }
    }
    Ok(Orbit {
        samples,
        energy_drift: drift,
        steps,
        step_size: h,
        halvings: 0,
        drift_exceeded: false,
    })
}

/// Classical fourth-order Runge–Kutta with step halving until the energy drift
/// fits `energy_tol · duration · max(1, E₀)`.
pub fn integrate(model: &SurfaceModel, state: &PhaseState, duration: f64, opts: &IntegrateOptions) -> Result<Orbit> {
    model.check_domain(&state.q)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    if !(opts.max_step > 0.0) || opts.sample_every == 0 {
        return Err(Error::InvalidArgument("invalid integration options".into()));
    }
    let budget = opts.energy_tol * duration * state.energy(model).max(1.0);
    let mut steps = (duration / opts.max_step).ceil().max(1.0) as usize;
    let mut halvings = 0;
    loop {
        let mut orbit = integrate_fixed(model, state, duration, steps, opts.sample_every)?;
        orbit.halvings = halvings;
        if !opts.adaptive || orbit.energy_drift <= budget {
            return Ok(orbit);
        }
        if halvings >= opts.max_halvings {
            orbit.drift_exceeded = true;
            return Ok(orbit);
        }
        halvings += 1;
        steps *= 2;
    }
}

/// Initial state of the orbit represented by a critical timed loop: position
/// `x̃_0` and central-difference velocity `(x̃_1 − h⁻¹x̃_{N−1})·N/(2T)`.
pub fn orbit_from_critical(model: &SurfaceModel, timed: &TimedLoop) -> Result<PhaseState> {
    let deck = timed.curve.validate(model)?;
    let pts = timed.points();
    let n = pts.len();
    let prev = deck.inverse().apply(&pts[n - 1]);
    let v = (pts[1] - prev) * (n as f64 / (2.0 * timed.period()));
    Ok(PhaseState::new(pts[0], v))
}

/// Integrates one period from [`orbit_from_critical`] and compares against the
/// deck-translated start.
pub fn closure_residual(model: &SurfaceModel, timed: &TimedLoop, k: f64) -> Result<ClosureResidual> {
    closure_residual_with(model, timed, k, &IntegrateOptions::default())
}

pub fn closure_residual_with(model: &SurfaceModel, timed: &TimedLoop, k: f64, opts: &IntegrateOptions) -> Result<ClosureResidual> {
    let (res, _) = verify_orbit(model, timed, k, opts)?;
    Ok(res)
}

/// Closure residual together with the integrated orbit.
pub fn verify_orbit(model: &SurfaceModel, timed: &TimedLoop, k: f64, opts: &IntegrateOptions) -> Result<(ClosureResidual, Orbit)> {
    let start = orbit_from_critical(model, timed)?;
    let orbit = integrate(model, &start, timed.period(), opts)?;
    let deck = model.deck_map(timed.class())?;
    let target_q = deck.apply(&start.q);
    let target_v = deck.push(&start.v);
    let end = orbit.last().state;
    let res = ClosureResidual {
        position_gap: model.distance(&end.q, &target_q),
        velocity_gap: (model.conformal(&target_q)).sqrt() * (end.v - target_v).norm(),
        energy_error: (orbit.mean_energy() - k).abs(),
        energy_drift: orbit.energy_drift,
    };
    Ok((res, orbit))
}
