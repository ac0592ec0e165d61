//! Mañé's action potential and brackets for the critical value.
//!
//! * `m_k(q₀, q₁)` is estimated by descending the discrete `A_k` over paths and
//!   durations; it is `−∞` as soon as a contractible loop of negative action
//!   exists.
//! * The critical value is bracketed below by the largest energy with such a
//!   loop and above by `inf_u sup_q ½|du + θ|²` over grid functions on a box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action;
use crate::error::{Error, Result};
use crate::geometry::{FreeHomotopyClass, ModelKind, SurfaceModel, Vec2, HYPERBOLIC_Y_FLOOR};
use crate::linalg;
use crate::loopspace::{self, DiscreteLoop, Orientation, TimedLoop};
use crate::solvers::descent::Descender;
use crate::solvers::SolverConfig;

/// Values below this are read as "unbounded below".
pub const DIVERGENCE_THRESHOLD: f64 = -1e6;

/// Effort spent looking for a contractible loop with negative action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBudget {
    /// Random contractible starts descended after the circle families.
    pub restarts: usize,
    pub max_iters: usize,
    pub n_points: usize,
    pub seed: u64,
    /// A loop counts when its action is below `−threshold`.
    pub threshold: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 300,
            n_points: 64,
            seed: 0,
            threshold: 1e-6,
        }
    }
}

impl SearchBudget {
    pub fn from_config(cfg: &SolverConfig) -> Self {
        Self {
            restarts: cfg.restarts,
            seed: cfg.seed,
            ..Default::default()
        }
    }
}

/// Same polygon sampled eight times finer, at its optimal period, if it still
/// has action below `−threshold`. Rejects loops whose negativity comes from
/// coarse chords.
fn certify(model: &SurfaceModel, curve: &DiscreteLoop, k: f64, threshold: f64) -> Result<Option<TimedLoop>> {
    let n = curve.len();
    let fine = if n * 8 <= 1 << 16 {
        loopspace::resample(model, curve, n * 8)?
    } else {
        curve.clone()
    };
    match loopspace::optimal_period_action(model, &fine, k)? {
        Some((s, t)) if s < -threshold => {
            let timed = TimedLoop::new(fine, t)?;
            // independent re-evaluation
            Ok((action::action_value(model, &timed, k)? < -threshold).then_some(timed))
        }
        _ => Ok(None),
    }
}

fn random_start(model: &SurfaceModel, rng: &mut ChaCha8Rng, k: f64, n: usize) -> Result<TimedLoop> {
    let (center, radius, scale) = match model.kind() {
        ModelKind::HyperbolicHalfplane => {
            let y = rng.random_range(-1.0f64..1.0).exp();
            (Vec2::new(rng.random_range(-1.0..1.0), y), rng.random_range(0.3..6.0), 0.1 * y)
        }
        _ => {
            let r = 0.1 * 100f64.powf(rng.random::<f64>());
            (Vec2::new(rng.random(), rng.random()), r, 0.1 * r)
        }
    };
    let orient = if rng.random_bool(0.5) { Orientation::Ccw } else { Orientation::Cw };
    let base = loopspace::make_geodesic_circle(model, center, radius, orient, n)?;
    let mut coef = [0.0f64; 8];
    for c in coef.iter_mut() {
        *c = rng.random_range(-1.0..1.0) * scale;
    }
    let pts = base
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let mut q = *p;
            for m in 0..2 {
                let (s, c) = ((m + 2) as f64 * t).sin_cos();
                q.x += coef[4 * m] * c + coef[4 * m + 1] * s;
                q.y += coef[4 * m + 2] * c + coef[4 * m + 3] * s;
            }
            if model.kind() == ModelKind::HyperbolicHalfplane {
                q.y = q.y.max(p.y * 0.5);
            }
            q
        })
        .collect();
    let curve = DiscreteLoop::new(pts, FreeHomotopyClass::TRIVIAL)?;
    let t = loopspace::optimal_period_action(model, &curve, k)?.map_or(1.0, |(_, t)| t);
    TimedLoop::new(curve, t)
}

/// A contractible timed loop with `S_k < −threshold`, if one is found: metric
/// circle families first, then descent of `S_k` from random contractible starts.
pub fn negative_loop_search(model: &SurfaceModel, k: f64, budget: &SearchBudget) -> Result<Option<TimedLoop>> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArgument(format!("energy must be positive, got {k}")));
    }
    if let Some(l) = loopspace::circle_family_search(model, k, budget.n_points, budget.threshold)? {
        if let Some(c) = certify(model, &l.curve, k, budget.threshold)? {
            return Ok(Some(c));
        }
    }
    let cfg = SolverConfig {
        n_points: budget.n_points,
        max_backtracks: 40,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(crate::solvers::mountain_pass::seed_for(budget.seed, k));
    for _ in 0..budget.restarts {
        let Ok(mut x) = random_start(model, &mut rng, k, budget.n_points) else { continue };
        let mut desc = Descender::new(model, k, &cfg);
        let Ok(mut ev) = desc.eval(&x) else { continue };
        for _ in 0..budget.max_iters {
            if ev.value < -budget.threshold {
                break;
            }
            match desc.step(&x, &ev) {
                Ok(Some(acc)) => {
                    x = acc.x;
                    ev = acc.eval;
                }
                _ => break,
            }
        }
        if ev.value < -budget.threshold {
            if let Some(c) = certify(model, &x.curve, k, budget.threshold)? {
                return Ok(Some(c));
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialOptions {
    /// Path segments `M`.
    pub segments: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub t_floor: f64,
    /// Initial durations, in units of `dist/√(2k)`.
    pub duration_factors: Vec<f64>,
    /// Look for negative loops first; finding one makes the potential `−∞`.
    pub detect_unbounded: bool,
    pub search: SearchBudget,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        Self {
            segments: 128,
            max_iters: 20_000,
            grad_tol: 1e-7,
            t_floor: 1e-7,
            duration_factors: vec![0.1, 1.0, 10.0],
            detect_unbounded: true,
            search: SearchBudget::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialEstimate {
    pub q0: Vec2,
    pub q1: Vec2,
    pub k: f64,
    /// Upper estimate of `m_k(q₀, q₁)`; `−∞` when `unbounded`.
    #[serde(serialize_with = "crate::io::flagged_f64")]
    pub value: f64,
    pub unbounded: bool,
    pub unconverged: bool,
    pub grad_norm: f64,
    pub path: Vec<Vec2>,
    pub period: f64,
    #[serde(skip)]
    pub certificate: Option<TimedLoop>,
}

struct PathRun {
    value: f64,
    norm: f64,
    path: Vec<Vec2>,
    period: f64,
    converged: bool,
    diverged: bool,
}

/// Dirichlet Sobolev gradient of the path action: `(points, T)` partials are
/// mapped through `M·Σ w_i Δξ·Δζ` on interior points and the identity on `T`.
fn path_direction(model: &SurfaceModel, path: &[Vec2], grad: &[Vec2], dt: f64) -> Result<(Vec<Vec2>, f64)> {
    let m = path.len() - 1;
    let mf = m as f64;
    let w: Vec<f64> = path.windows(2).map(|s| model.conformal(&((s[0] + s[1]) * 0.5))).collect();
    let inner = m - 1;
    let mut dir = vec![Vec2::zeros(); path.len()];
    if inner > 0 {
        let diag: Vec<f64> = (1..m).map(|i| mf * (w[i - 1] + w[i])).collect();
        let off: Vec<f64> = (1..m - 1).map(|i| -mf * w[i]).collect();
        for c in 0..2 {
            let rhs: Vec<f64> = (1..m).map(|i| grad[i][c]).collect();
            let sol = linalg::solve_tridiagonal(&off, &diag, &off, &rhs)?;
            for (i, v) in sol.into_iter().enumerate() {
                dir[i + 1][c] = v;
            }
        }
    }
    Ok((dir, dt))
}

fn descend_path(model: &SurfaceModel, k: f64, mut path: Vec<Vec2>, mut period: f64, opts: &PotentialOptions) -> Result<PathRun> {
    let value_at = |p: &[Vec2], t: f64| -> Option<(f64, Vec<Vec2>, f64)> {
        if p.iter().all(|q| model.in_domain(q)) {
            Some(action::path_value_and_grad(model, p, t, k))
        } else {
            None
        }
    };
    let (mut value, mut grad, mut dt) = value_at(&path, period).ok_or(Error::OutsideDomain {
        x: path[0].x,
        y: path[0].y,
    })?;
    let mut alpha = 1.0;
    let mut prev: Option<(Vec<Vec2>, f64, Vec<Vec2>, f64)> = None;
    let mut norm = f64::INFINITY;
    for _ in 0..opts.max_iters {
        if value < DIVERGENCE_THRESHOLD {
            return Ok(PathRun {
                value,
                norm,
                path,
                period,
                converged: false,
                diverged: true,
            });
        }
        let at_floor = period <= opts.t_floor && dt > 0.0;
        let (dir, mut dir_t) = path_direction(model, &path, &grad, dt)?;
        if at_floor {
            dir_t = 0.0;
        }
        let pair: f64 = grad.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum::<f64>() + dt * dir_t;
        norm = pair.max(0.0).sqrt();
        if norm < opts.grad_tol {
            return Ok(PathRun {
                value,
                norm,
                path,
                period,
                converged: true,
                diverged: false,
            });
        }
        if let Some((p_old, t_old, g_old, dt_old)) = &prev {
            // Barzilai–Borwein with the same Sobolev pairing
            let s: Vec<Vec2> = path.iter().zip(p_old).map(|(a, b)| a - b).collect();
            let st = period - t_old;
            let sy: f64 = s.iter().zip(grad.iter().zip(g_old)).map(|(s, (g, h))| s.dot(&(g - h))).sum::<f64>() + st * (dt - dt_old);
            let m = path.len() - 1;
            let ss: f64 = (0..m)
                .map(|i| {
                    let w = model.conformal(&((path[i] + path[i + 1]) * 0.5));
                    m as f64 * w * (s[i + 1] - s[i]).norm_squared()
                })
                .sum::<f64>()
                + st * st;
            if sy > 0.0 && ss > 0.0 {
                alpha = (ss / sy).clamp(1e-12, 1e6);
            } else {
                alpha = (alpha * 2.0).min(1e6);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<Vec2> = path.iter().zip(&dir).map(|(p, d)| p - d * alpha).collect();
            let t_trial = (period - alpha * dir_t).max(opts.t_floor);
            if let Some((v, g, d)) = value_at(&trial, t_trial) {
                let moved: f64 = grad.iter().zip(path.iter().zip(&trial)).map(|(g, (a, b))| g.dot(&(a - b))).sum::<f64>()
                    + dt * (period - t_trial);
                if v < value && v <= value - 1e-4 * moved {
                    prev = Some((std::mem::replace(&mut path, trial), period, std::mem::replace(&mut grad, g), dt));
                    period = t_trial;
                    value = v;
                    dt = d;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(PathRun {
        value,
        norm,
        path,
        period,
        converged: norm < opts.grad_tol,
        diverged: value < DIVERGENCE_THRESHOLD,
    })
}

/// Upper estimate of `m_k(q₀, q₁)` from straight-line starts at several durations.
pub fn mane_potential(model: &SurfaceModel, q0: Vec2, q1: Vec2, k: f64, opts: &PotentialOptions) -> Result<PotentialEstimate> {
    model.check_domain(&q0)?;
    model.check_domain(&q1)?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArgument(format!("energy must be positive, got {k}")));
    }
    if opts.segments < 2 || opts.duration_factors.is_empty() {
        return Err(Error::InvalidArgument("potential needs at least 2 segments and one start".into()));
    }
    let unbounded = |certificate: Option<TimedLoop>| PotentialEstimate {
        q0,
        q1,
        k,
        value: f64::NEG_INFINITY,
        unbounded: true,
        unconverged: false,
        grad_norm: 0.0,
        path: vec![q0, q1],
        period: 0.0,
        certificate,
    };
    if opts.detect_unbounded {
        if let Some(l) = negative_loop_search(model, k, &opts.search)? {
            return Ok(unbounded(Some(l)));
        }
    }
    let dist = model.distance(&q0, &q1);
    let base = if dist > 0.0 { dist } else { 1.0 } / (2.0 * k).sqrt();
    let m = opts.segments;
    let line: Vec<Vec2> = (0..=m).map(|i| q0 + (q1 - q0) * (i as f64 / m as f64)).collect();
    let mut best: Option<PathRun> = None;
    for f in &opts.duration_factors {
        let run = descend_path(model, k, line.clone(), (f * base).max(opts.t_floor), opts)?;
        if run.diverged {
            return Ok(unbounded(None));
        }
        let better = match &best {
            None => true,
            Some(b) => (run.converged && !b.converged) || (run.converged == b.converged && run.value < b.value),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    Ok(PotentialEstimate {
        q0,
        q1,
        k,
        value: best.value,
        unbounded: false,
        unconverged: !best.converged,
        grad_norm: best.norm,
        path: best.path,
        period: best.period,
        certificate: None,
    })
}

/// Grid minimax of `½|du + θ|²_g` on one box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimaxEstimate {
    pub radius: f64,
    pub grid_n: usize,
    /// Best true maximum over cell centres seen during the optimization.
    pub value: f64,
    pub iterations: usize,
    /// Box centre in grid coordinates (`(x, ln y)` on the half-plane).
    pub center: [f64; 2],
    /// Nodal values of the best `u`, row-major with `grid_n + 1` columns.
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalUpper {
    /// Sup of the zero-extended box optimum at the largest radius, or `+∞` when flagged infinite.
    #[serde(serialize_with = "crate::io::flagged_f64")]
    pub value: f64,
    pub infinite: bool,
    pub estimates: Vec<MinimaxEstimate>,
}

/// Growth factor per radius doubling read as "unbounded primitive".
pub const INFINITY_GROWTH: f64 = 1.5;

/// Side of the sample lattice on which the sup is taken. It does not depend on
/// the grid, so estimates on different grids bound the same quantity.
const SAMPLES: usize = 64;

/// A sample point in cell `cell` at local coordinates `(s, t) ∈ [0, 1]²`, where
/// `½|du + θ|²_g = ½[(a₁∂₁u + b₁)² + (a₂∂₂u + b₂)²]` in grid coordinates.
struct Sample {
    cell: (usize, usize),
    s: f64,
    t: f64,
    a: [f64; 2],
    b: [f64; 2],
}

struct Lattice {
    n: usize,
    h: f64,
    samples: Vec<Sample>,
}

fn lattice(model: &SurfaceModel, center: [f64; 2], radius: f64, n: usize) -> Lattice {
    let h = 2.0 * radius / n as f64;
    let hs = 2.0 * radius / SAMPLES as f64;
    let locate = |k: usize| {
        let g = (k as f64 + 0.5) * hs / h;
        let c = (g.floor() as usize).min(n - 1);
        (c, g - c as f64)
    };
    let mut samples = Vec::with_capacity(SAMPLES * SAMPLES);
    for j in 0..SAMPLES {
        for i in 0..SAMPLES {
            let (ci, s) = locate(i);
            let (cj, t) = locate(j);
            let g1 = center[0] - radius + (i as f64 + 0.5) * hs;
            let g2 = center[1] - radius + (j as f64 + 0.5) * hs;
            let (a, b) = match model.kind() {
                ModelKind::HyperbolicHalfplane => {
                    let y = g2.exp().max(HYPERBOLIC_Y_FLOOR);
                    let th = model.theta_at(&Vec2::new(g1, y));
                    // coordinates (x, s = ln y): ∂_y u = ∂_s u / y, |·|_g* = y|·|
                    ([y, 1.0], [y * th.x, y * th.y])
                }
                _ => {
                    let th = model.theta_at(&Vec2::new(g1, g2));
                    ([1.0, 1.0], [th.x, th.y])
                }
            };
            samples.push(Sample { cell: (ci, cj), s, t, a, b });
        }
    }
    Lattice { n, h, samples }
}

/// Per sample, `(f_q, c₁, c₂)` for the bilinear `u`.
fn sample_values(lat: &Lattice, u: &[f64]) -> Vec<(f64, f64, f64)> {
    let cols = lat.n + 1;
    let h = lat.h;
    lat.samples
        .iter()
        .map(|sm| {
            let (i, j) = sm.cell;
            let i00 = j * cols + i;
            let (i10, i01, i11) = (i00 + 1, i00 + cols, i00 + cols + 1);
            let (s, t) = (sm.s, sm.t);
            let d1 = ((u[i10] - u[i00]) * (1.0 - t) + (u[i11] - u[i01]) * t) / h;
            let d2 = ((u[i01] - u[i00]) * (1.0 - s) + (u[i11] - u[i10]) * s) / h;
            let c1 = sm.a[0] * d1 + sm.b[0];
            let c2 = sm.a[1] * d2 + sm.b[1];
            (0.5 * (c1 * c1 + c2 * c2), c1, c2)
        })
        .collect()
}

/// `Σ_q w_q ∇f_q` from the output of [`sample_values`].
fn weighted_gradient(lat: &Lattice, vals: &[(f64, f64, f64)], w: &[f64], grad: &mut [f64]) {
    let cols = lat.n + 1;
    grad.iter_mut().for_each(|g| *g = 0.0);
    for ((sm, &(_, c1, c2)), &wq) in lat.samples.iter().zip(vals).zip(w) {
        let (i, j) = sm.cell;
        let i00 = j * cols + i;
        let (i10, i01, i11) = (i00 + 1, i00 + cols, i00 + cols + 1);
        let (s, t) = (sm.s, sm.t);
        let p1 = wq * c1 * sm.a[0] / lat.h;
        let p2 = wq * c2 * sm.a[1] / lat.h;
        grad[i00] += -p1 * (1.0 - t) - p2 * (1.0 - s);
        grad[i10] += p1 * (1.0 - t) - p2 * s;
        grad[i01] += -p1 * t + p2 * (1.0 - s);
        grad[i11] += p1 * t + p2 * s;
    }
}

/// Zeroes the boundary entries, keeping `u = 0` on the box edge.
fn clamp_boundary(n: usize, v: &mut [f64]) {
    for j in 0..=n {
        for i in 0..=n {
            if i == 0 || j == 0 || i == n || j == n {
                v[j * (n + 1) + i] = 0.0;
            }
        }
    }
}

fn true_max(vals: &[(f64, f64, f64)]) -> f64 {
    vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max)
}

fn smoothed_max(f: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let fmax = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = f.iter().map(|v| ((v - fmax) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    (fmax + tau * z.ln(), e.into_iter().map(|v| v / z).collect())
}

const TEMPERATURES: [f64; 7] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001];
/// Schedule for a grid started from the coarser optimum.
const WARM_TEMPERATURES: [f64; 4] = [0.03, 0.01, 0.003, 0.001];
const ITERS_PER_TEMPERATURE: usize = 400;
/// A temperature is left once its smoothed objective drops by less than
/// `1e-9·τ` over this many iterations.
const STALL_WINDOW: usize = 25;

fn box_center(model: &SurfaceModel) -> [f64; 2] {
    let o = model.origin();
    match model.kind() {
        ModelKind::HyperbolicHalfplane => [o.x, o.y.ln()],
        _ => [o.x, o.y],
    }
}

/// Nodal values on the grid of `2m` cells per side of the bilinear function
/// with nodal values `u` on `m` cells per side.
fn prolong(u: &[f64], m: usize) -> Vec<f64> {
    let (cc, n) = (m + 1, 2 * m);
    let at = |i: usize, j: usize| u[j * cc + i];
    let mut out = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let (i0, j0) = (i / 2, j / 2);
            let (i1, j1) = (i0 + i % 2, j0 + j % 2);
            out.push(0.25 * (at(i0, j0) + at(i1, j0) + at(i0, j1) + at(i1, j1)));
        }
    }
    out
}

/// Minimizes the annealed log-sum-exp of `½|du + θ|²_g` over bilinear `u` on a
/// box of half-width `radius` (in `(x, ln y)` on the half-plane), with `u = 0`
/// on the edge so that its extension by zero is defined on the whole cover. The sup runs
/// over a fixed lattice of sample points. Even grids start from the optimum on
/// the grid of half the size, so the estimate never increases along doublings.
pub fn minimax_on_domain(model: &SurfaceModel, radius: f64, grid_n: usize) -> Result<MinimaxEstimate> {
    if grid_n < 16 {
        return Err(Error::InvalidArgument(format!("grid_n must be at least 16, got {grid_n}")));
    }
    if !(radius.is_finite() && radius >= 0.5) {
        return Err(Error::InvalidArgument(format!("domain radius must be at least 0.5, got {radius}")));
    }
    let center = box_center(model);
    if model.kind() == ModelKind::HyperbolicHalfplane && center[1] - radius < HYPERBOLIC_Y_FLOOR.ln() {
        return Err(Error::InvalidArgument("domain reaches below the half-plane floor".into()));
    }
    let coarse = if grid_n % 2 == 0 && grid_n / 2 >= 16 {
        Some(minimax_on_domain(model, radius, grid_n / 2)?)
    } else {
        None
    };
    let n = grid_n;
    let lat = lattice(model, center, radius, n);
    let nodes = (n + 1) * (n + 1);
    let (mut u, schedule, mut iterations): (Vec<f64>, &[f64], usize) = match &coarse {
        Some(c) => (prolong(&c.u, n / 2), &WARM_TEMPERATURES, c.iterations),
        None => (vec![0.0; nodes], &TEMPERATURES, 0),
    };
    let mut grad = vec![0.0; nodes];
    let mut best = true_max(&sample_values(&lat, &u));
    let mut best_u = u.clone();
    for &tau in schedule {
        let objective = |u: &[f64], grad: &mut [f64]| -> (f64, f64) {
            let vals = sample_values(&lat, u);
            let f: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let (s, w) = smoothed_max(&f, tau);
            weighted_gradient(&lat, &vals, &w, grad);
            clamp_boundary(n, grad);
            (s, true_max(&vals))
        };
        let (mut val, _) = objective(&u, &mut grad);
        let mut alpha = lat.h * lat.h;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut history = vec![val];
        for _ in 0..ITERS_PER_TEMPERATURE {
            let gg: f64 = grad.iter().map(|g| g * g).sum();
            if gg.sqrt() < 1e-12 {
                break;
            }
            if let Some((u_old, g_old)) = &prev {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..nodes {
                    let s = u[i] - u_old[i];
                    ss += s * s;
                    sy += s * (grad[i] - g_old[i]);
                }
                if sy > 0.0 {
                    alpha = (ss / sy).min(1e6);
                }
            }
            let mut accepted = false;
            let mut g_new = vec![0.0; nodes];
            for _ in 0..50 {
                let trial: Vec<f64> = u.iter().zip(&grad).map(|(a, g)| a - alpha * g).collect();
                let (v, tmax) = objective(&trial, &mut g_new);
                if v <= val - 1e-4 * alpha * gg {
                    if tmax < best {
                        best = tmax;
                        best_u = trial.clone();
                    }
                    prev = Some((std::mem::replace(&mut u, trial), std::mem::replace(&mut grad, g_new)));
                    val = v;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
            history.push(val);
            let m = history.len();
            if m > STALL_WINDOW && history[m - 1 - STALL_WINDOW] - val <= 1e-9 * tau {
                break;
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Divergence("minimax objective is not finite".into()));
    }
    Ok(MinimaxEstimate {
        radius,
        grid_n,
        value: best,
        iterations,
        center,
        u: best_u,
    })
}

/// Minimax upper estimate of the critical value over boxes of radius `R`,
/// `2R` and `4R`. Flagged infinite when each doubling raises the estimate by
/// more than half. Otherwise the value is the sup of the zero extension of the
/// largest box optimum: the box estimate or `½ sup|θ|²` outside it.
pub fn critical_value_upper(model: &SurfaceModel, radius: f64, grid_n: usize) -> Result<CriticalUpper> {
    let estimates = [1.0, 2.0, 4.0]
        .iter()
        .map(|s| minimax_on_domain(model, radius * s, grid_n))
        .collect::<Result<Vec<_>>>()?;
    let grows = |a: f64, b: f64| b > INFINITY_GROWTH * a && b > 1e-12;
    let infinite = grows(estimates[0].value, estimates[1].value) && grows(estimates[1].value, estimates[2].value);
    Ok(CriticalUpper {
        value: if infinite { f64::INFINITY } else { estimates[2].value.max(model.critical_value_upper_bound()) },
        infinite,
        estimates,
    })
}

/// Default minimax half-width for a model.
pub fn default_radius(model: &SurfaceModel) -> f64 {
    match model.kind() {
        ModelKind::HyperbolicHalfplane => 2.0,
        _ => 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketOptions {
    pub radius: f64,
    pub grid_n: usize,
    pub bisection_steps: usize,
    pub search: SearchBudget,
}

impl BracketOptions {
    pub fn for_model(model: &SurfaceModel) -> Self {
        Self {
            radius: default_radius(model),
            grid_n: 32,
            bisection_steps: 12,
            search: SearchBudget::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalValueBracket {
    /// Largest energy with a certified negative loop (0 if none).
    pub lower: f64,
    /// Minimax estimate; `+∞` when flagged.
    #[serde(serialize_with = "crate::io::flagged_f64")]
    pub upper: f64,
    pub upper_infinite: bool,
    /// Smallest probed energy without a negative loop.
    pub search_limit: f64,
    pub bisection_steps: usize,
    pub budget_exhausted: bool,
    /// `lower` exceeds `upper` by more than the solver tolerance.
    pub inconsistent: bool,
    pub grid: Vec<(f64, usize)>,
    #[serde(skip)]
    pub certificate: Option<TimedLoop>,
    #[serde(skip)]
    pub upper_detail: CriticalUpper,
}

impl CriticalValueBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, c: f64, slack: f64) -> bool {
        self.lower <= c + slack && c <= self.upper + slack
    }
}

/// Bisection on the negative-loop search over `(0, min(k_max, upper)]`,
/// combined with [`critical_value_upper`].
pub fn critical_value_bracket(model: &SurfaceModel, k_max: f64, tol: f64, opts: &BracketOptions) -> Result<CriticalValueBracket> {
    if !(k_max.is_finite() && k_max > 0.0) || !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument("k_max and tol must be positive".into()));
    }
    let upper = critical_value_upper(model, opts.radius, opts.grid_n)?;
    let mut hi = if upper.infinite { k_max } else { k_max.min(upper.value + tol) };
    let mut lo = 0.0;
    let mut certificate = None;
    let mut steps = 0;
    if hi > 0.0 {
        if let Some(l) = negative_loop_search(model, hi, &opts.search)? {
            lo = hi;
            certificate = Some(l);
        }
    }
    while lo < hi && hi - lo >= tol && steps < opts.bisection_steps {
        let mid = 0.5 * (lo + hi);
        steps += 1;
        match negative_loop_search(model, mid, &opts.search)? {
            Some(l) => {
                lo = mid;
                certificate = Some(l);
            }
            None => hi = mid,
        }
        log::debug!("bisection step {steps}: [{lo}, {hi}]");
    }
    let budget_exhausted = lo < hi && hi - lo >= tol;
    let inconsistent = !upper.infinite && lo > upper.value + 1e-3;
    if inconsistent {
        log::warn!("lower bound {lo} exceeds upper estimate {}", upper.value);
    }
    Ok(CriticalValueBracket {
        lower: lo,
        upper: upper.value,
        upper_infinite: upper.infinite,
        search_limit: hi,
        bisection_steps: steps,
        budget_exhausted,
        inconsistent,
        grid: upper.estimates.iter().map(|e| (e.radius, e.grid_n)).collect(),
        certificate,
        upper_detail: upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_loops_on_the_torus() {
        let m = SurfaceModel::flat_torus(1.0);
        let l = negative_loop_search(&m, 5.0, &SearchBudget::default()).unwrap().unwrap();
        assert!(action::action_value(&m, &l, 5.0).unwrap() < 0.0);
        let z = SurfaceModel::flat_torus(0.0);
        assert!(negative_loop_search(&z, 0.3, &SearchBudget::default()).unwrap().is_none());
    }

    #[test]
    fn flat_potential_closed_form() {
        let m = SurfaceModel::flat_torus(0.0);
        let e = mane_potential(&m, Vec2::zeros(), Vec2::new(1.0, 0.0), 0.5, &PotentialOptions::default()).unwrap();
        assert!(!e.unbounded && !e.unconverged);
        assert!((e.value - 1.0).abs() < 1e-6, "{}", e.value);
        assert!((e.period - 1.0).abs() < 1e-4);
    }

    #[test]
    fn potential_on_the_diagonal_vanishes() {
        let m = SurfaceModel::hyperbolic(1.0, None).unwrap();
        let q = Vec2::new(0.2, 1.5);
        let e = mane_potential(&m, q, q, 0.8, &PotentialOptions::default()).unwrap();
        assert!(!e.unbounded);
        assert!(e.value.abs() < 1e-4, "{}", e.value);
    }

    #[test]
    fn uniform_field_potential_is_unbounded() {
        let m = SurfaceModel::flat_torus(1.0);
        let e = mane_potential(&m, Vec2::zeros(), Vec2::zeros(), 0.5, &PotentialOptions::default()).unwrap();
        assert!(e.unbounded);
        assert_eq!(e.value, f64::NEG_INFINITY);
        assert!(e.certificate.is_some());
    }

    #[test]
    fn minimax_zero_field() {
        let m = SurfaceModel::flat_torus(0.0);
        let e = minimax_on_domain(&m, 1.0, 16).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(minimax_on_domain(&m, 1.0, 8).is_err());
    }

    #[test]
    fn lse_gradient_matches_finite_differences() {
        let m = SurfaceModel::hyperbolic(1.0, None).unwrap();
        let n = 16;
        let lat = lattice(&m, [0.0, 0.0], 2.0, n);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..(n + 1) * (n + 1)).map(|_| rng.random_range(-0.3..0.3)).collect();
        let tau = 0.1;
        let obj = |u: &[f64]| {
            let f: Vec<f64> = sample_values(&lat, u).iter().map(|v| v.0).collect();
            smoothed_max(&f, tau).0
        };
        let vals = sample_values(&lat, &u);
        let f: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let (_, w) = smoothed_max(&f, tau);
        let mut g = vec![0.0; u.len()];
        weighted_gradient(&lat, &vals, &w, &mut g);
        for idx in [0, 7, 40, 150, 288] {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[idx] += 1e-6;
            dn[idx] -= 1e-6;
            let fd = (obj(&up) - obj(&dn)) / 2e-6;
            assert!((fd - g[idx]).abs() < 1e-6, "{idx}: {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn prolongation_keeps_the_function() {
        let m = SurfaceModel::exact_torus(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..17 * 17).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coarse = sample_values(&lattice(&m, [0.0, 0.0], 1.0, 16), &u);
        let fine = sample_values(&lattice(&m, [0.0, 0.0], 1.0, 32), &prolong(&u, 16));
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a.0 - b.0).abs() < 1e-12 * a.0.max(1.0));
        }
    }
}
