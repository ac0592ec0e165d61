//! Mountain-pass search between a negative-action loop and a short constant loop.
//!
//! The path is a chain of `P + 1` timed loops with fixed endpoints. Each
//! iteration lets every interior node take one Armijo descent step across the
//! path, with the component along the local path tangent removed. Nodes on
//! either side of the highest one are then re-spaced to equal Sobolev arc
//! length. Once the
//! highest node is close to a critical point, or the path maximum stops
//! dropping, it is refined by Newton steps while the rest of the path keeps
//! relaxing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::action::{self, ActionReport, GradientMetric};
use crate::dynamics::{self, ClosureResidual};
use crate::error::{Error, Result};
use crate::geometry::{FreeHomotopyClass, ModelKind, SurfaceModel, Vec2};
use crate::loopspace::{self, DiscreteLoop, LoopTangent, TimedLoop};

use super::descent::{self, Eval};
use super::newton;
use super::diagnostics::PSDiagnostics;
use super::SolverConfig;

pub const FLAG_UNCONVERGED: &str = "unconverged";
pub const FLAG_STAGNATED: &str = "stagnated";
pub const FLAG_MAX_OFF_SADDLE: &str = "path maximum not at saddle";
pub const FLAG_NONPOSITIVE_LEVEL: &str = "nonpositive level";
pub const FLAG_NO_DESCENT_DIRECTION: &str = "no descent direction found";
pub const FLAG_CLOSURE_FAILED: &str = "closure check failed";

/// Outcome of probing the saddle along the path tangent and random
/// low-frequency directions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleProbe {
    pub directions: usize,
    pub scales: [f64; 2],
    pub descent_found: bool,
    /// Largest decrease of `S_k` seen over all probes.
    #[serde(serialize_with = "crate::io::flagged_f64")]
    pub best_drop: f64,
    /// Least Rayleigh quotient of the Hessian found by power iteration.
    pub lowest_curvature: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MountainPassResult {
    pub k: f64,
    pub mu_estimate: f64,
    #[serde(skip)]
    pub saddle: TimedLoop,
    pub saddle_index: usize,
    #[serde(skip)]
    pub path_nodes: Vec<TimedLoop>,
    pub sup_history: Vec<f64>,
    pub verification: Option<ClosureResidual>,
    pub action: ActionReport,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub probe: Option<SaddleProbe>,
    #[serde(skip)]
    pub diagnostics: PSDiagnostics,
    pub flags: Vec<String>,
}

impl MountainPassResult {
    pub fn period(&self) -> f64 {
        self.saddle.period()
    }
}

/// Iterations over which the path maximum must keep dropping before the
/// highest node is handed to Newton refinement.
const STALL_SPAN: usize = 20;

pub(crate) fn seed_for(seed: u64, k: f64) -> u64 {
    let mut z = seed ^ k.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lerp(a: &TimedLoop, b: &TimedLoop, s: f64) -> Result<TimedLoop> {
    let pts = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p * (1.0 - s) + q * s)
        .collect();
    TimedLoop::new(
        DiscreteLoop::new(pts, a.class())?,
        a.period() * (1.0 - s) + b.period() * s,
    )
}

/// Metric length of the straight segment from `a` to `b`. Where the metric
/// varies across the chart it is integrated along the segment by Simpson's
/// rule, so that long segments far from the base loop are not undercounted.
fn seg_len(model: &SurfaceModel, metric: GradientMetric, a: &TimedLoop, b: &TimedLoop) -> Result<f64> {
    let d = a.difference(b)?;
    if metric == GradientMetric::L2 || model.kind() != ModelKind::HyperbolicHalfplane {
        return Ok(descent::metric_norm_sq(model, metric, a, &d)?.sqrt());
    }
    let mut total = 0.0;
    for (s, w) in [(0.0, 1.0), (0.25, 4.0), (0.5, 2.0), (0.75, 4.0), (1.0, 1.0)] {
        total += w * descent::metric_norm_sq(model, metric, &lerp(a, b, s)?, &d)?.sqrt();
    }
    Ok(total / 12.0)
}

/// Re-spaces `chain` to equal arc length, keeping both ends.
fn respace(model: &SurfaceModel, metric: GradientMetric, chain: &[TimedLoop]) -> Result<Vec<TimedLoop>> {
    let m = chain.len();
    if m <= 2 {
        return Ok(chain.to_vec());
    }
    let mut cum = vec![0.0; m];
    for j in 1..m {
        cum[j] = cum[j - 1] + seg_len(model, metric, &chain[j - 1], &chain[j])?;
    }
    let total = cum[m - 1];
    if !(total > 0.0) {
        return Ok(chain.to_vec());
    }
    let mut out = Vec::with_capacity(m);
    out.push(chain[0].clone());
    let mut seg = 0;
    for i in 1..m - 1 {
        let target = total * i as f64 / (m - 1) as f64;
        while seg + 1 < m - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let d = cum[seg + 1] - cum[seg];
        let f = if d > 0.0 { ((target - cum[seg]) / d).clamp(0.0, 1.0) } else { 0.0 };
        out.push(lerp(&chain[seg], &chain[seg + 1], f)?);
    }
    out.push(chain[m - 1].clone());
    Ok(out)
}

fn unit_tangent(model: &SurfaceModel, metric: GradientMetric, base: &TimedLoop, a: &TimedLoop, b: &TimedLoop) -> Result<Option<LoopTangent>> {
    let d = a.difference(b)?;
    let n2 = descent::metric_norm_sq(model, metric, base, &d)?;
    Ok((n2 > 0.0).then(|| d.scaled(1.0 / n2.sqrt())))
}

fn low_frequency_direction(rng: &mut ChaCha8Rng, n: usize) -> LoopTangent {
    let mut coef = [[0.0f64; 4]; 4];
    for row in coef.iter_mut() {
        for c in row.iter_mut() {
            *c = StandardNormal.sample(rng);
        }
    }
    let xi = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let mut v = Vec2::zeros();
            for (m, row) in coef.iter().enumerate() {
                let (s, c) = (2.0 * std::f64::consts::PI * m as f64 * t).sin_cos();
                v.x += row[0] * c + row[1] * s;
                v.y += row[2] * c + row[3] * s;
            }
            v
        })
        .collect();
    LoopTangent {
        xi,
        psi: StandardNormal.sample(rng),
    }
}

/// Looks for a direction in which `S_k` drops below its value at `x`: the
/// path tangent, the least-curvature direction and random low-frequency
/// perturbations, each tried at two scales in both signs.
pub fn probe_saddle(
    model: &SurfaceModel,
    k: f64,
    x: &TimedLoop,
    tangent: Option<&LoopTangent>,
    cfg: &SolverConfig,
) -> Result<SaddleProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed ^ 0x5AD_D1E, k));
    let s0 = action::action_value(model, x, k)?;
    let tol = 1e-12 * s0.abs().max(1.0);
    let scales = [1e-2, 1e-3];
    let mut dirs: Vec<LoopTangent> = tangent.into_iter().cloned().collect();
    let start = tangent.cloned().unwrap_or_else(|| low_frequency_direction(&mut rng, x.len()));
    let lowest = newton::lowest_curvature(model, k, cfg.metric, x, &start, 80)?;
    if let Some((d, _)) = &lowest {
        dirs.push(d.clone());
    }
    while dirs.len() < cfg.probe_directions {
        dirs.push(low_frequency_direction(&mut rng, x.len()));
    }
    let mut best_drop = f64::NEG_INFINITY;
    for d in &dirs {
        let n2 = descent::metric_norm_sq(model, cfg.metric, x, d)?;
        if !(n2 > 0.0) {
            continue;
        }
        let d = d.scaled(1.0 / n2.sqrt());
        for eps in scales {
            for sign in [1.0, -1.0] {
                let Ok(y) = x.step(&d, sign * eps) else { continue };
                let Ok(s) = action::action_value(model, &y, k) else { continue };
                best_drop = best_drop.max(s0 - s);
            }
        }
    }
    Ok(SaddleProbe {
        directions: dirs.len(),
        scales,
        descent_found: best_drop > tol,
        best_drop,
        lowest_curvature: lowest.map(|(_, c)| c),
    })
}

/// Armijo step for the highest node along `−(G − ⟨G,τ⟩τ)`, the metric
/// gradient with its component along the path removed.
fn transverse_step(
    model: &SurfaceModel,
    k: f64,
    cfg: &SolverConfig,
    x: &TimedLoop,
    ev: &Eval,
    tau: Option<&LoopTangent>,
    alpha: &mut f64,
) -> Result<Option<TimedLoop>> {
    let mut d = ev.dir.scaled(-1.0);
    if let Some(t) = tau {
        d.add_scaled(t, ev.grad.dot(t));
    }
    let mut a = *alpha;
    for attempt in 0..cfg.max_backtracks {
        if let Ok(y) = descent::projected_step(x, &d, a, cfg.t_floor) {
            if let Ok(v) = action::action_value(model, &y, k) {
                let predicted = -ev.grad.dot(&x.difference(&y)?);
                if v < ev.value && v <= ev.value - cfg.armijo_c * predicted {
                    *alpha = if attempt == 0 { (2.0 * a).min(cfg.step_max) } else { a };
                    return Ok(Some(y));
                }
            }
        }
        a *= cfg.armijo_shrink;
    }
    *alpha = a.max(1e-12);
    Ok(None)
}

fn centroid(points: &[Vec2]) -> Vec2 {
    points.iter().fold(Vec2::zeros(), |a, p| a + p) / points.len() as f64
}

/// Numerical mountain pass at energy `k` between [`loopspace::negative_action_seed`]
/// and the constant loop of period `T1` at the seed's centroid.
pub fn mountain_pass(model: &SurfaceModel, k: f64, cfg: &SolverConfig) -> Result<MountainPassResult> {
    cfg.validate()?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArgument(format!("energy must be positive, got {k}")));
    }
    let start = loopspace::negative_action_seed(model, k, cfg.n_points)?;
    let n = start.len();
    let end = TimedLoop::new(
        DiscreteLoop::new(vec![centroid(start.points()); n], FreeHomotopyClass::TRIVIAL)?,
        cfg.t1,
    )?;
    let p = cfg.path_segments;
    let mut nodes = (0..=p)
        .map(|j| lerp(&start, &end, j as f64 / p as f64))
        .collect::<Result<Vec<_>>>()?;
    nodes[0] = start.clone();
    nodes[p] = end.clone();
    let metric = cfg.metric;
    let end_values = [action::action_value(model, &start, k)?, action::action_value(model, &end, k)?];

    let mut alphas = vec![cfg.step_init; p + 1];
    let mut diag = PSDiagnostics::new(0.0);
    let mut sup_history = Vec::new();
    let mut flags = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut locked: Option<usize> = None;
    let mut relock_after = 0;
    let mut prev_record: Option<(usize, TimedLoop, f64)> = None;
    let mut best_norm = f64::INFINITY;
    let mut best_sup = f64::INFINITY;
    let mut since_best = 0;

    let eval_all = |nodes: &[TimedLoop]| -> Result<Vec<Eval>> {
        nodes[1..p]
            .iter()
            .map(|x| descent::eval(model, x, k, metric))
            .collect()
    };
    let mut evals = eval_all(&nodes)?;
    let (ci, ci_norm) = loop {
        let ci = match locked {
            Some(i) => i,
            None => {
                evals
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
                    .expect("at least one interior node")
                    .0
                    + 1
            }
        };
        let top = &evals[ci - 1];
        let ci_norm = top.norm;
        let sup = evals.iter().map(|e| e.value).fold(end_values[0].max(end_values[1]), f64::max);
        sup_history.push(sup);
        let rec_prev = prev_record
            .as_ref()
            .filter(|(i, _, _)| *i == ci)
            .map(|(_, x, l)| (x, *l));
        diag.record(model, iterations, &nodes[ci], top.value, ci_norm, rec_prev)?;
        // a refined node only counts once the rest of the path sits below it
        let settled = ci_norm < cfg.grad_tol;
        if settled && top.value >= sup {
            converged = true;
            break (ci, ci_norm);
        }
        if iterations >= cfg.max_iters {
            flags.push(FLAG_UNCONVERGED.to_string());
            break (ci, ci_norm);
        }
        let progress = if settled {
            sup < best_sup - 1e-12 * sup.abs().max(1.0)
        } else {
            ci_norm < best_norm * 0.999
        };
        best_norm = best_norm.min(ci_norm);
        best_sup = best_sup.min(sup);
        if progress {
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.stagnation_window {
                flags.push(FLAG_STAGNATED.to_string());
                break (ci, ci_norm);
            }
        }

        // highest node: Newton once close to the saddle, otherwise descend
        // across the path
        let h = sup_history.len();
        let stalled = h > STALL_SPAN
            && iterations >= relock_after
            && sup_history[h - 1 - STALL_SPAN] - sup_history[h - 1] <= 1e-4 * sup_history[h - 1].abs();
        if locked.is_none() && (ci_norm < cfg.refine_tol || stalled) {
            locked = Some(ci);
        }
        let mut moved = settled.then(|| nodes[ci].clone());
        if locked.is_some() && moved.is_none() {
            moved = newton::newton_step(model, k, metric, cfg.t_floor, &nodes[ci], &evals[ci - 1])?.map(|(y, _)| y);
            if moved.is_none() {
                log::debug!("Newton step rejected at iteration {iterations}");
                locked = None;
                relock_after = iterations + STALL_SPAN;
            }
        }
        if moved.is_none() {
            let tau = unit_tangent(model, metric, &nodes[ci], &nodes[ci - 1], &nodes[ci + 1])?;
            moved = transverse_step(model, k, cfg, &nodes[ci], &evals[ci - 1], tau.as_ref(), &mut alphas[ci])?;
        }
        let moved = moved.unwrap_or_else(|| nodes[ci].clone());
        let step_len = seg_len(model, metric, &nodes[ci], &moved)?;
        prev_record = Some((ci, nodes[ci].clone(), step_len));

        // every other interior node descends
        let mut next = nodes.clone();
        next[ci] = moved;
        for j in 1..p {
            if j == ci {
                continue;
            }
            let tau = unit_tangent(model, metric, &nodes[j], &nodes[j - 1], &nodes[j + 1])?;
            if let Some(y) = transverse_step(model, k, cfg, &nodes[j], &evals[j - 1], tau.as_ref(), &mut alphas[j])? {
                next[j] = y;
            }
        }
        let left = respace(model, metric, &next[..=ci])?;
        let right = respace(model, metric, &next[ci..])?;
        nodes = left.into_iter().chain(right.into_iter().skip(1)).collect();
        debug_assert_eq!(nodes.len(), p + 1);
        evals = eval_all(&nodes)?;
        iterations += 1;
    };

    let values: Vec<f64> = std::iter::once(end_values[0])
        .chain(evals.iter().map(|e| e.value))
        .chain(std::iter::once(end_values[1]))
        .collect();
    let (arg, mu) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("non-empty path");
    if arg != ci {
        flags.push(FLAG_MAX_OFF_SADDLE.to_string());
    }
    if !(mu > 0.0) {
        flags.push(FLAG_NONPOSITIVE_LEVEL.to_string());
    }
    let saddle = nodes[ci].clone();
    log::debug!(
        "mountain pass k = {k}: {iterations} iterations, mu = {mu:.9}, |grad| = {ci_norm:.3e}, T = {:.6}",
        saddle.period()
    );
    let verification = match dynamics::closure_residual(model, &saddle, k) {
        Ok(c) => Some(c),
        Err(e) => {
            log::warn!("closure check failed: {e}");
            flags.push(FLAG_CLOSURE_FAILED.to_string());
            None
        }
    };
    let tau = unit_tangent(model, metric, &saddle, &nodes[ci - 1], &nodes[ci + 1])?;
    let probe = probe_saddle(model, k, &saddle, tau.as_ref(), cfg)?;
    if !probe.descent_found {
        flags.push(FLAG_NO_DESCENT_DIRECTION.to_string());
    }
    let report = action::action_s(model, &saddle, k)?;
    Ok(MountainPassResult {
        k,
        mu_estimate: mu,
        saddle,
        saddle_index: ci,
        path_nodes: nodes,
        sup_history,
        verification,
        action: report,
        converged,
        iterations,
        grad_norm: ci_norm,
        probe: Some(probe),
        diagnostics: diag,
        flags,
    })
}
