//! Newton refinement of critical points of `S_k`, with MINRES inner solves.
//!
//! The Hessian is never formed: products come from central differences of
//! the exact gradient. The Sobolev metric preconditions the inner solve and
//! the outer line search works on `½|∇S_k|²`, so the iteration converges to
//! saddles as well as minima.

use nalgebra::DMatrix;

use crate::action::{self, GradientMetric};
use crate::error::Result;
use crate::geometry::SurfaceModel;
use crate::loopspace::{self, LoopTangent, TimedLoop};

use super::descent::{self, Eval};

fn precondition(model: &SurfaceModel, metric: GradientMetric, base: &TimedLoop, r: &LoopTangent) -> Result<LoopTangent> {
    match metric {
        GradientMetric::L2 => Ok(r.clone()),
        GradientMetric::H1 => loopspace::h1_riesz(model, &base.curve, r),
    }
}

/// `H·v` by central differences of the gradient.
fn hess_vec(model: &SurfaceModel, k: f64, metric: GradientMetric, x: &TimedLoop, v: &LoopTangent) -> Result<LoopTangent> {
    let n = descent::metric_norm_sq(model, metric, x, v)?.sqrt();
    if !(n > 0.0) {
        return Ok(LoopTangent::zeros(x.len()));
    }
    let h = 1e-5 * x.period().min(1.0) / n;
    let gp = action::evaluate(model, &x.step(v, h)?, k)?.grad;
    let gm = action::evaluate(model, &x.step(v, -h)?, k)?.grad;
    let mut out = gp;
    out.add_scaled(&gm, -1.0);
    Ok(out.scaled(0.5 / h))
}

/// Preconditioned MINRES for `H δ = b`, started from zero.
fn minres(
    model: &SurfaceModel,
    k: f64,
    metric: GradientMetric,
    x: &TimedLoop,
    b: &LoopTangent,
    rtol: f64,
    max_iter: usize,
) -> Result<LoopTangent> {
    let n = x.len();
    let mut sol = LoopTangent::zeros(n);
    let mut r1 = b.clone();
    let mut y = precondition(model, metric, x, &r1)?;
    let beta1 = r1.dot(&y).max(0.0).sqrt();
    if beta1 == 0.0 {
        return Ok(sol);
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = LoopTangent::zeros(n);
    let mut w2 = LoopTangent::zeros(n);
    for itn in 0..max_iter {
        let v = y.scaled(1.0 / beta);
        y = hess_vec(model, k, metric, x, &v)?;
        if itn > 0 {
            y.add_scaled(&r1, -beta / oldb);
        }
        let alfa = v.dot(&y);
        y.add_scaled(&r2, -alfa / beta);
        r1 = std::mem::replace(&mut r2, y);
        y = precondition(model, metric, x, &r2)?;
        oldb = beta;
        beta = r2.dot(&y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w);
        let mut nw = v;
        nw.add_scaled(&w1, -oldeps);
        nw.add_scaled(&w2, -delta);
        w = nw.scaled(1.0 / gamma);
        sol.add_scaled(&w, phi);
        if phibar <= rtol * beta1 || beta == 0.0 {
            break;
        }
    }
    Ok(sol)
}

/// One damped Newton step. Returns `None` when no step along the Newton
/// direction reduces the gradient norm.
pub(crate) fn newton_step(
    model: &SurfaceModel,
    k: f64,
    metric: GradientMetric,
    t_floor: f64,
    x: &TimedLoop,
    ev: &Eval,
) -> Result<Option<(TimedLoop, Eval)>> {
    let rtol = ev.norm.sqrt().clamp(1e-6, 0.1);
    let delta = minres(model, k, metric, x, &ev.grad.scaled(-1.0), rtol, 4 * x.len() + 2)?;
    let mut t = 1.0;
    for _ in 0..30 {
        if let Ok(y) = descent::projected_step(x, &delta, t, t_floor) {
            if let Ok(e) = descent::eval(model, &y, k, metric) {
                if e.norm <= (1.0 - 1e-4 * t) * ev.norm {
                    return Ok(Some((y, e)));
                }
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Direction of least curvature of `S_k` at `x` in the chosen metric, from
/// Lanczos on the preconditioned Hessian with full reorthogonalization.
/// Returns the Ritz vector, normalized, and its Ritz value.
pub(crate) fn lowest_curvature(
    model: &SurfaceModel,
    k: f64,
    metric: GradientMetric,
    x: &TimedLoop,
    start: &LoopTangent,
    steps: usize,
) -> Result<Option<(LoopTangent, f64)>> {
    let inner = |a: &LoopTangent, b: &LoopTangent| -> Result<f64> {
        match metric {
            GradientMetric::L2 => Ok(a.dot(b)),
            GradientMetric::H1 => loopspace::h1_inner(model, &x.curve, a, b),
        }
    };
    let n0 = inner(start, start)?.sqrt();
    if !(n0 > 0.0) {
        return Ok(None);
    }
    let mut basis = vec![start.scaled(1.0 / n0)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps {
        let q = &basis[j];
        let hq = hess_vec(model, k, metric, x, q)?;
        alpha.push(hq.dot(q));
        let mut w = precondition(model, metric, x, &hq)?;
        for _ in 0..2 {
            for p in &basis {
                let c = inner(&w, p)?;
                w.add_scaled(p, -c);
            }
        }
        let b = inner(&w, &w)?.sqrt();
        if j + 1 == steps || !(b > 1e-12 * alpha[j].abs().max(1e-12)) {
            break;
        }
        beta.push(b);
        basis.push(w.scaled(1.0 / b));
    }
    let m = alpha.len();
    let tri = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = tri.symmetric_eigen();
    let (imin, theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("at least one Lanczos step");
    let mut v = LoopTangent::zeros(x.len());
    for (i, q) in basis.iter().take(m).enumerate() {
        v.add_scaled(q, eig.eigenvectors[(i, imin)]);
    }
    let nv = inner(&v, &v)?.sqrt();
    Ok(Some((v.scaled(1.0 / nv), theta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::loopspace::{make_circle_loop, Orientation};

    #[test]
    fn hessian_products_are_symmetric() {
        let m = crate::geometry::SurfaceModel::flat_torus(1.0);
        let x = TimedLoop::new(make_circle_loop(Vec2::new(0.1, 0.2), 0.8, Orientation::Ccw, 32).unwrap(), 5.0).unwrap();
        let mut a = LoopTangent::zeros(32);
        let mut b = LoopTangent::zeros(32);
        for i in 0..32 {
            let t = i as f64 / 32.0 * std::f64::consts::TAU;
            a.xi[i] = Vec2::new(t.cos(), 0.3 * (2.0 * t).sin());
            b.xi[i] = Vec2::new(0.2 * t.sin(), (3.0 * t).cos());
        }
        a.psi = 0.4;
        b.psi = -0.7;
        let ha = hess_vec(&m, 0.5, GradientMetric::H1, &x, &a).unwrap();
        let hb = hess_vec(&m, 0.5, GradientMetric::H1, &x, &b).unwrap();
        let (l, r) = (b.dot(&ha), a.dot(&hb));
        assert!((l - r).abs() < 1e-6 * l.abs().max(1.0), "{l} vs {r}");
    }

    #[test]
    fn newton_finds_larmor_saddle() {
        let m = crate::geometry::SurfaceModel::flat_torus(1.0);
        let k = 0.5;
        let x0 = TimedLoop::new(make_circle_loop(Vec2::zeros(), 0.9, Orientation::Ccw, 64).unwrap(), 5.8).unwrap();
        let mut x = x0;
        let mut ev = descent::eval(&m, &x, k, GradientMetric::H1).unwrap();
        for _ in 0..20 {
            if ev.norm < 1e-10 {
                break;
            }
            let (y, e) = newton_step(&m, k, GradientMetric::H1, 1e-4, &x, &ev).unwrap().unwrap();
            x = y;
            ev = e;
        }
        assert!(ev.norm < 1e-9, "{}", ev.norm);
        assert!((x.period() - std::f64::consts::TAU).abs() < 1e-2, "{}", x.period());
        let start = LoopTangent { xi: vec![Vec2::new(0.3, -0.1); 64], psi: 1.0 };
        let (_, curv) = lowest_curvature(&m, k, GradientMetric::H1, &x, &start, 60).unwrap().unwrap();
        assert!(curv < -1e-3, "{curv}");
    }
}
