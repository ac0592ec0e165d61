//! Discrete loops with free period.
//!
//! A loop is stored as `N` lift samples `x̃_0 … x̃_{N-1}` at `t = i/N` in cover
//! coordinates together with a free homotopy class `h`; the closing point is
//! `x̃_N := h·x̃_0`. Segment quantities use the metric at segment midpoints.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::action;
use crate::error::{Error, Result};
use crate::geometry::{DeckMap, FreeHomotopyClass, ModelKind, SurfaceModel, Vec2};
use crate::linalg;

pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Ccw,
    Cw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLoop {
    points: Vec<Vec2>,
    class: FreeHomotopyClass,
}

impl DiscreteLoop {
    pub fn new(points: Vec<Vec2>, class: FreeHomotopyClass) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::InvalidLoop(format!(
                "a loop needs at least {MIN_POINTS} points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidLoop("non-finite point".into()));
        }
        Ok(Self { points, class })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn class(&self) -> FreeHomotopyClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks every point against the chart and the class against the deck group.
    pub fn validate(&self, model: &SurfaceModel) -> Result<DeckMap> {
        let deck = model.deck_map(self.class)?;
        for p in &self.points {
            model.check_domain(p)?;
        }
        model.check_domain(&deck.apply(&self.points[0]))?;
        Ok(deck)
    }

    /// `x̃_N = h·x̃_0`.
    pub fn closure_point(&self, model: &SurfaceModel) -> Result<Vec2> {
        Ok(model.deck_map(self.class)?.apply(&self.points[0]))
    }

    /// Point `i` for `0 ≤ i ≤ N`, the last one being the closing point.
    pub(crate) fn point_ext(&self, deck: &DeckMap, i: usize) -> Vec2 {
        if i == self.points.len() {
            deck.apply(&self.points[0])
        } else {
            self.points[i]
        }
    }

    /// Same loop traversed backwards, starting from the same point.
    pub fn reversed(&self, model: &SurfaceModel) -> Result<Self> {
        let deck = model.deck_map(self.class)?;
        let inv = deck.inverse();
        let n = self.points.len();
        // reversed lift: y_i = x_{N-i}, closing via h⁻¹; re-anchor so y_0 = x_0
        let mut pts = Vec::with_capacity(n);
        pts.push(self.points[0]);
        for i in 1..n {
            pts.push(inv.apply(&self.points[n - i]));
        }
        Self::new(pts, -self.class)
    }

    /// Cyclic index rotation: the new lift starts at `x̃_shift`.
    pub fn rotated(&self, model: &SurfaceModel, shift: usize) -> Result<Self> {
        let deck = model.deck_map(self.class)?;
        let n = self.points.len();
        let shift = shift % n;
        let pts = (0..n)
            .map(|i| {
                let j = i + shift;
                if j < n {
                    self.points[j]
                } else {
                    deck.apply(&self.points[j - n])
                }
            })
            .collect();
        Self::new(pts, self.class)
    }

    /// Applies a cover map to every point (a change of lift when `map` is a deck element).
    pub fn mapped(&self, map: &DeckMap) -> Self {
        Self {
            points: self.points.iter().map(|p| map.apply(p)).collect(),
            class: self.class,
        }
    }

    /// Largest `K = 2^j` (j ≥ 0) such that the lift lies in the box `[-K, K]²`
    /// centred on the chart origin, i.e. the loop belongs to `Λ₀^K`.
    pub fn lift_box_level(&self, model: &SurfaceModel) -> f64 {
        let o = model.origin();
        let r = self
            .points
            .iter()
            .map(|p| (p.x - o.x).abs().max((p.y - o.y).abs()))
            .fold(0.0, f64::max);
        let mut k = 1.0;
        while k < r {
            k *= 2.0;
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimedLoop {
    pub curve: DiscreteLoop,
    period: f64,
}

impl TimedLoop {
    pub fn new(curve: DiscreteLoop, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidLoop(format!("period must be positive, got {period}")));
        }
        Ok(Self { curve, period })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.curve.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.is_empty()
    }

    pub fn class(&self) -> FreeHomotopyClass {
        self.curve.class()
    }

    pub fn points(&self) -> &[Vec2] {
        self.curve.points()
    }

    /// `(x, T) + α·(ξ, ψ)`. Fails if the period would become non-positive.
    pub fn step(&self, dir: &LoopTangent, alpha: f64) -> Result<Self> {
        if dir.xi.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: dir.xi.len(),
            });
        }
        let pts = self
            .points()
            .iter()
            .zip(&dir.xi)
            .map(|(p, d)| p + d * alpha)
            .collect();
        Self::new(DiscreteLoop::new(pts, self.class())?, self.period + alpha * dir.psi)
    }

    /// Tangent pointing from `self` to `other` (same class and resolution).
    pub fn difference(&self, other: &TimedLoop) -> Result<LoopTangent> {
        if other.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(LoopTangent {
            xi: other.points().iter().zip(self.points()).map(|(a, b)| a - b).collect(),
            psi: other.period - self.period,
        })
    }
}

/// Variation `(ξ, ψ)` of a timed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopTangent {
    pub xi: Vec<Vec2>,
    pub psi: f64,
}

impl LoopTangent {
    pub fn zeros(n: usize) -> Self {
        Self {
            xi: vec![Vec2::zeros(); n],
            psi: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Plain coordinate pairing `Σ ξ_i·ζ_i + ψχ`.
    pub fn dot(&self, other: &LoopTangent) -> f64 {
        self.xi.iter().zip(&other.xi).map(|(a, b)| a.dot(b)).sum::<f64>() + self.psi * other.psi
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            xi: self.xi.iter().map(|v| v * s).collect(),
            psi: self.psi * s,
        }
    }

    pub fn add_scaled(&mut self, other: &LoopTangent, s: f64) {
        for (a, b) in self.xi.iter_mut().zip(&other.xi) {
            *a += b * s;
        }
        self.psi += other.psi * s;
    }
}

pub fn make_circle_loop(center: Vec2, radius: f64, orientation: Orientation, n: usize) -> Result<DiscreteLoop> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!("circle radius must be positive, got {radius}")));
    }
    let sign = match orientation {
        Orientation::Ccw => 1.0,
        Orientation::Cw => -1.0,
    };
    let pts = (0..n)
        .map(|i| {
            let a = sign * 2.0 * PI * i as f64 / n as f64;
            center + Vec2::new(a.cos(), a.sin()) * radius
        })
        .collect();
    DiscreteLoop::new(pts, FreeHomotopyClass::TRIVIAL)
}

/// Metric circle of radius `radius` about `center`, sampled at constant speed.
/// Euclidean circle on the tori, hyperbolic circle on the half-plane.
pub fn make_geodesic_circle(
    model: &SurfaceModel,
    center: Vec2,
    radius: f64,
    orientation: Orientation,
    n: usize,
) -> Result<DiscreteLoop> {
    if model.kind() != ModelKind::HyperbolicHalfplane {
        return make_circle_loop(center, radius, orientation, n);
    }
    model.check_domain(&center)?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!("circle radius must be positive, got {radius}")));
    }
    let sign = match orientation {
        Orientation::Ccw => 1.0,
        Orientation::Cw => -1.0,
    };
    let rho = (radius / 2.0).tanh();
    let pts = (0..n)
        .map(|i| {
            let a = sign * 2.0 * PI * i as f64 / n as f64;
            // Poincaré disk point w, sent to the half-plane by z = i(1+w)/(1-w)
            let (wr, wi) = (rho * a.cos(), rho * a.sin());
            let den = (1.0 - wr) * (1.0 - wr) + wi * wi;
            let zx = -2.0 * wi / den;
            let zy = (1.0 - wr * wr - wi * wi) / den;
            Vec2::new(center.x + center.y * zx, center.y * zy)
        })
        .collect();
    let curve = DiscreteLoop::new(pts, FreeHomotopyClass::TRIVIAL)?;
    curve.validate(model)?;
    Ok(curve)
}

/// Straight-line lift from the model origin `o` to `h·o`, sampled uniformly.
pub fn make_class_loop(model: &SurfaceModel, class: FreeHomotopyClass, n: usize) -> Result<DiscreteLoop> {
    let deck = model.deck_map(class)?;
    let o = model.origin();
    let end = deck.apply(&o);
    let pts = (0..n).map(|i| o + (end - o) * (i as f64 / n as f64)).collect();
    DiscreteLoop::new(pts, class)
}

pub(crate) fn segment_sums(model: &SurfaceModel, curve: &DiscreteLoop) -> Result<(f64, f64)> {
    let deck = curve.validate(model)?;
    let n = curve.len();
    let mut sq = 0.0;
    let mut len = 0.0;
    for i in 0..n {
        let a = curve.point_ext(&deck, i);
        let b = curve.point_ext(&deck, i + 1);
        let d = b - a;
        let m = (a + b) * 0.5;
        let s = model.sq_norm_at(&m, &d);
        sq += s;
        len += s.sqrt();
    }
    Ok((sq, len))
}

/// Discrete length `Σ |x̃_{i+1} − x̃_i|_g`.
pub fn loop_length(model: &SurfaceModel, curve: &DiscreteLoop) -> Result<f64> {
    Ok(segment_sums(model, curve)?.1)
}

/// Discrete kinetic term `Σ N|Δ_i|²_g / (2T)`.
pub fn loop_kinetic(model: &SurfaceModel, timed: &TimedLoop) -> Result<f64> {
    let (sq, _) = segment_sums(model, &timed.curve)?;
    Ok(timed.len() as f64 * sq / (2.0 * timed.period()))
}

/// Weights of the discrete Sobolev form on a base loop: the point weight at
/// `x̃_0`, the per-segment weights and the deck scale closing the tangent.
struct H1Weights {
    point: f64,
    segments: Vec<f64>,
    twist: f64,
}

fn h1_weights(model: &SurfaceModel, base: &DiscreteLoop) -> Result<H1Weights> {
    let deck = base.validate(model)?;
    let n = base.len();
    let segments = (0..n)
        .map(|i| {
            let m = (base.point_ext(&deck, i) + base.point_ext(&deck, i + 1)) * 0.5;
            model.conformal(&m)
        })
        .collect();
    Ok(H1Weights {
        point: model.conformal(&base.points()[0]),
        segments,
        twist: deck.scale,
    })
}

/// `⟨ξ(0),ζ(0)⟩ + ∫⟨ξ̇,ζ̇⟩dt + ψχ` for the discrete loop.
pub fn h1_inner(model: &SurfaceModel, base: &DiscreteLoop, a: &LoopTangent, b: &LoopTangent) -> Result<f64> {
    let n = base.len();
    for t in [a, b] {
        if t.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: t.len(),
            });
        }
    }
    let w = h1_weights(model, base)?;
    let nf = n as f64;
    let mut s = w.point * a.xi[0].dot(&b.xi[0]);
    for i in 0..n {
        let (ai1, bi1) = if i + 1 == n {
            (a.xi[0] * w.twist, b.xi[0] * w.twist)
        } else {
            (a.xi[i + 1], b.xi[i + 1])
        };
        s += nf * w.segments[i] * (ai1 - a.xi[i]).dot(&(bi1 - b.xi[i]));
    }
    Ok(s + a.psi * b.psi)
}

/// Riesz representative of the covector `grad` (coordinate partials) in the
/// discrete Sobolev metric: the unique `G` with `h1_inner(G, u) = grad·u`.
pub fn h1_riesz(model: &SurfaceModel, base: &DiscreteLoop, grad: &LoopTangent) -> Result<LoopTangent> {
    let n = base.len();
    if grad.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grad.len(),
        });
    }
    let w = h1_weights(model, base)?;
    let nf = n as f64;
    let s = w.twist;
    let mut diag = vec![0.0; n];
    diag[0] = w.point + nf * (w.segments[0] + s * s * w.segments[n - 1]);
    for i in 1..n {
        diag[i] = nf * (w.segments[i - 1] + w.segments[i]);
    }
    let off: Vec<f64> = (0..n - 1).map(|i| -nf * w.segments[i]).collect();
    let corner = -nf * w.segments[n - 1] * s;
    let mut xi = vec![Vec2::zeros(); n];
    for c in 0..2 {
        let rhs: Vec<f64> = grad.xi.iter().map(|v| v[c]).collect();
        let sol = linalg::solve_cyclic_symmetric(&diag, &off, corner, &rhs)?;
        for (x, v) in xi.iter_mut().zip(sol) {
            x[c] = v;
        }
    }
    Ok(LoopTangent { xi, psi: grad.psi })
}

/// Piecewise-linear resampling by uniform index.
pub fn resample(model: &SurfaceModel, curve: &DiscreteLoop, n_new: usize) -> Result<DiscreteLoop> {
    if n_new < MIN_POINTS {
        return Err(Error::InvalidArgument(format!("resample needs N' >= {MIN_POINTS}")));
    }
    let deck = model.deck_map(curve.class())?;
    let n = curve.len();
    let pts = (0..n_new)
        .map(|j| {
            // exact integer arithmetic keeps coinciding samples bit-identical
            let num = j * n;
            let i = num / n_new;
            let rem = num % n_new;
            if rem == 0 {
                curve.point_ext(&deck, i)
            } else {
                let f = rem as f64 / n_new as f64;
                let a = curve.point_ext(&deck, i);
                a + (curve.point_ext(&deck, i + 1) - a) * f
            }
        })
        .collect();
    DiscreteLoop::new(pts, curve.class())
}

/// Discrete `S_k` minimised over the period alone, with the minimising period.
/// `None` for a constant loop.
pub fn optimal_period_action(model: &SurfaceModel, curve: &DiscreteLoop, k: f64) -> Result<Option<(f64, f64)>> {
    let (sq, _) = segment_sums(model, curve)?;
    if sq <= 0.0 {
        return Ok(None);
    }
    let half = curve.len() as f64 * sq / 2.0;
    let t = (half / k).sqrt();
    let flux = action::flux(model, curve)?;
    Ok(Some((2.0 * (half * k).sqrt() - flux, t)))
}

/// Coarse search over metric circles (centres, radii, both orientations) for a
/// contractible loop whose optimal-period action is below `-threshold`.
/// Large hyperbolic circles are sampled more finely than `n_points`.
pub fn circle_family_search(model: &SurfaceModel, k: f64, n_points: usize, threshold: f64) -> Result<Option<TimedLoop>> {
    family_search(model, k, n_points, threshold, false)
}

/// With `exact_n`, a finely sampled hit is replaced by its `n_points`
/// sampling whenever that is negative too.
fn family_search(model: &SurfaceModel, k: f64, n_points: usize, threshold: f64, exact_n: bool) -> Result<Option<TimedLoop>> {
    let o = model.origin();
    let (radii, centers): (Vec<f64>, Vec<Vec2>) = match model.kind() {
        ModelKind::HyperbolicHalfplane => ((1..=48).map(|j| 0.25 * j as f64).collect(), vec![o]),
        _ => {
            let radii = (0..40).map(|j| 0.05 * 1.2f64.powi(j)).collect();
            let centers = (0..4)
                .flat_map(|a| (0..4).map(move |b| Vec2::new(a as f64 * 0.25, b as f64 * 0.25)))
                .collect();
            (radii, centers)
        }
    };
    let mut best: Option<(f64, TimedLoop)> = None;
    for r in &radii {
        for c in &centers {
            for orient in [Orientation::Ccw, Orientation::Cw] {
                let n = match model.kind() {
                    ModelKind::HyperbolicHalfplane => {
                        // keep hyperbolic segment length near 0.05
                        let length = 2.0 * PI * r.sinh();
                        ((length / 0.05).ceil() as usize).clamp(n_points, 1 << 16)
                    }
                    _ => n_points,
                };
                let curve = make_geodesic_circle(model, *c, *r, orient, n)?;
                let Some((s, t)) = optimal_period_action(model, &curve, k)? else { continue };
                if !(s < -threshold && best.as_ref().is_none_or(|(b, _)| s < *b)) {
                    continue;
                }
                let mut found = TimedLoop::new(curve, t)?;
                if exact_n && n != n_points {
                    let coarse = make_geodesic_circle(model, *c, *r, orient, n_points)?;
                    if let Some((sc, tc)) = optimal_period_action(model, &coarse, k)? {
                        if sc < -threshold {
                            found = TimedLoop::new(coarse, tc)?;
                        }
                    }
                }
                best = Some((s, found));
            }
        }
        if best.is_some() {
            break;
        }
    }
    Ok(best.map(|(_, l)| l))
}

/// Contractible timed loop with `S_k < 0`.
///
/// On the flat torus this is the circle of radius `3√(2k)/|B|` (beyond the
/// threshold `2√(2k)/|B|`), oriented with the field, at period `2πr/√(2k)`.
/// Other models fall back to [`circle_family_search`].
pub fn negative_action_seed(model: &SurfaceModel, k: f64, n_points: usize) -> Result<TimedLoop> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArgument(format!("energy must be positive, got {k}")));
    }
    if model.kind() == ModelKind::FlatTorus {
        let b = model.field_strength();
        if b == 0.0 {
            return Err(Error::NoNegativeSeed(k));
        }
        let speed = (2.0 * k).sqrt();
        let r = 3.0 * speed / b.abs();
        let orient = if b > 0.0 { Orientation::Ccw } else { Orientation::Cw };
        let curve = make_circle_loop(model.origin(), r, orient, n_points)?;
        let seed = TimedLoop::new(curve, 2.0 * PI * r / speed)?;
        if action::action_s(model, &seed, k)?.total < 0.0 {
            return Ok(seed);
        }
    }
    family_search(model, k, n_points, 1e-6, true)?.ok_or(Error::NoNegativeSeed(k))
}
