//! Model surfaces described on their universal cover.
//!
//! Every model is conformally flat in its chart, `g = φ(q)·(dx² + dy²)`, which
//! keeps the metric, its derivatives and the Christoffel symbols in closed form.
//! The magnetic form is `σ = b(q) dx∧dy` and each model carries an explicit
//! primitive `θ` with `dθ = σ` on the cover.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// `Γ^l_{jk}` stored as `gamma[l][j][k]`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// Smallest admissible `y` in the half-plane chart.
pub const HYPERBOLIC_Y_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FlatTorus,
    ExactTorus,
    HyperbolicHalfplane,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::FlatTorus => "flat_torus",
            ModelKind::ExactTorus => "exact_torus",
            ModelKind::HyperbolicHalfplane => "hyperbolic_halfplane",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartDomain {
    /// All of ℝ².
    Plane,
    /// `y ≥ y_min`.
    UpperHalfPlane { y_min: f64 },
}

impl fmt::Display for ChartDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartDomain::Plane => f.write_str("R^2"),
            ChartDomain::UpperHalfPlane { y_min } => write!(f, "y >= {y_min:e}"),
        }
    }
}

/// Label of a free homotopy class through its deck element.
///
/// On the torus `(m, n)` is the translation by `(m, n)`. On the half-plane the
/// deck group is generated by one dilation `z ↦ λz`, and `(m, 0)` stands for
/// `z ↦ λ^m z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct FreeHomotopyClass {
    pub m: i64,
    pub n: i64,
}

impl FreeHomotopyClass {
    pub const TRIVIAL: FreeHomotopyClass = FreeHomotopyClass { m: 0, n: 0 };

    pub fn new(m: i64, n: i64) -> Self {
        Self { m, n }
    }

    pub fn is_trivial(&self) -> bool {
        self.m == 0 && self.n == 0
    }
}

impl From<[i64; 2]> for FreeHomotopyClass {
    fn from(v: [i64; 2]) -> Self {
        Self { m: v[0], n: v[1] }
    }
}

impl From<FreeHomotopyClass> for [i64; 2] {
    fn from(c: FreeHomotopyClass) -> Self {
        [c.m, c.n]
    }
}

impl std::ops::Add for FreeHomotopyClass {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.m + rhs.m, self.n + rhs.n)
    }
}

impl std::ops::Neg for FreeHomotopyClass {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.m, -self.n)
    }
}

impl fmt::Display for FreeHomotopyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.m, self.n)
    }
}

/// Affine cover isometry `q ↦ scale·q + shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeckMap {
    pub scale: f64,
    pub shift: Vec2,
}

impl DeckMap {
    pub const IDENTITY: DeckMap = DeckMap {
        scale: 1.0,
        shift: Vector2::new(0.0, 0.0),
    };

    pub fn apply(&self, q: &Vec2) -> Vec2 {
        q * self.scale + self.shift
    }

    /// Push-forward of a tangent vector.
    pub fn push(&self, v: &Vec2) -> Vec2 {
        v * self.scale
    }

    pub fn inverse(&self) -> DeckMap {
        DeckMap {
            scale: 1.0 / self.scale,
            shift: -self.shift / self.scale,
        }
    }
}

/// Run-config block describing a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(rename = "B", default)]
    pub field_strength: f64,
    #[serde(default)]
    pub eta_amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<SurfaceModel> {
        make_model(self.kind, self.field_strength, self.eta_amplitude, self.lambda)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceModel {
    kind: ModelKind,
    field_strength: f64,
    eta_amplitude: f64,
    dilation: Option<f64>,
}

/// Builds one of the catalogued model surfaces.
///
/// * `flat_torus`: ℝ²/ℤ², Euclidean metric, `σ = B dx∧dy`, `θ = B x dy`.
/// * `exact_torus`: ℝ²/ℤ², Euclidean metric, `σ = dη` with
///   `η = ε sin(2πx) dy` defined on the torus itself.
/// * `hyperbolic_halfplane`: `g = (dx² + dy²)/y²`, `σ = B·dA`, `θ = B dx/y`,
///   optionally quotiented by the dilation `z ↦ λz`.
pub fn make_model(
    kind: ModelKind,
    field_strength: f64,
    eta_amplitude: f64,
    lambda: Option<f64>,
) -> Result<SurfaceModel> {
    if !field_strength.is_finite() || !eta_amplitude.is_finite() {
        return Err(Error::InvalidModel("B and eta_amplitude must be finite".into()));
    }
    if kind != ModelKind::ExactTorus && eta_amplitude != 0.0 {
        return Err(Error::InvalidModel(format!(
            "eta_amplitude must be 0 for {kind}"
        )));
    }
    if kind == ModelKind::ExactTorus && field_strength != 0.0 {
        return Err(Error::InvalidModel(
            "exact_torus carries no uniform field; set B = 0".into(),
        ));
    }
    match (kind, lambda) {
        (_, Some(l)) if !(l.is_finite() && l > 1.0) => {
            return Err(Error::InvalidModel(format!("lambda must exceed 1, got {l}")));
        }
        (ModelKind::FlatTorus | ModelKind::ExactTorus, Some(_)) => {
            return Err(Error::InvalidModel(
                "torus deck group is fixed; lambda only applies to hyperbolic_halfplane".into(),
            ));
        }
        _ => {}
    }
    Ok(SurfaceModel {
        kind,
        field_strength,
        eta_amplitude,
        dilation: lambda,
    })
}

impl SurfaceModel {
    pub fn flat_torus(b: f64) -> Self {
        make_model(ModelKind::FlatTorus, b, 0.0, None).expect("finite field strength")
    }

    pub fn exact_torus(eps: f64) -> Self {
        make_model(ModelKind::ExactTorus, 0.0, eps, None).expect("finite amplitude")
    }

    pub fn hyperbolic(b: f64, lambda: Option<f64>) -> Result<Self> {
        make_model(ModelKind::HyperbolicHalfplane, b, 0.0, lambda)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn field_strength(&self) -> f64 {
        self.field_strength
    }

    pub fn eta_amplitude(&self) -> f64 {
        self.eta_amplitude
    }

    pub fn dilation(&self) -> Option<f64> {
        self.dilation
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            field_strength: self.field_strength,
            eta_amplitude: self.eta_amplitude,
            lambda: self.dilation,
        }
    }

    /// Same surface with the magnetic form negated.
    pub fn with_flipped_field(&self) -> Self {
        Self {
            field_strength: -self.field_strength,
            eta_amplitude: -self.eta_amplitude,
            ..self.clone()
        }
    }

    pub fn chart_domain(&self) -> ChartDomain {
        match self.kind {
            ModelKind::HyperbolicHalfplane => ChartDomain::UpperHalfPlane {
                y_min: HYPERBOLIC_Y_FLOOR,
            },
            _ => ChartDomain::Plane,
        }
    }

    /// Base point used for reference loops and default seeds.
    pub fn origin(&self) -> Vec2 {
        match self.kind {
            ModelKind::HyperbolicHalfplane => Vec2::new(0.0, 1.0),
            _ => Vec2::zeros(),
        }
    }

    pub fn deck_generators(&self) -> Vec<DeckMap> {
        match self.kind {
            ModelKind::FlatTorus | ModelKind::ExactTorus => vec![
                DeckMap {
                    scale: 1.0,
                    shift: Vec2::new(1.0, 0.0),
                },
                DeckMap {
                    scale: 1.0,
                    shift: Vec2::new(0.0, 1.0),
                },
            ],
            ModelKind::HyperbolicHalfplane => self
                .dilation
                .map(|l| DeckMap {
                    scale: l,
                    shift: Vec2::zeros(),
                })
                .into_iter()
                .collect(),
        }
    }

    pub fn in_domain(&self, q: &Vec2) -> bool {
        if !(q.x.is_finite() && q.y.is_finite()) {
            return false;
        }
        match self.kind {
            ModelKind::HyperbolicHalfplane => q.y >= HYPERBOLIC_Y_FLOOR,
            _ => true,
        }
    }

    pub fn check_domain(&self, q: &Vec2) -> Result<()> {
        if self.in_domain(q) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { x: q.x, y: q.y })
        }
    }

    pub fn deck_map(&self, class: FreeHomotopyClass) -> Result<DeckMap> {
        match self.kind {
            ModelKind::FlatTorus | ModelKind::ExactTorus => Ok(DeckMap {
                scale: 1.0,
                shift: Vec2::new(class.m as f64, class.n as f64),
            }),
            ModelKind::HyperbolicHalfplane => {
                if class.is_trivial() {
                    return Ok(DeckMap::IDENTITY);
                }
                match self.dilation {
                    Some(l) if class.n == 0 => Ok(DeckMap {
                        scale: l.powi(class.m as i32),
                        shift: Vec2::zeros(),
                    }),
                    _ => Err(Error::UnrepresentableClass(class)),
                }
            }
        }
    }

    pub fn apply_deck(&self, class: FreeHomotopyClass, q: &Vec2) -> Result<Vec2> {
        self.check_domain(q)?;
        Ok(self.deck_map(class)?.apply(q))
    }

    // Unchecked evaluations used on hot paths; callers validate the domain.

    /// Conformal factor φ with `g = φ·I`.
    pub(crate) fn conformal(&self, q: &Vec2) -> f64 {
        match self.kind {
            ModelKind::HyperbolicHalfplane => 1.0 / (q.y * q.y),
            _ => 1.0,
        }
    }

    /// Gradient of the conformal factor.
    pub(crate) fn conformal_grad(&self, q: &Vec2) -> Vec2 {
        match self.kind {
            ModelKind::HyperbolicHalfplane => Vec2::new(0.0, -2.0 / (q.y * q.y * q.y)),
            _ => Vec2::zeros(),
        }
    }

    pub(crate) fn theta_at(&self, q: &Vec2) -> Vec2 {
        match self.kind {
            ModelKind::FlatTorus => Vec2::new(0.0, self.field_strength * q.x),
            ModelKind::ExactTorus => Vec2::new(0.0, self.eta_amplitude * (2.0 * PI * q.x).sin()),
            ModelKind::HyperbolicHalfplane => Vec2::new(self.field_strength / q.y, 0.0),
        }
    }

    /// `J[(i, k)] = ∂θ_i/∂q^k`.
    pub(crate) fn theta_jacobian(&self, q: &Vec2) -> Mat2 {
        match self.kind {
            ModelKind::FlatTorus => Mat2::new(0.0, 0.0, self.field_strength, 0.0),
            ModelKind::ExactTorus => Mat2::new(
                0.0,
                0.0,
                2.0 * PI * self.eta_amplitude * (2.0 * PI * q.x).cos(),
                0.0,
            ),
            ModelKind::HyperbolicHalfplane => {
                Mat2::new(0.0, -self.field_strength / (q.y * q.y), 0.0, 0.0)
            }
        }
    }

    pub(crate) fn sigma_at(&self, q: &Vec2) -> f64 {
        match self.kind {
            ModelKind::FlatTorus => self.field_strength,
            ModelKind::ExactTorus => 2.0 * PI * self.eta_amplitude * (2.0 * PI * q.x).cos(),
            ModelKind::HyperbolicHalfplane => self.field_strength / (q.y * q.y),
        }
    }

    pub(crate) fn christoffel_at(&self, q: &Vec2) -> Christoffel {
        let mut gamma = [[[0.0; 2]; 2]; 2];
        if self.kind != ModelKind::HyperbolicHalfplane {
            return gamma;
        }
        // g = e^{2f} I with f = -ln y
        let df = [0.0, -1.0 / q.y];
        for (l, gl) in gamma.iter_mut().enumerate() {
            for (j, glj) in gl.iter_mut().enumerate() {
                for (k, g) in glj.iter_mut().enumerate() {
                    let mut v = 0.0;
                    if l == j {
                        v += df[k];
                    }
                    if l == k {
                        v += df[j];
                    }
                    if j == k {
                        v -= df[l];
                    }
                    *g = v;
                }
            }
        }
        gamma
    }

    pub fn eval_metric(&self, q: &Vec2) -> Result<Mat2> {
        self.check_domain(q)?;
        Ok(Mat2::identity() * self.conformal(q))
    }

    /// `[∂g/∂x, ∂g/∂y]`.
    pub fn eval_metric_derivative(&self, q: &Vec2) -> Result<[Mat2; 2]> {
        self.check_domain(q)?;
        let dphi = self.conformal_grad(q);
        Ok([Mat2::identity() * dphi.x, Mat2::identity() * dphi.y])
    }

    pub fn eval_christoffel(&self, q: &Vec2) -> Result<Christoffel> {
        self.check_domain(q)?;
        Ok(self.christoffel_at(q))
    }

    pub fn eval_theta(&self, q: &Vec2) -> Result<Vec2> {
        self.check_domain(q)?;
        Ok(self.theta_at(q))
    }

    pub fn eval_sigma_density(&self, q: &Vec2) -> Result<f64> {
        self.check_domain(q)?;
        Ok(self.sigma_at(q))
    }

    /// Dual-metric norm `|θ_q|_g`.
    pub fn theta_norm(&self, q: &Vec2) -> Result<f64> {
        self.check_domain(q)?;
        Ok(self.theta_at(q).norm() / self.conformal(q).sqrt())
    }

    /// `|θ_q|²_g` without the domain check.
    pub(crate) fn sq_norm_theta(&self, q: &Vec2) -> f64 {
        self.theta_at(q).norm_squared() / self.conformal(q)
    }

    pub(crate) fn sq_norm_at(&self, q: &Vec2, v: &Vec2) -> f64 {
        self.conformal(q) * v.norm_squared()
    }

    /// Kinetic energy `½|v|²_g`.
    pub fn energy(&self, q: &Vec2, v: &Vec2) -> f64 {
        0.5 * self.sq_norm_at(q, v)
    }

    /// Riemannian distance on the cover.
    pub fn distance(&self, a: &Vec2, b: &Vec2) -> f64 {
        match self.kind {
            ModelKind::HyperbolicHalfplane => {
                let arg = 1.0 + (a - b).norm_squared() / (2.0 * a.y * b.y);
                arg.max(1.0).acosh()
            }
            _ => (a - b).norm(),
        }
    }

    /// Whether some primitive of σ is invariant under the whole deck group, so
    /// that flux through cylinders is defined for every free homotopy class.
    pub fn has_invariant_primitive(&self) -> bool {
        match self.kind {
            ModelKind::FlatTorus => self.field_strength == 0.0,
            ModelKind::ExactTorus => true,
            // θ = B dx/y is invariant under z ↦ λz
            ModelKind::HyperbolicHalfplane => true,
        }
    }

    /// `sup_q |θ_q|_g`, infinite when θ is unbounded on the cover.
    pub fn theta_sup(&self) -> f64 {
        match self.kind {
            ModelKind::FlatTorus if self.field_strength == 0.0 => 0.0,
            ModelKind::FlatTorus => f64::INFINITY,
            ModelKind::ExactTorus => self.eta_amplitude.abs(),
            ModelKind::HyperbolicHalfplane => self.field_strength.abs(),
        }
    }

    /// Declared upper bound for the critical value, `½‖θ‖²∞` (u = 0).
    pub fn critical_value_upper_bound(&self) -> f64 {
        let s = self.theta_sup();
        0.5 * s * s
    }
}
