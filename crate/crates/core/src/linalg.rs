//! Banded solvers used by the Sobolev preconditioners.

use crate::error::{Error, Result};

/// Solves a tridiagonal system. `lower[i]` couples rows `i+1` and `i`,
/// `upper[i]` couples rows `i` and `i+1`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || lower.len() + 1 != n.max(1) || upper.len() + 1 != n.max(1) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::SingularSystem("zero pivot".into()));
    }
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem(format!("zero pivot at row {i}")));
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Symmetric cyclic tridiagonal system: `off[i]` couples `i` and `i+1` for
/// `i < n-1`, `corner` couples `0` and `n-1`. Sherman–Morrison on top of the
/// Thomas algorithm.
pub fn solve_cyclic_symmetric(diag: &[f64], off: &[f64], corner: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::SingularSystem(format!("cyclic system needs n >= 3, got {n}")));
    }
    if off.len() != n - 1 || rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    if corner == 0.0 {
        return solve_tridiagonal(off, diag, off, rhs);
    }
    // A = A' + u vᵀ with u = (γ, 0, …, 0, corner), v = (1, 0, …, 0, corner/γ)
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= corner * corner / gamma;
    let x = solve_tridiagonal(off, &bb, off, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner;
    let z = solve_tridiagonal(off, &bb, off, &u)?;
    let vx = x[0] + corner / gamma * x[n - 1];
    let vz = z[0] + corner / gamma * z[n - 1];
    let denom = 1.0 + vz;
    if denom == 0.0 {
        return Err(Error::SingularSystem("Sherman-Morrison denominator vanished".into()));
    }
    let fact = vx / denom;
    Ok(x.iter().zip(&z).map(|(a, b)| a - fact * b).collect())
}
