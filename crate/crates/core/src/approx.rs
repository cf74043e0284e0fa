//! Tangent lower bounds used by the successive convex approximation steps.
//!
//! Each function is exact at its expansion point and lies below its target
//! everywhere on the stated domain.

use crate::linalg::{inner, CVector};
use crate::{Error, Result};

/// Lower bound on `|h^H w|^2 / beta` linearized at `(w0, beta0)`:
/// `2 Re(w0^H h h^H w) / beta0 - (|h^H w0| / beta0)^2 beta`.
pub fn qol_bound(h: &CVector, w: &CVector, beta: f64, w0: &CVector, beta0: f64) -> Result<f64> {
    if !(beta0 > 0.0) {
        return Err(Error::Domain(format!("beta0 must be positive, got {beta0}")));
    }
    let a0 = inner(h, w0);
    let a = inner(h, w);
    Ok(2.0 * (a0.conj() * a).re / beta0 - (a0.norm() / beta0).powi(2) * beta)
}

/// Lower bound on `r^2 / z` linearized at `(r0, z0)`: `(2 r0 / z0) r - (r0 / z0)^2 z`.
pub fn ratio_bound(r: f64, z: f64, r0: f64, z0: f64) -> Result<f64> {
    if !(z0 > 0.0) {
        return Err(Error::Domain(format!("z0 must be positive, got {z0}")));
    }
    let q = r0 / z0;
    Ok(2.0 * q * r - q * q * z)
}

/// Tangent of `1 / (1 + gamma)` at `gamma0`.
pub fn inv1p_tangent(gamma: f64, gamma0: f64) -> f64 {
    let s = 1.0 + gamma0;
    1.0 / s - (gamma - gamma0) / (s * s)
}

/// `ln(1 + gamma0) + (gamma - gamma0) / (1 + gamma0) - (gamma - gamma0)^2 / 2`,
/// a concave quadratic lower bound on `ln(1 + gamma)` for nonnegative arguments.
pub fn log_quadratic_bound(gamma: f64, gamma0: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma0 >= 0.0) {
        return Err(Error::Domain(format!(
            "log bound needs nonnegative arguments, got gamma={gamma}, gamma0={gamma0}"
        )));
    }
    let dg = gamma - gamma0;
    Ok(gamma0.ln_1p() + dg / (1.0 + gamma0) - 0.5 * dg * dg)
}
