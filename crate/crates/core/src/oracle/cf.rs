//! Semi-closed-form Heston call prices under the risk-neutral (`λ = 0`)
//! dynamics, from the characteristic function of `ln S_T`.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use super::quadrature::integrate_half_line;
use crate::error::{invalid, Result};
use crate::model::HestonParams;

/// `ln(1 + z)` accurate for small `|z|`.
fn ln1p(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        // z - z²/2 + z³/3 - z⁴/4
        z * (1.0 - z * (0.5 - z * (1.0 / 3.0 - 0.25 * z)))
    } else {
        (1.0 + z).ln()
    }
}

/// `E[exp(iu ln S_τ)]` for complex `u`, in the rotation-free form with
/// `g = (β - d)/(β + d)` and `e^{-dτ}`.
pub fn characteristic_function(params: &HestonParams, s: f64, v: f64, tau: f64, u: C64) -> C64 {
    let HestonParams { r, kappa, gamma, xi, rho, .. } = *params;
    let i = C64::i();
    let iu = i * u;
    let beta = kappa - rho * xi * iu;
    let ups = u * u + iu;
    let d = (beta * beta + xi * xi * ups).sqrt();
    // (β - d)/ξ² without cancellation
    let q = -ups / (beta + d);
    let g = xi * xi * q / (beta + d);
    let e = (-d * tau).exp();
    let one_minus_e = -expm1(-d * tau);
    let dd = q * one_minus_e / (1.0 - g * e);
    // ln((1 - g e)/(1 - g)) = ln(1 + g(1 - e)/(1 - g))
    let cc = kappa * gamma * (q * tau - 2.0 / (xi * xi) * ln1p(g * one_minus_e / (1.0 - g)));
    (iu * (s.ln() + r * tau) + cc + dd * v).exp()
}

/// `e^z - 1` accurate for small `|z|`.
fn expm1(z: C64) -> C64 {
    if z.norm() < 1e-5 {
        z * (1.0 + z * (0.5 + z / 6.0))
    } else {
        z.exp() - 1.0
    }
}

const QUAD_TOL: f64 = 1e-10;

/// European call `S P1 - K e^{-rτ} P2` at `(s, v)` with time to maturity `tau`.
pub fn heston_cf_call(params: &HestonParams, s: f64, v: f64, tau: f64, strike: f64) -> Result<f64> {
    if !(s > 0.0) || !(strike > 0.0) || !(v >= 0.0) || !(tau >= 0.0) {
        return invalid("call pricing needs s, K > 0, v >= 0 and tau >= 0");
    }
    if tau == 0.0 {
        return Ok((s - strike).max(0.0));
    }
    let i = C64::i();
    let k = strike.ln();
    let forward = s * (params.r * tau).exp();
    let phi = |u: C64| characteristic_function(params, s, v, tau, u);
    let p1 = integrate_half_line(
        |u| {
            let z = (-i * u * k).exp() * phi(C64::new(u, -1.0)) / (i * u * forward);
            z.re
        },
        QUAD_TOL,
        QUAD_TOL,
    )?;
    let p2 = integrate_half_line(
        |u| {
            let z = (-i * u * k).exp() * phi(C64::new(u, 0.0)) / (i * u);
            z.re
        },
        QUAD_TOL,
        QUAD_TOL,
    )?;
    let p1 = 0.5 + p1 / PI;
    let p2 = 0.5 + p2 / PI;
    Ok(s * p1 - strike * (-params.r * tau).exp() * p2)
}
