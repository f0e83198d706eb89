//! Change of variables `S = e^x`, `y = x - (ρ/ξ) v`, `z = (√(1-ρ²)/ξ) v` and
//! the trapezoidal computational domain it produces.
//!
//! In `(y, z)` the Heston operator has isotropic diffusion, which is what
//! the monotone finite element discretization needs. All PDE work happens
//! in these coordinates; `(S, v)` is only used for input and output.

use crate::error::{invalid, Error, Result};
use crate::model::{HestonParams, TruncatedDomain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateMap {
    rho: f64,
    xi: f64,
    shear: f64,
    z_scale: f64,
}

impl CoordinateMap {
    /// Requires `|rho| < 1` and `xi > 0`.
    pub fn new(rho: f64, xi: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return invalid("rho out of (-1,1)");
        }
        if !(xi > 0.0) {
            return invalid("xi must be positive");
        }
        Ok(CoordinateMap {
            rho,
            xi,
            shear: rho / xi,
            z_scale: (1.0 - rho * rho).sqrt() / xi,
        })
    }

    pub fn from_params(params: &HestonParams) -> Result<Self> {
        Self::new(params.rho, params.xi)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// `ρ/ξ`.
    pub fn shear(&self) -> f64 {
        self.shear
    }

    /// `√(1-ρ²)/ξ`, the Jacobian determinant of `(x, v) -> (y, z)`.
    pub fn z_scale(&self) -> f64 {
        self.z_scale
    }

    /// `(x, v) -> (y, z)`.
    #[inline]
    pub fn log_to_transformed(&self, x: f64, v: f64) -> (f64, f64) {
        (x - self.shear * v, self.z_scale * v)
    }

    /// `(y, z) -> (x, v)`.
    #[inline]
    pub fn transformed_to_log(&self, y: f64, z: f64) -> (f64, f64) {
        let v = z / self.z_scale;
        (y + self.shear * v, v)
    }

    pub fn to_transformed(&self, s: f64, v: f64) -> Result<(f64, f64)> {
        if !(s > 0.0) {
            return invalid(format!("price must be positive, got {s}"));
        }
        if v < 0.0 {
            return invalid(format!("variance must be nonnegative, got {v}"));
        }
        Ok(self.log_to_transformed(s.ln(), v))
    }

    pub fn from_transformed(&self, y: f64, z: f64) -> Result<(f64, f64)> {
        if z < 0.0 {
            return invalid(format!("z must be nonnegative, got {z}"));
        }
        let (x, v) = self.transformed_to_log(y, z);
        Ok((x.exp(), v))
    }

    /// Coefficients of `∂/∂v` in terms of `(∂/∂y, ∂/∂z)`: `(-ρ/ξ, √(1-ρ²)/ξ)`.
    pub fn vega_direction(&self) -> (f64, f64) {
        (-self.shear, self.z_scale)
    }

    /// Slope `dy/dz` of the lines of constant `x`.
    pub fn column_slope(&self) -> f64 {
        -self.shear / self.z_scale
    }
}

/// `∂V/∂S = (1/S) ∂w/∂y`.
#[inline]
pub fn delta_from_gradient(grad_w: (f64, f64), s: f64) -> f64 {
    grad_w.0 / s
}

/// `∂V/∂v` recovered from the `(y, z)` gradient.
#[inline]
pub fn vega_from_gradient(map: &CoordinateMap, grad_w: (f64, f64)) -> f64 {
    let (cy, cz) = map.vega_direction();
    cy * grad_w.0 + cz * grad_w.1
}

/// A point of the transformed plane.
pub type Point = [f64; 2];

/// Image of the truncated rectangle: a parallelogram with horizontal bottom
/// and top edges and two edges along lines of constant `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidDomain {
    /// Bottom-left, bottom-right, top-right, top-left.
    pub corners: [Point; 4],
    pub map: CoordinateMap,
    pub domain: TruncatedDomain,
}

/// Boundary regions of the computational domain, named after the boundary
/// condition they carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryRegion {
    /// Left edge, `S = S_min`: Dirichlet data `Λ(0)`.
    Dirichlet,
    /// Bottom edge, `v = 0`: degenerate transport row.
    Bottom,
    /// Right edge, `S = S_max`: Neumann data in `y`.
    Right,
    /// Top edge, `v = v_max`: zero derivative in `v`.
    Top,
}

impl BoundaryRegion {
    /// Precedence order for nodes shared by two regions.
    pub const PRECEDENCE: [BoundaryRegion; 4] = [
        BoundaryRegion::Dirichlet,
        BoundaryRegion::Bottom,
        BoundaryRegion::Right,
        BoundaryRegion::Top,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            BoundaryRegion::Dirichlet => "D",
            BoundaryRegion::Bottom => "Rt",
            BoundaryRegion::Right => "R2",
            BoundaryRegion::Top => "R1",
        }
    }
}

impl TrapezoidDomain {
    pub fn bottom_left(&self) -> Point {
        self.corners[0]
    }

    pub fn height(&self) -> f64 {
        self.corners[3][1] - self.corners[0][1]
    }

    /// Horizontal width (constant across heights).
    pub fn width(&self) -> f64 {
        self.corners[1][0] - self.corners[0][0]
    }

    pub fn y_left(&self, z: f64) -> f64 {
        self.corners[0][0] + self.map.column_slope() * z
    }

    pub fn y_right(&self, z: f64) -> f64 {
        self.corners[1][0] + self.map.column_slope() * z
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[1] >= -tol
            && p[1] <= self.height() + tol
            && p[0] >= self.y_left(p[1]) - tol
            && p[0] <= self.y_right(p[1]) + tol
    }

    /// Region membership of a point lying on the boundary (within `tol`).
    pub fn regions_of(&self, p: Point, tol: f64) -> Vec<BoundaryRegion> {
        let mut out = Vec::new();
        if (p[0] - self.y_left(p[1])).abs() <= tol {
            out.push(BoundaryRegion::Dirichlet);
        }
        if p[1].abs() <= tol {
            out.push(BoundaryRegion::Bottom);
        }
        if (p[0] - self.y_right(p[1])).abs() <= tol {
            out.push(BoundaryRegion::Right);
        }
        if (p[1] - self.height()).abs() <= tol {
            out.push(BoundaryRegion::Top);
        }
        out
    }
}

pub fn build_trapezoid(domain: &TruncatedDomain, map: &CoordinateMap) -> Result<TrapezoidDomain> {
    let corner = |s: f64, v: f64| -> Result<Point> {
        let (y, z) = map.to_transformed(s, v)?;
        Ok([y, z])
    };
    let corners = [
        corner(domain.s_min, 0.0)?,
        corner(domain.s_max, 0.0)?,
        corner(domain.s_max, domain.v_max)?,
        corner(domain.s_min, domain.v_max)?,
    ];
    if !(corners[1][0] > corners[0][0]) || !(corners[3][1] > corners[0][1]) {
        return Err(Error::DegenerateMesh("trapezoid has zero width or height".into()));
    }
    Ok(TrapezoidDomain {
        corners,
        map: *map,
        domain: *domain,
    })
}
