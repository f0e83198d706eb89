//! Point queries, Greeks and grid sampling of solved surfaces.

use crate::error::{Error, Result};
use crate::hjb::ValueSurface;
use crate::mesh::{Mesh, PointLocator};
use crate::transform::{delta_from_gradient, vega_from_gradient, CoordinateMap};

/// Nodal gradients as area-weighted averages of the P1 element gradients.
pub fn recover_gradient(mesh: &Mesh, values: &[f64]) -> Vec<[f64; 2]> {
    let n = mesh.n_nodes();
    let mut grad = vec![[0.0; 2]; n];
    let mut weight = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let mut g = [0.0; 2];
        for k in 0..3 {
            let (p1, p2) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            let w = values[tri[k]] / (2.0 * area);
            g[0] += w * (p1[1] - p2[1]);
            g[1] += w * (p2[0] - p1[0]);
        }
        for &i in tri {
            grad[i][0] += area * g[0];
            grad[i][1] += area * g[1];
            weight[i] += area;
        }
    }
    for (g, w) in grad.iter_mut().zip(&weight) {
        g[0] /= w;
        g[1] /= w;
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointQuote {
    pub s: f64,
    pub v: f64,
    pub value: f64,
    pub delta: f64,
    pub vega: f64,
    /// Control at the vertex with the largest interpolation weight.
    pub control: f64,
}

/// Values, recovered gradients and controls of one time slice.
#[derive(Debug, Clone)]
pub struct Slice<'a> {
    pub values: &'a [f64],
    pub gradients: Vec<[f64; 2]>,
    pub controls: &'a [f64],
}

/// Samples of one time slice on a uniform `(S, v)` grid, `v` varying fastest.
#[derive(Debug, Clone)]
pub struct PricedSurface {
    pub time: f64,
    pub n_s: usize,
    pub n_v: usize,
    pub points: Vec<PointQuote>,
}

impl PricedSurface {
    pub fn get(&self, i_s: usize, i_v: usize) -> &PointQuote {
        &self.points[i_s * self.n_v + i_v]
    }
}

pub struct SurfaceSampler<'a> {
    mesh: &'a Mesh,
    locator: PointLocator,
    map: CoordinateMap,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        SurfaceSampler {
            mesh,
            locator: PointLocator::new(mesh),
            map: mesh.domain().map,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn slice<'s>(&self, surface: &'s ValueSurface, t: f64) -> Result<Slice<'s>> {
        let values = surface.at_time(t)?;
        Ok(Slice {
            values,
            gradients: recover_gradient(self.mesh, values),
            controls: surface.controls_at(t)?,
        })
    }

    pub fn query_slice(&self, slice: &Slice<'_>, s: f64, v: f64) -> Result<PointQuote> {
        if !self.mesh.domain().domain.contains(s, v) {
            return Err(Error::OutsideDomain(s, v));
        }
        let (y, z) = self.map.to_transformed(s, v)?;
        let (t, weights) = self.locator.locate(self.mesh, [y, z]).ok_or(Error::OutsideDomain(s, v))?;
        let tri = self.mesh.triangles()[t];
        let mut value = 0.0;
        let mut grad = (0.0, 0.0);
        let mut nearest = 0;
        for k in 0..3 {
            let i = tri[k];
            value += weights[k] * slice.values[i];
            grad.0 += weights[k] * slice.gradients[i][0];
            grad.1 += weights[k] * slice.gradients[i][1];
            if weights[k] > weights[nearest] {
                nearest = k;
            }
        }
        Ok(PointQuote {
            s,
            v,
            value,
            delta: delta_from_gradient(grad, s),
            vega: vega_from_gradient(&self.map, grad),
            control: slice.controls[tri[nearest]],
        })
    }

    pub fn query(&self, surface: &ValueSurface, s: f64, v: f64, t: f64) -> Result<PointQuote> {
        self.query_slice(&self.slice(surface, t)?, s, v)
    }

    pub fn query_many(&self, surface: &ValueSurface, points: &[(f64, f64)], t: f64) -> Result<Vec<PointQuote>> {
        let slice = self.slice(surface, t)?;
        points.iter().map(|&(s, v)| self.query_slice(&slice, s, v)).collect()
    }

    /// Uniform `n_s × n_v` grid over the truncated `(S, v)` rectangle.
    pub fn sample_grid(&self, surface: &ValueSurface, t: f64, n_s: usize, n_v: usize) -> Result<PricedSurface> {
        if n_s < 2 || n_v < 2 {
            return Err(Error::InvalidInput("sample grid needs at least two points per axis".into()));
        }
        let d = self.mesh.domain().domain;
        let slice = self.slice(surface, t)?;
        let mut points = Vec::with_capacity(n_s * n_v);
        for i in 0..n_s {
            let s = d.s_min + (d.s_max - d.s_min) * i as f64 / (n_s - 1) as f64;
            for j in 0..n_v {
                let v = d.v_max * j as f64 / (n_v - 1) as f64;
                points.push(self.query_slice(&slice, s, v)?);
            }
        }
        Ok(PricedSurface { time: t, n_s, n_v, points })
    }
}
