//! Discrete operators for the transformed Heston problem.
//!
//! Interior rows use P1 finite elements with lumped mass: element-mean
//! diffusion in the stiffness form, nodal-velocity convection tested against
//! the lumped basis, and artificial diffusion clipped edgewise until every
//! off-diagonal entry is nonpositive across the stabilization interval.
//! Boundary rows are imposed strongly:
//!
//! | region | row |
//! |--------|-----|
//! | `D`  | `w = Λ(0)` |
//! | `R1` | `w_i - w(P) = 0`, `P` one step back along `∂/∂v` |
//! | `R2` | `w_i - w(P) = δ ∂Λ/∂x`, `P` one step back in `y` |
//! | `Rt` | upwind transport `−w_t + b(0)·∇w + r w = 0` |
//!
//! The operator for a control `λ` is `base + λ * lambda_matrix` exactly.

use crate::error::{invalid, Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, NodeTag, PointLocator};
use crate::model::{ControlInterval, HestonParams};
use crate::payoff::Payoff;
use crate::transform::{BoundaryRegion, CoordinateMap, Point};

/// Coefficients of the canonical operator
/// `−a(z) Δw + b_y ∂w/∂y + b_z ∂w/∂z + r w` at one height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalCoefficients {
    pub diffusion: f64,
    pub drift_y: f64,
    pub drift_z: f64,
    pub reaction: f64,
}

/// Drift split into its `λ`-independent part and the coefficient of `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSplit {
    pub base: [f64; 2],
    pub slope: [f64; 2],
}

pub fn drift_split(z: f64, params: &HestonParams) -> DriftSplit {
    let HestonParams { r, kappa, gamma, xi, rho, .. } = *params;
    let s = (1.0 - rho * rho).sqrt();
    let zp = z.max(0.0);
    DriftSplit {
        base: [
            -r + kappa * gamma * rho / xi + (0.5 * xi - kappa * rho) / s * zp,
            -kappa * gamma * s / xi + kappa * zp,
        ],
        slope: [-rho * (xi * zp / s).sqrt(), (xi * zp * s).sqrt()],
    }
}

/// `a(z) = ξ √(1-ρ²) z / 2`.
#[inline]
pub fn diffusion_coefficient(z: f64, params: &HestonParams) -> f64 {
    0.5 * params.xi * (1.0 - params.rho * params.rho).sqrt() * z
}

pub fn coefficients_at(z: f64, lambda: f64, params: &HestonParams) -> Result<CanonicalCoefficients> {
    if !(z >= 0.0) {
        return invalid(format!("height must be nonnegative, got {z}"));
    }
    let d = drift_split(z, params);
    Ok(CanonicalCoefficients {
        diffusion: diffusion_coefficient(z, params),
        drift_y: d.base[0] + lambda * d.slope[0],
        drift_z: d.base[1] + lambda * d.slope[1],
        reaction: params.r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Pde,
    Dirichlet,
    NeumannY,
    Oblique,
    RobinBottom,
}

impl RowKind {
    /// Rows carrying a time derivative.
    pub fn is_dynamic(&self) -> bool {
        matches!(self, RowKind::Pde | RowKind::RobinBottom)
    }
}

/// Sparse row `Σ entries·w = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl StencilRow {
    fn push(&mut self, j: usize, v: f64) {
        match self.entries.iter_mut().find(|e| e.0 == j) {
            Some(e) => e.1 += v,
            None => self.entries.push((j, v)),
        }
    }

    pub fn apply(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| v * w[j]).sum()
    }
}

/// One artificial-diffusion increment added to row `row`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionIncrement {
    pub row: usize,
    pub col: usize,
    pub amount: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    base_matrix: SparseMatrix,
    lambda_matrix: SparseMatrix,
    rhs: Vec<f64>,
    row_kind: Vec<RowKind>,
    mass: Vec<f64>,
    final_values: Vec<f64>,
    ordering: Vec<usize>,
    stabilization: ControlInterval,
    artificial_diffusion: Vec<DiffusionIncrement>,
    params: HestonParams,
    payoff: Payoff,
}

impl DiscreteOperator {
    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn base_matrix(&self) -> &SparseMatrix {
        &self.base_matrix
    }

    pub fn lambda_matrix(&self) -> &SparseMatrix {
        &self.lambda_matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row_kind(&self) -> &[RowKind] {
        &self.row_kind
    }

    /// Lumped-mass weight of the time derivative per row (1 or 0).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `Λ(S)` sampled at the nodes.
    pub fn final_values(&self) -> &[f64] {
        &self.final_values
    }

    /// Bandwidth-reducing node ordering.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn stabilization(&self) -> &ControlInterval {
        &self.stabilization
    }

    pub fn artificial_diffusion(&self) -> &[DiffusionIncrement] {
        &self.artificial_diffusion
    }

    pub fn params(&self) -> &HestonParams {
        &self.params
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn maturity(&self) -> f64 {
        self.params.maturity
    }

    /// Spatial operator for a spatially constant control.
    pub fn matrix_at(&self, lambda: f64) -> SparseMatrix {
        self.base_matrix.axpy(lambda, &self.lambda_matrix)
    }

    /// `diag(mass)/dt + base + diag(λ_i) lambda_matrix` with one control per row.
    pub fn system_matrix(&self, row_lambda: &[f64], dt: f64) -> SparseMatrix {
        let mut out = self.base_matrix.clone();
        let rp = self.base_matrix.row_ptr().to_vec();
        let cols = self.base_matrix.col_idx().to_vec();
        let lam = self.lambda_matrix.values();
        let vals = out.values_mut();
        for i in 0..self.n() {
            let l = row_lambda[i];
            for k in rp[i]..rp[i + 1] {
                vals[k] += l * lam[k];
                if cols[k] == i {
                    vals[k] += self.mass[i] / dt;
                }
            }
        }
        out
    }

    /// Checks the M-matrix sign pattern of the implicit system for control `λ`:
    /// positive diagonal, nonpositive off-diagonals and nonnegative row sums.
    pub fn check_m_matrix(&self, lambda: f64, dt: f64) -> Result<()> {
        let a = self.system_matrix(&vec![lambda; self.n()], dt);
        for i in 0..self.n() {
            let mut sum = 0.0;
            let mut scale: f64 = 0.0;
            for (j, v) in a.row(i) {
                sum += v;
                scale = scale.max(v.abs());
                let bad = if j == i { !(v > 0.0) } else { v > 0.0 };
                if bad {
                    return Err(Error::MMatrixViolation {
                        row: i,
                        col: j,
                        element: None,
                        value: v,
                    });
                }
            }
            if sum < -1e-12 * scale {
                return Err(Error::MMatrixViolation {
                    row: i,
                    col: i,
                    element: None,
                    value: sum,
                });
            }
        }
        Ok(())
    }
}

/// `Λ(S(y, z))` at every node.
pub fn terminal_values(mesh: &Mesh, map: &CoordinateMap, payoff: &Payoff) -> Vec<f64> {
    mesh.nodes()
        .iter()
        .map(|p| {
            let (x, _) = map.transformed_to_log(p[0], p[1].max(0.0));
            payoff.evaluate(x.exp())
        })
        .collect()
}

fn row_kind_of(tag: NodeTag) -> RowKind {
    match tag {
        NodeTag::Interior => RowKind::Pde,
        NodeTag::Boundary(BoundaryRegion::Dirichlet) => RowKind::Dirichlet,
        NodeTag::Boundary(BoundaryRegion::Top) => RowKind::Oblique,
        NodeTag::Boundary(BoundaryRegion::Right) => RowKind::NeumannY,
        NodeTag::Boundary(BoundaryRegion::Bottom) => RowKind::RobinBottom,
    }
}

/// Geometry helpers shared by the boundary rows.
struct BoundaryContext<'a> {
    mesh: &'a Mesh,
    locator: &'a PointLocator,
    neighbours: Vec<Vec<usize>>,
}

impl BoundaryContext<'_> {
    /// Length of the step from node `i` back along the unit direction `u`,
    /// taken as the projection of the best-aligned incident edge.
    fn step_along(&self, i: usize, u: [f64; 2]) -> f64 {
        let p = self.mesh.node(i);
        self.neighbours[i]
            .iter()
            .map(|&j| {
                let q = self.mesh.node(j);
                let e = [q[0] - p[0], q[1] - p[1]];
                let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                let proj = e[0] * u[0] + e[1] * u[1];
                (proj / len, proj)
            })
            .filter(|&(cos, _)| cos > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, proj)| proj)
            .unwrap_or(0.0)
    }

    /// `w(P)` as nonnegative weights on mesh nodes.
    fn interpolate(&self, p: Point) -> Option<Vec<(usize, f64)>> {
        let (t, lam) = self.locator.locate(self.mesh, p)?;
        let tri = self.mesh.triangles()[t];
        Some(tri.iter().copied().zip(lam).filter(|&(_, l)| l > 0.0).collect())
    }

    /// Row `w_i - w(p_i - δu) = rhs_per_length * δ`.
    fn backward_difference_row(&self, i: usize, u: [f64; 2], rhs_per_length: f64) -> Result<StencilRow> {
        let delta = self.step_along(i, [-u[0], -u[1]]);
        if !(delta > 0.0) {
            return Err(Error::DegenerateMesh(format!("no interior neighbour behind boundary node {i}")));
        }
        let p = self.mesh.node(i);
        let probe = [p[0] - delta * u[0], p[1] - delta * u[1]];
        let weights = self
            .interpolate(probe)
            .ok_or_else(|| Error::DegenerateMesh(format!("probe point of boundary node {i} leaves the mesh")))?;
        let mut row = StencilRow {
            entries: vec![(i, 1.0)],
            rhs: rhs_per_length * delta,
        };
        for (k, w) in weights {
            row.push(k, -w);
        }
        Ok(row)
    }

    /// Neighbours of bottom node `i` along the bottom edge: `(left, right)`.
    fn bottom_neighbours(&self, i: usize) -> (Option<usize>, Option<usize>) {
        let p = self.mesh.node(i);
        let mut left: Option<usize> = None;
        let mut right: Option<usize> = None;
        for &j in &self.neighbours[i] {
            let q = self.mesh.node(j);
            if q[1] != p[1] || !self.mesh.regions()[j].contains(BoundaryRegion::Bottom) {
                continue;
            }
            if q[0] < p[0] && left.is_none_or(|l| self.mesh.node(l)[0] < q[0]) {
                left = Some(j);
            }
            if q[0] > p[0] && right.is_none_or(|r| self.mesh.node(r)[0] > q[0]) {
                right = Some(j);
            }
        }
        (left, right)
    }
}

/// Discrete transport row at a bottom node.
///
/// The `y` derivative is upwinded along the bottom edge, the `z` derivative
/// one-sided into the interior at a probe point straight above the node.
/// Where that probe leaves the domain the derivative is taken along the
/// mesh column instead and the resulting `y` term falls back to the
/// Neumann data of the right edge. Returns the spatial part plus
/// `time_coefficient` on the diagonal.
fn robin_row(
    ctx: &BoundaryContext<'_>,
    i: usize,
    params: &HestonParams,
    map: &CoordinateMap,
    right_slope: f64,
    time_coefficient: f64,
) -> Result<StencilRow> {
    let c = coefficients_at(0.0, 0.0, params)?;
    let mesh = ctx.mesh;
    let p = mesh.node(i);
    let mut row = StencilRow {
        entries: vec![(i, time_coefficient + c.reaction)],
        rhs: 0.0,
    };
    let mut coef_y = c.drift_y;
    if c.drift_z > 0.0 {
        return invalid("bottom drift points out of the interior");
    }
    if c.drift_z < 0.0 {
        let height = ctx.neighbours[i]
            .iter()
            .map(|&j| mesh.node(j)[1] - p[1])
            .fold(0.0, f64::max);
        if !(height > 0.0) {
            return Err(Error::DegenerateMesh(format!("bottom node {i} has no neighbour above")));
        }
        let speed = -c.drift_z / height;
        let above = ctx.interpolate([p[0], p[1] + height]).or_else(|| {
            // w_z = ∂_col w - slope * w_y along the column through the node
            let slope = map.column_slope();
            coef_y -= c.drift_z * slope;
            ctx.interpolate([p[0] + slope * height, p[1] + height])
        });
        let weights = above.ok_or_else(|| Error::DegenerateMesh(format!("no interior point above bottom node {i}")))?;
        row.push(i, speed);
        for (k, w) in weights {
            row.push(k, -speed * w);
        }
    }
    if coef_y != 0.0 {
        let (left, right) = ctx.bottom_neighbours(i);
        let upwind = if coef_y > 0.0 { left } else { right };
        match upwind {
            Some(j) => {
                let h = (mesh.node(j)[0] - p[0]).abs();
                let a = coef_y.abs() / h;
                row.push(i, a);
                row.push(j, -a);
            }
            None if coef_y < 0.0 && mesh.regions()[i].contains(BoundaryRegion::Right) => {
                row.rhs -= coef_y * right_slope;
            }
            None => {
                return Err(Error::DegenerateMesh(format!("no upwind neighbour for bottom node {i}")));
            }
        }
    }
    Ok(row)
}

/// The z = 0 row at `node` including the `1/dt` time coefficient; the
/// right-hand side excludes the `w^{n+1}/dt` history term.
pub fn bottom_robin_row(
    mesh: &Mesh,
    locator: &PointLocator,
    node: usize,
    params: &HestonParams,
    map: &CoordinateMap,
    payoff: &Payoff,
    dt: f64,
) -> Result<StencilRow> {
    if mesh.tags()[node] != NodeTag::Boundary(BoundaryRegion::Bottom) {
        return invalid(format!("node {node} is not a bottom node"));
    }
    let ctx = BoundaryContext {
        mesh,
        locator,
        neighbours: mesh.node_neighbours(),
    };
    let right_slope = payoff.slope_in_log_coordinate(mesh.domain().domain.s_max.ln());
    robin_row(&ctx, node, params, map, right_slope, 1.0 / dt)
}

/// Integrated P1 convection-diffusion matrices for every node, as if each
/// were interior, with the coefficient of `λ` split off, plus lumped masses.
struct InteriorAssembly {
    base: SparseMatrix,
    lambda: SparseMatrix,
    mass: Vec<f64>,
}

fn assemble_interior(mesh: &Mesh, params: &HestonParams) -> InteriorAssembly {
    let n = mesh.n_nodes();
    let mut mass = vec![0.0; n];
    let mut base_t = Vec::with_capacity(9 * mesh.n_triangles());
    let mut lam_t = Vec::with_capacity(9 * mesh.n_triangles());
    // −a Δw = −∇·(a ∇w) + a'(z) ∂w/∂z
    let da_dz = diffusion_coefficient(1.0, params);
    let splits: Vec<DriftSplit> = mesh.nodes().iter().map(|p| drift_split(p[1], params)).collect();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let mut grads = [[0.0; 2]; 3];
        for k in 0..3 {
            let (p1, p2) = (pts[(k + 1) % 3], pts[(k + 2) % 3]);
            grads[k] = [(p1[1] - p2[1]) / (2.0 * area), (p2[0] - p1[0]) / (2.0 * area)];
        }
        let zc = (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0;
        let a_mean = diffusion_coefficient(zc.max(0.0), params);
        for k in 0..3 {
            let i = tri[k];
            mass[i] += area / 3.0;
            let sp = &splits[i];
            let b0 = [sp.base[0], sp.base[1] + da_dz];
            for l in 0..3 {
                let g = grads[l];
                let stiff = a_mean * area * (grads[k][0] * g[0] + grads[k][1] * g[1]);
                let conv0 = area / 3.0 * (b0[0] * g[0] + b0[1] * g[1]);
                let conv1 = area / 3.0 * (sp.slope[0] * g[0] + sp.slope[1] * g[1]);
                base_t.push((i, tri[l], stiff + conv0));
                lam_t.push((i, tri[l], conv1));
            }
        }
    }
    InteriorAssembly {
        base: SparseMatrix::from_triplets(n, &base_t),
        lambda: SparseMatrix::from_triplets(n, &lam_t),
        mass,
    }
}

/// Symmetric discrete upwinding: `d_ij = max(0, a_ij, a_ji)` over both ends
/// of `[lo, hi]`, one value per stored position.
fn upwind_diffusion(a: &InteriorAssembly, lo: f64, hi: f64) -> Vec<f64> {
    let (base, lam) = (&a.base, &a.lambda);
    let worst = |k: usize| (base.values()[k] + lo * lam.values()[k]).max(base.values()[k] + hi * lam.values()[k]);
    let mut d = vec![0.0; base.nnz()];
    for i in 0..base.n() {
        for k in base.row_ptr()[i]..base.row_ptr()[i + 1] {
            let j = base.col_idx()[k];
            if j == i {
                continue;
            }
            let kt = base.position(j, i).expect("P1 pattern is symmetric");
            d[k] = worst(k).max(worst(kt)).max(0.0);
        }
    }
    d
}

/// Assembles the affine operator family. `stabilization` is the control
/// range over which the interior rows are made monotone; every solve using
/// this operator must keep its controls inside it.
pub fn assemble(
    mesh: &Mesh,
    params: &HestonParams,
    payoff: &Payoff,
    map: &CoordinateMap,
    stabilization: &ControlInterval,
) -> Result<DiscreteOperator> {
    if map.rho() != params.rho || map.xi() != params.xi {
        return invalid("coordinate map does not match model parameters");
    }
    if mesh.domain().map != *map {
        return invalid("mesh was built for a different coordinate map");
    }
    let n = mesh.n_nodes();
    let kinds: Vec<RowKind> = mesh.tags().iter().map(|&t| row_kind_of(t)).collect();
    let interior = assemble_interior(mesh, params);
    let (lo, hi) = (stabilization.lambda_min, stabilization.lambda_max);
    let upwind = upwind_diffusion(&interior, lo, hi);

    let mut base_t = Vec::with_capacity(interior.base.nnz());
    let mut lam_t = Vec::with_capacity(interior.base.nnz());
    let mut increments = Vec::new();
    for i in 0..n {
        if kinds[i] != RowKind::Pde {
            continue;
        }
        let m = interior.mass[i];
        if !(m > 0.0) {
            return Err(Error::DegenerateMesh(format!("interior node {i} has zero lumped mass")));
        }
        let mut added = 0.0;
        for k in interior.base.row_ptr()[i]..interior.base.row_ptr()[i + 1] {
            let j = interior.base.col_idx()[k];
            let d = upwind[k];
            added += d;
            if d > 0.0 {
                increments.push(DiffusionIncrement {
                    row: i,
                    col: j,
                    amount: d / m,
                });
            }
            base_t.push((i, j, (interior.base.values()[k] - d) / m));
            lam_t.push((i, j, interior.lambda.values()[k] / m));
        }
        base_t.push((i, i, added / m + params.r));
    }

    let locator = PointLocator::new(mesh);
    let ctx = BoundaryContext {
        mesh,
        locator: &locator,
        neighbours: mesh.node_neighbours(),
    };
    let right_slope = payoff.slope_in_log_coordinate(mesh.domain().domain.s_max.ln());
    let (vy, vz) = map.vega_direction();
    let vnorm = (vy * vy + vz * vz).sqrt();
    let vega_unit = [vy / vnorm, vz / vnorm];
    let mut rhs = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for i in 0..n {
        let row = match kinds[i] {
            RowKind::Pde => {
                mass[i] = 1.0;
                continue;
            }
            RowKind::Dirichlet => StencilRow {
                entries: vec![(i, 1.0)],
                rhs: payoff.value_at_zero(),
            },
            RowKind::Oblique => ctx.backward_difference_row(i, vega_unit, 0.0)?,
            RowKind::NeumannY => ctx.backward_difference_row(i, [1.0, 0.0], right_slope)?,
            RowKind::RobinBottom => {
                mass[i] = 1.0;
                robin_row(&ctx, i, params, map, right_slope, 0.0)?
            }
        };
        rhs[i] = row.rhs;
        for &(j, v) in &row.entries {
            base_t.push((i, j, v));
            lam_t.push((i, j, 0.0));
        }
    }
    let mut base = SparseMatrix::from_triplets(n, &base_t);
    let lam = SparseMatrix::from_triplets(n, &lam_t);
    debug_assert!(base.same_pattern(&lam));

    // rounding can leave a clipped entry marginally positive at its binding end
    let rp = base.row_ptr().to_vec();
    let cols = base.col_idx().to_vec();
    let diag = base.diagonal_positions();
    for i in (0..n).filter(|&i| kinds[i] == RowKind::Pde) {
        let bv = base.values_mut();
        for k in rp[i]..rp[i + 1] {
            if cols[k] == i {
                continue;
            }
            let l = lam.values()[k];
            let (at_lo, at_hi) = (bv[k] + lo * l, bv[k] + hi * l);
            if at_lo.max(at_hi) > 0.0 {
                let binding = if at_lo >= at_hi { lo } else { hi };
                let old = bv[k];
                bv[k] = -(binding * l);
                bv[diag[i]] += old - bv[k];
            }
        }
    }
    if !increments.is_empty() {
        let total: f64 = increments.iter().map(|d| d.amount).sum();
        log::debug!(
            "artificial diffusion: {} entries, total {total:.6e}, max {:.6e}",
            increments.len(),
            increments.iter().map(|d| d.amount).fold(0.0, f64::max)
        );
    }

    let op = DiscreteOperator {
        base_matrix: base,
        lambda_matrix: lam,
        rhs,
        row_kind: kinds,
        mass,
        final_values: terminal_values(mesh, map, payoff),
        ordering: mesh.banded_ordering(),
        stabilization: *stabilization,
        artificial_diffusion: increments,
        params: *params,
        payoff: *payoff,
    };
    // off-diagonal signs do not depend on the time step
    for lambda in [lo, hi] {
        op.check_m_matrix(lambda, f64::INFINITY).or_else(|e| match e {
            Error::MMatrixViolation { row, col, .. } if row == col => Ok(()),
            other => Err(other),
        })?;
    }
    Ok(op)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::structured_triangulation;
    use crate::model::TruncatedDomain;
    use crate::transform::build_trapezoid;

    struct Setup {
        params: HestonParams,
        map: CoordinateMap,
        mesh: Mesh,
    }

    fn setup(n_y: usize, n_z: usize) -> Setup {
        let params = HestonParams::case_study();
        let map = CoordinateMap::from_params(&params).unwrap();
        let trap = build_trapezoid(&TruncatedDomain::case_study(), &map).unwrap();
        let mesh = structured_triangulation(&trap, n_y, n_z).unwrap();
        Setup { params, map, mesh }
    }

    fn butterfly() -> Payoff {
        Payoff::butterfly(50.0, 20.0).unwrap()
    }

    #[test]
    fn bottom_coefficients_of_case_study() {
        let p = HestonParams::case_study();
        for lambda in [-2.4, 0.0, 3.0] {
            let c = coefficients_at(0.0, lambda, &p).unwrap();
            assert_eq!(c.diffusion, 0.0);
            // -0.03 + 7 * 0.3 * 0.5 / 0.7
            assert!((c.drift_y - 1.47).abs() < 1e-12);
            // -7 * 0.3 * sqrt(0.75) / 0.7
            assert!((c.drift_z + 3.0 * 0.75f64.sqrt()).abs() < 1e-12);
            assert!((c.drift_z + 2.5981).abs() < 1e-4);
            assert_eq!(c.reaction, 0.03);
        }
        assert!(coefficients_at(-0.1, 0.0, &p).is_err());
    }

    #[test]
    fn coefficients_are_affine_in_lambda() {
        let p = HestonParams::case_study();
        for z in [0.0, 0.01, 0.37, 1.0, 3.7] {
            let c0 = coefficients_at(z, 0.0, &p).unwrap();
            let c1 = coefficients_at(z, 1.0, &p).unwrap();
            for lambda in [-2.5, -1.25, 0.7] {
                let c = coefficients_at(z, lambda, &p).unwrap();
                assert!((c.drift_y - c0.drift_y - lambda * (c1.drift_y - c0.drift_y)).abs() < 1e-12);
                assert!((c.drift_z - c0.drift_z - lambda * (c1.drift_z - c0.drift_z)).abs() < 1e-12);
                assert_eq!(c.diffusion, c0.diffusion);
            }
        }
        let uncorrelated = HestonParams { rho: 0.0, ..p };
        let d = drift_split(1.3, &uncorrelated);
        assert_eq!(d.slope[0], 0.0);
    }

    /// Independent evaluation of the canonical drift from the log-price form.
    #[test]
    fn canonical_drift_matches_log_form() {
        let p = HestonParams::case_study();
        let map = CoordinateMap::from_params(&p).unwrap();
        for z in [0.05, 0.5, 2.0] {
            for lambda in [-2.0, 0.5] {
                let v = z / map.z_scale();
                // coefficients of V_x and V_v in the log-price operator
                let cx = -(p.r - 0.5 * v);
                let cv = -(p.kappa * (p.gamma - v) - p.xi * lambda * v.sqrt());
                // V_x = w_y, V_v = -(rho/xi) w_y + z_scale w_z
                let by = cx - map.shear() * cv;
                let bz = map.z_scale() * cv;
                let c = coefficients_at(z, lambda, &p).unwrap();
                assert!((c.drift_y - by).abs() < 1e-12, "{} {}", c.drift_y, by);
                assert!((c.drift_z - bz).abs() < 1e-12);
                // diffusion: ½ v (1 - rho²)
                assert!((c.diffusion - 0.5 * v * (1.0 - p.rho * p.rho)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constants_see_only_reaction() {
        let s = setup(24, 18);
        let op = assemble(&s.mesh, &s.params, &butterfly(), &s.map, &ControlInterval::new(-2.4, -1.6)).unwrap();
        let c = 3.5;
        for lambda in [-2.4, -2.0, -1.6] {
            let aw = op.matrix_at(lambda).apply(&vec![c; op.n()]);
            for i in 0..op.n() {
                match op.row_kind()[i] {
                    RowKind::Pde | RowKind::RobinBottom => assert!((aw[i] - 0.03 * c).abs() < 1e-9 * c, "{i}: {}", aw[i]),
                    RowKind::Dirichlet => assert_eq!(aw[i], c),
                    RowKind::NeumannY | RowKind::Oblique => assert!(aw[i].abs() < 1e-12),
                }
            }
        }
    }

    #[test]
    fn dirichlet_rows_are_identity() {
        let s = setup(12, 8);
        let op = assemble(&s.mesh, &s.params, &butterfly(), &s.map, &ControlInterval::new(-2.4, -1.6)).unwrap();
        for i in 0..op.n() {
            if op.row_kind()[i] == RowKind::Dirichlet {
                let row: Vec<_> = op.base_matrix().row(i).filter(|e| e.1 != 0.0).collect();
                assert_eq!(row, vec![(i, 1.0)]);
                assert!(op.lambda_matrix().row(i).all(|e| e.1 == 0.0));
                assert_eq!(op.rhs()[i], 0.0);
            }
        }
        let straddle = Payoff::straddle(50.0).unwrap();
        let op = assemble(&s.mesh, &s.params, &straddle, &s.map, &ControlInterval::new(-2.4, -1.6)).unwrap();
        let d = op.row_kind().iter().position(|k| *k == RowKind::Dirichlet).unwrap();
        assert_eq!(op.rhs()[d], 50.0);
    }

    #[test]
    fn affine_decomposition_is_exact() {
        let s = setup(20, 15);
        let op = assemble(&s.mesh, &s.params, &butterfly(), &s.map, &ControlInterval::new(-2.4, -1.6)).unwrap();
        let a = op.matrix_at(-2.4);
        for (k, v) in a.values().iter().enumerate() {
            assert_eq!(*v, op.base_matrix().values()[k] + (-2.4) * op.lambda_matrix().values()[k]);
        }
        // the convection part for a fixed control equals the direct evaluation
        // of the full drift at that control
        let lambda = -2.4;
        let kinds: Vec<RowKind> = s.mesh.tags().iter().map(|&t| row_kind_of(t)).collect();
        let interior = assemble_interior(&s.mesh, &s.params);
        let da = diffusion_coefficient(1.0, &s.params);
        let mut direct = Vec::new();
        for (t, tri) in s.mesh.triangles().iter().enumerate() {
            let pts = s.mesh.triangle_points(t);
            let area = s.mesh.triangle_area(t);
            let zc = (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0;
            let am = coefficients_at(zc, lambda, &s.params).unwrap().diffusion;
            for k in 0..3 {
                if kinds[tri[k]] != RowKind::Pde {
                    continue;
                }
                let c = coefficients_at(s.mesh.node(tri[k])[1], lambda, &s.params).unwrap();
                for l in 0..3 {
                    let g = |m: usize| {
                        let (p1, p2) = (pts[(m + 1) % 3], pts[(m + 2) % 3]);
                        [(p1[1] - p2[1]) / (2.0 * area), (p2[0] - p1[0]) / (2.0 * area)]
                    };
                    let (gk, gl) = (g(k), g(l));
                    let v = am * area * (gk[0] * gl[0] + gk[1] * gl[1])
                        + area / 3.0 * (c.drift_y * gl[0] + (c.drift_z + da) * gl[1]);
                    direct.push((tri[k], tri[l], v));
                }
            }
        }
        let direct = SparseMatrix::from_triplets(s.mesh.n_nodes(), &direct);
        let combined = interior.base.axpy(lambda, &interior.lambda);
        for i in (0..s.mesh.n_nodes()).filter(|&i| kinds[i] == RowKind::Pde) {
            for (j, v) in direct.row(i) {
                assert!((combined.get(i, j) - v).abs() < 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn m_matrix_after_stabilization() {
        let s = setup(32, 24);
        for payoff in [butterfly(), Payoff::call(50.0).unwrap()] {
            for interval in [ControlInterval::new(-2.4, -1.6), ControlInterval::new(-2.5, 0.0), ControlInterval::singleton(0.0)] {
                let op = assemble(&s.mesh, &s.params, &payoff, &s.map, &interval).unwrap();
                for lambda in interval.with_points(5).points() {
                    op.check_m_matrix(lambda, 0.005).unwrap();
                    let sys = op.system_matrix(&vec![lambda; op.n()], 0.005);
                    for i in 0..op.n() {
                        let mut sum = 0.0;
                        for (j, v) in sys.row(i) {
                            sum += v;
                            if j == i {
                                assert!(v > 0.0);
                            } else {
                                assert!(v <= 0.0, "row {i} col {j}: {v}");
                            }
                        }
                        assert!(sum >= -1e-9, "row sum {sum}");
                    }
                }
            }
        }
    }

    #[test]
    fn artificial_diffusion_is_logged() {
        let s = setup(16, 12);
        let op = assemble(&s.mesh, &s.params, &butterfly(), &s.map, &ControlInterval::new(-2.5, 0.0)).unwrap();
        assert!(!op.artificial_diffusion().is_empty());
        assert!(op.artificial_diffusion().iter().all(|d| d.amount > 0.0 && d.row != d.col));
    }

    #[test]
    fn robin_row_structure() {
        let s = setup(10, 8);
        let loc = PointLocator::new(&s.mesh);
        let dt = 0.005;
        // bottom node in the middle of the edge: index i on row 0
        let i = 5;
        let row = bottom_robin_row(&s.mesh, &loc, i, &s.params, &s.map, &butterfly(), dt).unwrap();
        // y-speed 1.47 > 0: upwind uses the left neighbour
        let left = row.entries.iter().find(|e| e.0 == i - 1).unwrap();
        assert!(left.1 < 0.0);
        assert!(row.entries.iter().all(|e| e.0 != i + 1));
        // z-speed < 0: one-sided into the interior (row 1 nodes only)
        let above: Vec<_> = row.entries.iter().filter(|e| e.0 > 10).collect();
        assert!(!above.is_empty() && above.iter().all(|e| e.1 < 0.0 && e.0 >= 11 && e.0 <= 21));
        // constants give r*c after removing the time coefficient
        let c = 2.0;
        let applied = row.apply(&vec![c; s.mesh.n_nodes()]) - c / dt;
        assert!((applied - 0.03 * c).abs() < 1e-10);
        assert!(bottom_robin_row(&s.mesh, &loc, 20, &s.params, &s.map, &butterfly(), dt).is_err());
    }

    #[test]
    fn robin_row_without_mean_reversion_level() {
        let s = setup(10, 8);
        let params = HestonParams { gamma: 0.0, ..s.params };
        let loc = PointLocator::new(&s.mesh);
        let dt = 0.01;
        let i = 4;
        let row = bottom_robin_row(&s.mesh, &loc, i, &params, &s.map, &butterfly(), dt).unwrap();
        // −w_t − r w_y + r w: only the right neighbour and the node itself
        let mut e = row.entries.clone();
        e.sort_by_key(|x| x.0);
        assert_eq!(e.len(), 2);
        let h = s.mesh.node(i + 1)[0] - s.mesh.node(i)[0];
        assert_eq!(e[0].0, i);
        assert_eq!(e[1].0, i + 1);
        assert!((e[1].1 + 0.03 / h).abs() < 1e-12);
        assert!((e[0].1 - (1.0 / dt + 0.03 + 0.03 / h)).abs() < 1e-9);
    }

    #[test]
    fn corner_row_uses_neumann_data() {
        let s = setup(10, 8);
        let loc = PointLocator::new(&s.mesh);
        let call = Payoff::call(50.0).unwrap();
        let corner = 10;
        assert_eq!(s.mesh.tags()[corner], NodeTag::Boundary(BoundaryRegion::Bottom));
        let row = bottom_robin_row(&s.mesh, &loc, corner, &s.params, &s.map, &call, 0.01).unwrap();
        // the column-direction y coefficient at z = 0 is -r; Neumann slope S_max
        assert!((row.rhs - 0.03 * 100.0).abs() < 1e-9, "{}", row.rhs);
    }

    #[test]
    fn neumann_and_oblique_rows_follow_mesh_lines() {
        let s = setup(10, 8);
        let call = Payoff::call(50.0).unwrap();
        let op = assemble(&s.mesh, &s.params, &call, &s.map, &ControlInterval::singleton(0.0)).unwrap();
        let idx = |i: usize, j: usize| j * 11 + i;
        // right edge: w_i - w_{i-1} = h * S_max
        let r = idx(10, 4);
        assert_eq!(op.row_kind()[r], RowKind::NeumannY);
        let h = s.mesh.node(r)[0] - s.mesh.node(r - 1)[0];
        assert!((op.base_matrix().get(r, r - 1) + 1.0).abs() < 1e-9);
        assert!((op.rhs()[r] - 100.0 * h).abs() < 1e-9);
        // top edge: the node below along the column
        let t = idx(4, 8);
        assert_eq!(op.row_kind()[t], RowKind::Oblique);
        assert!((op.base_matrix().get(t, idx(4, 7)) + 1.0).abs() < 1e-9);
        assert_eq!(op.rhs()[t], 0.0);
    }

    /// Interior rows applied to samples of a quadratic approach the continuous
    /// operator at first order away from `z = 0`; next to it the `√z` drift
    /// limits the rate, but the error still shrinks.
    #[test]
    fn interior_consistency_on_quadratics() {
        let quad = |p: Point| 0.3 * p[0] * p[0] - 0.2 * p[0] * p[1] + 0.5 * p[1] * p[1] + p[0] - 2.0 * p[1];
        let grad = |p: Point| [0.6 * p[0] - 0.2 * p[1] + 1.0, -0.2 * p[0] + p[1] - 2.0];
        let lap = 0.6 + 1.0;
        let lambda = -2.0;
        let (mut away, mut all) = (Vec::new(), Vec::new());
        for n in [16, 32, 64, 128] {
            let s = setup(n, 3 * n / 4);
            let op = assemble(&s.mesh, &s.params, &butterfly(), &s.map, &ControlInterval::singleton(lambda)).unwrap();
            let w: Vec<f64> = s.mesh.nodes().iter().map(|&p| quad(p)).collect();
            let aw = op.matrix_at(lambda).apply(&w);
            let (mut e_away, mut e_all): (f64, f64) = (0.0, 0.0);
            for i in 0..op.n() {
                if op.row_kind()[i] != RowKind::Pde {
                    continue;
                }
                let p = s.mesh.node(i);
                let c = coefficients_at(p[1], lambda, &s.params).unwrap();
                let g = grad(p);
                let exact = -c.diffusion * lap + c.drift_y * g[0] + c.drift_z * g[1] + c.reaction * w[i];
                let e = (aw[i] - exact).abs();
                e_all = e_all.max(e);
                if p[1] >= 0.5 {
                    e_away = e_away.max(e);
                }
            }
            away.push(e_away);
            all.push(e_all);
        }
        for k in 1..away.len() {
            assert!((away[k - 1] / away[k]).log2() >= 0.9, "errors away from z = 0: {away:?}");
            assert!(all[k] < all[k - 1], "errors: {all:?}");
        }
    }
}

