//! Triangulation of the transformed trapezoid.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::transform::{BoundaryRegion, Point, TrapezoidDomain};

/// Set of boundary regions a node lies on (a corner lies on two).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RegionSet(u8);

impl RegionSet {
    pub const EMPTY: RegionSet = RegionSet(0);

    fn bit(r: BoundaryRegion) -> u8 {
        match r {
            BoundaryRegion::Dirichlet => 1,
            BoundaryRegion::Bottom => 2,
            BoundaryRegion::Right => 4,
            BoundaryRegion::Top => 8,
        }
    }

    pub fn from_regions(regions: &[BoundaryRegion]) -> Self {
        RegionSet(regions.iter().fold(0, |acc, &r| acc | Self::bit(r)))
    }

    pub fn contains(&self, r: BoundaryRegion) -> bool {
        self.0 & Self::bit(r) != 0
    }

    pub fn intersect(&self, other: RegionSet) -> RegionSet {
        RegionSet(self.0 & other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Highest-precedence region, if any.
    pub fn resolve(&self) -> NodeTag {
        BoundaryRegion::PRECEDENCE
            .iter()
            .find(|&&r| self.contains(r))
            .map_or(NodeTag::Interior, |&r| NodeTag::Boundary(r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeTag {
    Interior,
    Boundary(BoundaryRegion),
}

impl NodeTag {
    pub fn label(&self) -> &'static str {
        match self {
            NodeTag::Interior => "interior",
            NodeTag::Boundary(r) => r.label(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<RegionSet>,
    tags: Vec<NodeTag>,
    refinement_level: u32,
    domain: TrapezoidDomain,
}

#[inline]
pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn angles(a: Point, b: Point, c: Point) -> [f64; 3] {
    let ang = |p: Point, q: Point, r: Point| {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
        cos.clamp(-1.0, 1.0).acos()
    };
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

fn min_angle(a: Point, b: Point, c: Point) -> f64 {
    angles(a, b, c).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Rows of nodes at `n_z + 1` uniformly spaced heights, each with `n_y + 1`
/// nodes spread evenly between the slanted edges. Every cell is split along
/// the diagonal that maximizes the smaller of the two minimum angles.
pub fn structured_triangulation(trap: &TrapezoidDomain, n_y: usize, n_z: usize) -> Result<Mesh> {
    if n_y == 0 || n_z == 0 {
        return Err(Error::DegenerateMesh("n_y and n_z must be at least 1".into()));
    }
    let (width, height) = (trap.width(), trap.height());
    if !(width > 0.0) || !(height > 0.0) {
        return Err(Error::DegenerateMesh("trapezoid has zero width or height".into()));
    }
    let z0 = trap.bottom_left()[1];
    let mut nodes = Vec::with_capacity((n_y + 1) * (n_z + 1));
    let mut regions = Vec::with_capacity(nodes.capacity());
    for j in 0..=n_z {
        let z = if j == n_z { trap.corners[3][1] } else { z0 + height * j as f64 / n_z as f64 };
        let yl = if j == 0 {
            trap.corners[0][0]
        } else if j == n_z {
            trap.corners[3][0]
        } else {
            trap.y_left(z)
        };
        for i in 0..=n_y {
            let y = if i == n_y && j == 0 {
                trap.corners[1][0]
            } else if i == n_y && j == n_z {
                trap.corners[2][0]
            } else {
                yl + width * i as f64 / n_y as f64
            };
            nodes.push([y, z]);
            let mut r = Vec::new();
            if i == 0 {
                r.push(BoundaryRegion::Dirichlet);
            }
            if j == 0 {
                r.push(BoundaryRegion::Bottom);
            }
            if i == n_y {
                r.push(BoundaryRegion::Right);
            }
            if j == n_z {
                r.push(BoundaryRegion::Top);
            }
            regions.push(RegionSet::from_regions(&r));
        }
    }
    let idx = |i: usize, j: usize| j * (n_y + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n_y * n_z);
    for j in 0..n_z {
        for i in 0..n_y {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            let (pa, pb, pc, pd) = (nodes[a], nodes[b], nodes[c], nodes[d]);
            let split_ac = min_angle(pa, pb, pc).min(min_angle(pa, pc, pd));
            let split_bd = min_angle(pa, pb, pd).min(min_angle(pb, pc, pd));
            if split_ac >= split_bd {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    Mesh::from_parts(nodes, triangles, regions, 0, *trap)
}

impl Mesh {
    fn from_parts(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<RegionSet>,
        refinement_level: u32,
        domain: TrapezoidDomain,
    ) -> Result<Mesh> {
        for (k, t) in triangles.iter().enumerate() {
            let area = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
            if !(area > 0.0) {
                return Err(Error::DegenerateMesh(format!("triangle {k} has non-positive area {area:e}")));
            }
        }
        let tags = regions.iter().map(|r| r.resolve()).collect();
        Ok(Mesh {
            nodes,
            triangles,
            regions,
            tags,
            refinement_level,
            domain,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn tags(&self) -> &[NodeTag] {
        &self.tags
    }

    pub fn regions(&self) -> &[RegionSet] {
        &self.regions
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn refinement_level(&self) -> u32 {
        self.refinement_level
    }

    pub fn domain(&self) -> &TrapezoidDomain {
        &self.domain
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                min_angle(a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_angle(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                angles(a, b, c).iter().copied().fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let (p, q) = (self.nodes[t[k]], self.nodes[t[(k + 1) % 3]]);
                h = h.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Sorted, deduplicated neighbour lists.
    pub fn node_neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_nodes()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// For every node, the triangles containing it.
    pub fn node_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (k, t) in self.triangles.iter().enumerate() {
            for &n in t {
                out[n].push(k);
            }
        }
        out
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), u32> {
        let mut counts = HashMap::with_capacity(3 * self.n_triangles());
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Boundary edges, in no particular order.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .edge_counts()
            .into_iter()
            .filter_map(|(k, c)| (c == 1).then_some(k))
            .collect();
        e.sort_unstable();
        e
    }

    /// Ordered cycle of boundary node indices (counter-clockwise).
    pub fn boundary_cycle(&self) -> Vec<usize> {
        let mut next = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                next.insert((t[k], t[(k + 1) % 3]), ());
            }
        }
        // a directed triangle edge whose reverse is absent lies on the boundary
        let mut succ = HashMap::new();
        for &(a, b) in next.keys() {
            if !next.contains_key(&(b, a)) {
                succ.insert(a, b);
            }
        }
        let Some(&start) = succ.keys().min() else {
            return Vec::new();
        };
        let mut cycle = vec![start];
        let mut cur = succ[&start];
        while cur != start && cycle.len() <= succ.len() {
            cycle.push(cur);
            cur = succ[&cur];
        }
        cycle
    }

    /// Uniform red refinement: every triangle is split into four through its
    /// edge midpoints. Midpoints of boundary edges inherit the edge's region.
    pub fn refine(&self) -> Result<Mesh> {
        let counts = self.edge_counts();
        let mut nodes = self.nodes.clone();
        let mut regions = self.regions.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(counts.len());
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>, regions: &mut Vec<RegionSet>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (nodes[key.0], nodes[key.1]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                let reg = if counts[&key] == 1 {
                    regions[key.0].intersect(regions[key.1])
                } else {
                    RegionSet::EMPTY
                };
                regions.push(reg);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.n_triangles());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut nodes, &mut regions);
            let bc = mid(b, c, &mut nodes, &mut regions);
            let ca = mid(c, a, &mut nodes, &mut regions);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Mesh::from_parts(nodes, triangles, regions, self.refinement_level + 1, self.domain)
    }

    pub fn refine_times(&self, n: u32) -> Result<Mesh> {
        let mut m = self.clone();
        for _ in 0..n {
            m = m.refine()?;
        }
        Ok(m)
    }

    /// Plain-text dump: a `# nodes` section with `id y z tag` lines followed by
    /// a `# triangles` section with `id n0 n1 n2` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# nodes {}", self.n_nodes())?;
        for (i, (p, t)) in self.nodes.iter().zip(&self.tags).enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e} {}", p[0], p[1], t.label())?;
        }
        writeln!(w, "# triangles {}", self.n_triangles())?;
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{k} {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Row-major ordering by height then by `y`, which keeps the bandwidth of
    /// nearest-neighbour operators close to the number of nodes per row.
    pub fn banded_ordering(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_nodes()).collect();
        order.sort_by(|&a, &b| {
            let (p, q) = (self.nodes[a], self.nodes[b]);
            p[1].total_cmp(&q[1]).then(p[0].total_cmp(&q[0]))
        });
        order
    }
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
#[inline]
pub fn barycentric(p: Point, [a, b, c]: [Point; 3]) -> [f64; 3] {
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    [l0, l1, 1.0 - l0 - l1]
}

/// Bucket grid over the triangles' bounding boxes.
#[derive(Debug, Clone)]
pub struct PointLocator {
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
    tol: f64,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.nodes() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (mesh.n_triangles() as f64 / 2.0).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let tol = 1e-10 * span.max(1.0);
        let clampi = |v: f64, d: usize| -> usize { (v.floor().max(0.0) as usize).min(dims[d] - 1) };
        for (k, _) in mesh.triangles().iter().enumerate() {
            let pts = mesh.triangle_points(k);
            let (mut tlo, mut thi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in pts {
                for d in 0..2 {
                    tlo[d] = tlo[d].min(p[d]);
                    thi[d] = thi[d].max(p[d]);
                }
            }
            let i0 = clampi((tlo[0] - tol - lo[0]) / cell[0], 0);
            let i1 = clampi((thi[0] + tol - lo[0]) / cell[0], 0);
            let j0 = clampi((tlo[1] - tol - lo[1]) / cell[1], 1);
            let j1 = clampi((thi[1] + tol - lo[1]) / cell[1], 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * dims[0] + i].push(k);
                }
            }
        }
        PointLocator {
            origin: lo,
            cell,
            dims,
            buckets,
            tol,
        }
    }

    /// Containing triangle and nonnegative barycentric weights summing to one.
    /// Points within a small tolerance of the boundary are accepted and
    /// snapped onto it.
    pub fn locate(&self, mesh: &Mesh, p: Point) -> Option<(usize, [f64; 3])> {
        let fi = (p[0] - self.origin[0]) / self.cell[0];
        let fj = (p[1] - self.origin[1]) / self.cell[1];
        let slack = self.tol / self.cell[0].min(self.cell[1]);
        if fi < -slack || fj < -slack || fi > self.dims[0] as f64 + slack || fj > self.dims[1] as f64 + slack {
            return None;
        }
        let i = (fi.floor().max(0.0) as usize).min(self.dims[0] - 1);
        let j = (fj.floor().max(0.0) as usize).min(self.dims[1] - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let lam = barycentric(p, mesh.triangle_points(t));
            let worst = lam.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((t, lam));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, lam, worst));
            }
        }
        let (t, lam, worst) = best?;
        // barycentric coordinates are scale free; compare in length units
        let h = self.cell[0].min(self.cell[1]);
        if worst * h < -self.tol * 10.0 {
            return None;
        }
        let clipped = lam.map(|l| l.max(0.0));
        let sum: f64 = clipped.iter().sum();
        Some((t, clipped.map(|l| l / sum)))
    }
}
