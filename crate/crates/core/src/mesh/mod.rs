//! Conforming triangulations of polygonal domains with tagged boundaries.

mod io;
mod refine;

pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use refine::refine;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Absorbing,
}

impl BoundaryTag {
    pub fn code(self) -> char {
        match self {
            BoundaryTag::Dirichlet => 'D',
            BoundaryTag::Absorbing => 'A',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Affine map from the reference triangle `{(0,0), (1,0), (0,1)}` onto an element.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: Point,
    /// Columns are `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    /// `J^{-T}`, which maps reference gradients to physical ones.
    pub inv_transpose: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn new(v: [Point; 3]) -> Self {
        let j = [[v[1][0] - v[0][0], v[2][0] - v[0][0]], [v[1][1] - v[0][1], v[2][1] - v[0][1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_transpose = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        Self {
            origin: v[0],
            jacobian: j,
            det,
            inv_transpose,
        }
    }

    pub fn apply(&self, xhat: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xhat[0] + j[0][1] * xhat[1],
            self.origin[1] + j[1][0] * xhat[0] + j[1][1] * xhat[1],
        ]
    }

    pub fn inverse(&self, x: Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let it = &self.inv_transpose;
        // J^{-1} = (J^{-T})^T
        [it[0][0] * d[0] + it[1][0] * d[1], it[0][1] * d[0] + it[1][1] * d[1]]
    }

    /// Physical gradient from a reference gradient.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        let it = &self.inv_transpose;
        [it[0][0] * g[0] + it[0][1] * g[1], it[1][0] * g[0] + it[1][1] * g[1]]
    }

    /// Contravariant Piola transform `J v / det J` of a reference vector.
    pub fn push_vector(&self, v: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [
            (j[0][0] * v[0] + j[0][1] * v[1]) / self.det,
            (j[1][0] * v[0] + j[1][1] * v[1]) / self.det,
        ]
    }
}

/// Size and shape measures of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub h: f64,
    pub rho: f64,
    pub kappa: f64,
    pub area: f64,
}

/// Classification of an edge on the boundary of a vertex patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchEdgeKind {
    /// Lies inside the domain; the patch continues on the other side.
    InteriorFacing,
    /// On Γ_D and incident to the patch vertex; excluded from Γ_a.
    DirichletSharingVertex,
    DirichletOther,
    Absorbing,
}

#[derive(Debug, Clone)]
pub struct VertexPatch {
    pub vertex: usize,
    pub elements: Vec<usize>,
    /// Edges of ∂ω_a with their classification.
    pub patch_boundary: Vec<(usize, PatchEdgeKind)>,
    /// Edges incident to the vertex and shared by two patch elements.
    pub interior_edges: Vec<usize>,
    pub h_a: f64,
    pub is_dirichlet_vertex: bool,
}

impl VertexPatch {
    /// Edges of Γ_a: ∂ω_a without the Dirichlet edges sharing the vertex.
    pub fn gamma_a(&self) -> impl Iterator<Item = (usize, PatchEdgeKind)> + '_ {
        self.patch_boundary
            .iter()
            .copied()
            .filter(|(_, kind)| *kind != PatchEdgeKind::DirichletSharingVertex)
    }
}

#[derive(Debug, Clone, Default)]
struct Topology {
    edges: Vec<[usize; 2]>,
    element_edges: Vec<[usize; 3]>,
    edge_elements: Vec<[Option<usize>; 2]>,
    edge_tags: Vec<Option<BoundaryTag>>,
    vertex_elements: Vec<Vec<usize>>,
}

/// Where a validation problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Location {
    Triangle(usize),
    Boundary(usize),
    Global,
}

/// A conforming triangulation.
///
/// Triangles are counterclockwise; local edge `i` is opposite local vertex `i`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Local index of the edge bisected next by newest-vertex bisection.
    pub refinement_edge: Vec<u8>,
    topo: Topology,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.boundary_edges == other.boundary_edges
            && self.refinement_edge == other.refinement_edge
    }
}

impl Mesh {
    /// Builds and validates a mesh. With `refinement_edge = None` the longest
    /// edge of every triangle is used.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        refinement_edge: Option<Vec<u8>>,
    ) -> Result<Self> {
        Self::build(vertices, triangles, boundary_edges, refinement_edge).map_err(|(loc, msg)| {
            Error::InvalidMesh(match loc {
                Location::Triangle(t) => format!("triangle {t}: {msg}"),
                Location::Boundary(b) => format!("boundary edge {b}: {msg}"),
                Location::Global => msg,
            })
        })
    }

    pub(crate) fn build(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        refinement_edge: Option<Vec<u8>>,
    ) -> Result<Self, (Location, String)> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
                return Err((Location::Triangle(t), format!("vertex index {v} out of range (NV = {nv})")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err((Location::Triangle(t), "repeated vertex".into()));
            }
            let area = signed_area([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if area <= 0.0 {
                return Err((Location::Triangle(t), format!("not positively oriented (signed area {area:e})")));
            }
        }
        for (b, e) in boundary_edges.iter().enumerate() {
            if let Some(&v) = e.vertices.iter().find(|&&v| v >= nv) {
                return Err((Location::Boundary(b), format!("vertex index {v} out of range (NV = {nv})")));
            }
        }
        let refinement_edge = match refinement_edge {
            Some(r) => {
                if r.len() != triangles.len() || r.iter().any(|&e| e > 2) {
                    return Err((Location::Global, "invalid refinement edge table".into()));
                }
                r
            }
            None => triangles
                .iter()
                .map(|t| longest_edge([vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
                .collect(),
        };

        let mut index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_elements: Vec<[Option<usize>; 2]> = Vec::new();
        let mut element_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let key = sorted([tri[(i + 1) % 3], tri[(i + 2) % 3]]);
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_elements.push([None, None]);
                    edges.len() - 1
                });
                match edge_elements[e] {
                    [None, _] => edge_elements[e][0] = Some(t),
                    [Some(_), None] => edge_elements[e][1] = Some(t),
                    _ => {
                        return Err((
                            Location::Triangle(t),
                            format!("edge {:?} shared by more than two triangles", key),
                        ))
                    }
                }
                *slot = e;
            }
            element_edges.push(local);
        }

        let mut edge_tags = vec![None; edges.len()];
        for (b, be) in boundary_edges.iter().enumerate() {
            let key = sorted(be.vertices);
            let Some(&e) = index.get(&key) else {
                return Err((Location::Boundary(b), format!("{:?} is not an edge of the mesh", be.vertices)));
            };
            if edge_elements[e][1].is_some() {
                return Err((Location::Boundary(b), format!("{:?} is an interior edge", be.vertices)));
            }
            if edge_tags[e].is_some() {
                return Err((Location::Boundary(b), format!("{:?} tagged twice", be.vertices)));
            }
            edge_tags[e] = Some(be.tag);
        }
        for (e, els) in edge_elements.iter().enumerate() {
            if els[1].is_none() && edge_tags[e].is_none() {
                return Err((
                    Location::Triangle(els[0].unwrap()),
                    format!("boundary edge {:?} is untagged (hanging node or missing tag)", edges[e]),
                ));
            }
        }

        let mut vertex_elements = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_elements[v].push(t);
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            refinement_edge,
            topo: Topology {
                edges,
                element_edges,
                edge_elements,
                edge_tags,
                vertex_elements,
            },
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.topo.edges.len()
    }

    /// Global vertex indices of edge `e`, lower index first.
    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.topo.edges[e]
    }

    /// Global edge indices of element `t`; entry `i` is opposite local vertex `i`.
    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.topo.element_edges[t]
    }

    pub fn edge_elements(&self, e: usize) -> [Option<usize>; 2] {
        self.topo.edge_elements[e]
    }

    pub fn edge_tag(&self, e: usize) -> Option<BoundaryTag> {
        self.topo.edge_tags[e]
    }

    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.topo.vertex_elements[v]
    }

    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn element_map(&self, t: usize) -> AffineMap {
        AffineMap::new(self.element_vertices(t))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.topo.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Whether local edge `i` of element `t` runs (counterclockwise) from the
    /// lower to the higher global vertex index.
    pub fn edge_orientation_positive(&self, t: usize, i: usize) -> bool {
        let tri = self.triangles[t];
        tri[(i + 1) % 3] < tri[(i + 2) % 3]
    }

    /// Boundary edges (global edge index) carrying `tag`.
    pub fn tagged_edges(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_edges()).filter(move |&e| self.topo.edge_tags[e] == Some(tag))
    }

    /// Whether `v` lies on the closure of Γ_D.
    pub fn is_dirichlet_vertex(&self, v: usize) -> bool {
        self.topo.vertex_elements[v].iter().any(|&t| {
            self.topo.element_edges[t].iter().any(|&e| {
                self.topo.edge_tags[e] == Some(BoundaryTag::Dirichlet) && self.topo.edges[e].contains(&v)
            })
        })
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry> {
        element_geometry_of(self.element_vertices(t)).ok_or_else(|| Error::DegenerateElement {
            element: t,
            area: signed_area(self.element_vertices(t)),
        })
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_elements()).map(|t| diameter(self.element_vertices(t))).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n_elements())
            .map(|t| diameter(self.element_vertices(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Diameter of the whole domain (maximum vertex distance).
    pub fn domain_diameter(&self) -> f64 {
        let boundary: Vec<Point> = self
            .boundary_edges
            .iter()
            .flat_map(|e| e.vertices)
            .map(|v| self.vertices[v])
            .collect();
        let mut d: f64 = 0.0;
        for (i, a) in boundary.iter().enumerate() {
            for b in &boundary[i + 1..] {
                d = d.max(dist(*a, *b));
            }
        }
        d
    }

    pub fn area(&self) -> f64 {
        (0..self.n_elements()).map(|t| signed_area(self.element_vertices(t))).sum()
    }

    /// Finds an element containing `x` and the reference coordinates of `x` in it.
    pub fn locate(&self, x: Point) -> Option<(usize, Point)> {
        const TOL: f64 = 1e-12;
        (0..self.n_elements()).find_map(|t| {
            let xhat = self.element_map(t).inverse(x);
            let inside = xhat[0] >= -TOL && xhat[1] >= -TOL && xhat[0] + xhat[1] <= 1.0 + TOL;
            inside.then_some((t, xhat))
        })
    }

    pub fn vertex_patch(&self, a: usize) -> VertexPatch {
        let mut elements = self.topo.vertex_elements[a].clone();
        elements.sort_unstable();
        let mut patch_boundary = Vec::new();
        let mut interior_edges = Vec::new();
        for &t in &elements {
            for &e in &self.topo.element_edges[t] {
                let shares_vertex = self.topo.edges[e].contains(&a);
                match self.topo.edge_tags[e] {
                    None if shares_vertex => {
                        if !interior_edges.contains(&e) {
                            interior_edges.push(e);
                        }
                    }
                    None => patch_boundary.push((e, PatchEdgeKind::InteriorFacing)),
                    Some(BoundaryTag::Absorbing) => patch_boundary.push((e, PatchEdgeKind::Absorbing)),
                    Some(BoundaryTag::Dirichlet) if shares_vertex => {
                        patch_boundary.push((e, PatchEdgeKind::DirichletSharingVertex))
                    }
                    Some(BoundaryTag::Dirichlet) => patch_boundary.push((e, PatchEdgeKind::DirichletOther)),
                }
            }
        }
        let pts: Vec<Point> = elements
            .iter()
            .flat_map(|&t| self.triangles[t])
            .map(|v| self.vertices[v])
            .collect();
        let mut h_a: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                h_a = h_a.max(dist(*p, *q));
            }
        }
        VertexPatch {
            vertex: a,
            elements,
            patch_boundary,
            interior_edges,
            h_a,
            is_dirichlet_vertex: self.is_dirichlet_vertex(a),
        }
    }

    /// Returns a copy with every boundary edge retagged.
    pub fn with_boundary_tag(&self, tag: BoundaryTag) -> Mesh {
        let boundary = self.boundary_edges.iter().map(|e| BoundaryEdge { tag, ..*e }).collect();
        Mesh::new(self.vertices.clone(), self.triangles.clone(), boundary, Some(self.refinement_edge.clone()))
            .expect("retagging preserves validity")
    }

    /// Checks the structural invariants: orientation, conformity, boundary tagging.
    pub fn check_invariants(&self) -> Result<()> {
        Mesh::new(
            self.vertices.clone(),
            self.triangles.clone(),
            self.boundary_edges.clone(),
            Some(self.refinement_edge.clone()),
        )?;
        // No vertex may sit in the interior of an edge (hanging node).
        for e in 0..self.n_edges() {
            let [a, b] = self.topo.edges[e];
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len = dist(pa, pb);
            for &t in self.topo.edge_elements[e].iter().flatten() {
                for &t2 in self.vertex_elements(a) {
                    if t2 == t {
                        continue;
                    }
                    for &v in &self.triangles[t2] {
                        if v == a || v == b {
                            continue;
                        }
                        let p = self.vertices[v];
                        let on_line = cross(sub(pb, pa), sub(p, pa)).abs() <= 1e-12 * len * len;
                        let s = dot(sub(p, pa), sub(pb, pa)) / (len * len);
                        if on_line && s > 1e-12 && s < 1.0 - 1e-12 {
                            return Err(Error::InvalidMesh(format!("hanging node {v} on edge {:?}", [a, b])));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Cartesian mesh of the rectangle `[lower, upper]` with `n × n` cells, each
/// split along its lower-left to upper-right diagonal. All boundary edges are
/// tagged Absorbing.
pub fn build_cartesian_mesh(n: usize, lower: Point, upper: Point) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidInput("grid size n must be at least 1".into()));
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = lower[0] + (upper[0] - lower[0]) * i as f64 / n as f64;
            let y = lower[1] + (upper[1] - lower[1]) * j as f64 / n as f64;
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    let mut refinement = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            refinement.push(1);
            triangles.push([v00, v11, v01]);
            refinement.push(2);
        }
    }
    let mut boundary = Vec::with_capacity(4 * n);
    let tag = BoundaryTag::Absorbing;
    for i in 0..n {
        boundary.push(BoundaryEdge { vertices: [id(i, 0), id(i + 1, 0)], tag });
        boundary.push(BoundaryEdge { vertices: [id(n, i), id(n, i + 1)], tag });
        boundary.push(BoundaryEdge { vertices: [id(i + 1, n), id(i, n)], tag });
        boundary.push(BoundaryEdge { vertices: [id(0, i + 1), id(0, i)], tag });
    }
    Mesh::new(vertices, triangles, boundary, Some(refinement))
}

/// Geometry of a triangle given by its vertices; `None` if degenerate.
pub fn element_geometry_of(v: [Point; 3]) -> Option<ElementGeometry> {
    let area = signed_area(v).abs();
    let sides = [dist(v[1], v[2]), dist(v[2], v[0]), dist(v[0], v[1])];
    let h = sides.iter().copied().fold(0.0, f64::max);
    if area <= 1e-14 * h * h || h == 0.0 {
        return None;
    }
    let rho = 2.0 * area / sides.iter().sum::<f64>();
    Some(ElementGeometry {
        h,
        rho,
        kappa: rho / h,
        area,
    })
}

pub(crate) fn signed_area(v: [Point; 3]) -> f64 {
    0.5 * cross(sub(v[1], v[0]), sub(v[2], v[0]))
}

fn diameter(v: [Point; 3]) -> f64 {
    dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[2], v[0]))
}

fn longest_edge(v: [Point; 3]) -> u8 {
    let l = [dist(v[1], v[2]), dist(v[2], v[0]), dist(v[0], v[1])];
    let mut best = 0;
    for i in 1..3 {
        if l[i] > l[best] * (1.0 + 1e-12) {
            best = i;
        }
    }
    best as u8
}

fn sorted(e: [usize; 2]) -> [usize; 2] {
    if e[0] < e[1] {
        e
    } else {
        [e[1], e[0]]
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Mesh {
        build_cartesian_mesh(n, [-1.0, -1.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn cartesian_counts_and_size() {
        let m = square(3);
        assert_eq!(m.n_vertices(), 16);
        assert_eq!(m.n_elements(), 18);
        assert!((m.h_max() - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-14);
        let m = square(1);
        assert_eq!((m.n_vertices(), m.n_elements()), (4, 2));
        let m = square(8);
        assert_eq!(m.n_elements(), 128);
        assert!((m.h_max() - 0.353_553_390_593_273_8).abs() < 1e-14);
        assert!((m.area() - 4.0).abs() < 1e-13);
        assert!(m.boundary_edges.iter().all(|e| e.tag == BoundaryTag::Absorbing));
    }

    #[test]
    fn cartesian_diagonals_run_southwest_to_northeast() {
        let m = square(2);
        for t in 0..m.n_elements() {
            let r = m.refinement_edge[t] as usize;
            let [a, b] = m.edge(m.element_edges(t)[r]);
            let d = sub(m.vertices[b], m.vertices[a]);
            assert!((d[0] - d[1]).abs() < 1e-14 && d[0] > 0.0);
        }
    }

    #[test]
    fn right_isosceles_geometry() {
        let g = element_geometry_of([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((g.h - 2f64.sqrt()).abs() < 1e-15);
        assert!((g.rho - (2.0 - 2f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((g.kappa - 0.207_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn equilateral_geometry() {
        let g = element_geometry_of([[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]).unwrap();
        assert!((g.h - 1.0).abs() < 1e-15);
        assert!((g.rho - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-15);
        assert!(g.kappa > 0.0 && g.kappa < 1.0);
    }

    #[test]
    fn degenerate_geometry_is_rejected() {
        assert!(element_geometry_of([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_none());
    }

    #[test]
    fn interior_patch_has_six_elements() {
        let m = square(4);
        let a = 12; // (i, j) = (2, 2), away from the boundary
        let p = m.vertex_patch(a);
        assert_eq!(p.elements.len(), 6);
        assert_eq!(p.interior_edges.len(), 6);
        assert!(p.patch_boundary.iter().all(|(_, k)| *k == PatchEdgeKind::InteriorFacing));
        assert!(!p.is_dirichlet_vertex);
    }

    #[test]
    fn corner_patches() {
        let m = square(3);
        for (corner, n_el) in [(0, 2), (3, 1), (12, 1), (15, 2)] {
            let p = m.vertex_patch(corner);
            assert_eq!(p.elements.len(), n_el, "corner {corner}");
            let absorbing_at_corner = p
                .patch_boundary
                .iter()
                .filter(|(e, k)| *k == PatchEdgeKind::Absorbing && m.edge(*e).contains(&corner))
                .count();
            assert_eq!(absorbing_at_corner, 2);
        }
    }

    #[test]
    fn dirichlet_patch_excludes_incident_edges_from_gamma_a() {
        let m = square(2).with_boundary_tag(BoundaryTag::Dirichlet);
        let p = m.vertex_patch(1); // bottom edge midpoint
        assert!(p.is_dirichlet_vertex);
        let excluded: Vec<_> = p
            .patch_boundary
            .iter()
            .filter(|(_, k)| *k == PatchEdgeKind::DirichletSharingVertex)
            .collect();
        assert_eq!(excluded.len(), 2);
        assert!(p.gamma_a().all(|(e, _)| !m.edge(e).contains(&1)));
    }

    #[test]
    fn validation_catches_untagged_boundary() {
        let m = square(1);
        let mut b = m.boundary_edges.clone();
        b.pop();
        assert!(Mesh::new(m.vertices.clone(), m.triangles.clone(), b, None).is_err());
    }

    #[test]
    fn validation_catches_clockwise_triangle() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tag = BoundaryTag::Absorbing;
        let b = vec![
            BoundaryEdge { vertices: [0, 1], tag },
            BoundaryEdge { vertices: [1, 2], tag },
            BoundaryEdge { vertices: [2, 0], tag },
        ];
        assert!(Mesh::new(v.clone(), vec![[0, 1, 2]], b.clone(), None).is_ok());
        assert!(Mesh::new(v, vec![[0, 2, 1]], b, None).is_err());
    }

    #[test]
    fn locate_and_affine_inverse() {
        let m = square(4);
        let (t, xhat) = m.locate([0.3, -0.7]).unwrap();
        let x = m.element_map(t).apply(xhat);
        assert!((x[0] - 0.3).abs() < 1e-14 && (x[1] + 0.7).abs() < 1e-14);
        assert!(m.locate([1.5, 0.0]).is_none());
    }
}
