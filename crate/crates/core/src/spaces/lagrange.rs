//! Nodal Lagrange elements on equispaced nodes.

use std::sync::Arc;

use super::{barycentric, dim_p};
use crate::mesh::Mesh;
use crate::quadrature::TriangleRule;
use crate::Point;

/// Reference `P_p` nodal basis.
///
/// Node order: the three vertices, then the interior nodes of local edges
/// 0, 1, 2 (edge `i` runs counterclockwise from vertex `i+1` to vertex `i+2`),
/// then element-interior nodes.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    pub degree: usize,
    /// Barycentric lattice indices `(i0, i1, i2)`, `i0 + i1 + i2 = degree`.
    pub nodes: Vec<[usize; 3]>,
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Self {
        let p = degree;
        let mut nodes = Vec::with_capacity(dim_p(p));
        if p == 0 {
            nodes.push([0, 0, 0]);
            return Self { degree, nodes };
        }
        for i in 0..3 {
            let mut n = [0; 3];
            n[i] = p;
            nodes.push(n);
        }
        for i in 0..3 {
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            for s in 1..p {
                let mut n = [0; 3];
                n[a] = p - s;
                n[b] = s;
                nodes.push(n);
            }
        }
        for i2 in 1..p {
            for i1 in 1..p - i2 {
                let i0 = p - i1 - i2;
                if i0 >= 1 {
                    nodes.push([i0, i1, i2]);
                }
            }
        }
        debug_assert_eq!(nodes.len(), dim_p(p));
        Self { degree, nodes }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Reference coordinates of node `i`.
    pub fn node_xy(&self, i: usize) -> Point {
        if self.degree == 0 {
            return [1.0 / 3.0, 1.0 / 3.0];
        }
        let n = self.nodes[i];
        let p = self.degree as f64;
        [n[1] as f64 / p, n[2] as f64 / p]
    }

    /// Values and reference gradients of every basis function at `xhat`.
    pub fn eval(&self, xhat: Point) -> (Vec<f64>, Vec<[f64; 2]>) {
        let mut values = vec![0.0; self.dim()];
        let mut grads = vec![[0.0; 2]; self.dim()];
        self.eval_into(xhat, &mut values, &mut grads);
        (values, grads)
    }

    pub fn eval_into(&self, xhat: Point, values: &mut [f64], grads: &mut [[f64; 2]]) {
        if self.degree == 0 {
            values[0] = 1.0;
            grads[0] = [0.0, 0.0];
            return;
        }
        let p = self.degree;
        let (lam, dlam) = barycentric(xhat);
        // factors[m][i] = R_i(λ_m) and its derivative in λ_m
        let mut factors = [[(0.0, 0.0); 16]; 3];
        for m in 0..3 {
            let x = p as f64 * lam[m];
            factors[m][0] = (1.0, 0.0);
            for i in 1..=p {
                let (prev, dprev) = factors[m][i - 1];
                let s = (i - 1) as f64;
                let scale = 1.0 / i as f64;
                factors[m][i] = (prev * (x - s) * scale, (dprev * (x - s) + prev * p as f64) * scale);
            }
        }
        for (k, n) in self.nodes.iter().enumerate() {
            let (r0, d0) = factors[0][n[0]];
            let (r1, d1) = factors[1][n[1]];
            let (r2, d2) = factors[2][n[2]];
            values[k] = r0 * r1 * r2;
            let g0 = d0 * r1 * r2;
            let g1 = r0 * d1 * r2;
            let g2 = r0 * r1 * d2;
            grads[k] = [
                g0 * dlam[0][0] + g1 * dlam[1][0] + g2 * dlam[2][0],
                g0 * dlam[0][1] + g1 * dlam[1][1] + g2 * dlam[2][1],
            ];
        }
    }

    /// Values and reference gradients at every point of `rule`.
    pub fn tabulate(&self, rule: &TriangleRule) -> Tabulation {
        let n = self.dim();
        let mut values = vec![0.0; rule.len() * n];
        let mut grads = vec![[0.0; 2]; rule.len() * n];
        for q in 0..rule.len() {
            self.eval_into(rule.xy(q), &mut values[q * n..(q + 1) * n], &mut grads[q * n..(q + 1) * n]);
        }
        Tabulation { dim: n, values, grads }
    }
}

/// Basis values at quadrature points, point-major.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub dim: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.dim..(q + 1) * self.dim]
    }

    pub fn grads(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.dim..(q + 1) * self.dim]
    }
}

/// The conforming space `P_p(T_h) ∩ H^1_{Γ_D}` with its global numbering.
///
/// Global numbering: vertices, then `p - 1` nodes per edge ordered from the
/// lower to the higher vertex index, then element-interior nodes.
#[derive(Debug, Clone)]
pub struct LagrangeSpace {
    pub mesh: Arc<Mesh>,
    pub basis: LagrangeBasis,
    /// Global dof of every local node, per element.
    pub element_dofs: Vec<Vec<usize>>,
    pub dof_coords: Vec<Point>,
    pub dirichlet: Vec<bool>,
    /// Position of each dof among the unconstrained ones.
    pub free_index: Vec<Option<usize>>,
    pub n_free: usize,
}

impl LagrangeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Self {
        assert!(degree >= 1, "conforming space needs degree >= 1");
        let p = degree;
        let basis = LagrangeBasis::new(p);
        let nv = mesh.n_vertices();
        let ne = mesh.n_edges();
        let per_edge = p - 1;
        let per_cell = dim_p(p) - 3 - 3 * per_edge;
        let total = nv + ne * per_edge + mesh.n_elements() * per_cell;

        let mut element_dofs = Vec::with_capacity(mesh.n_elements());
        let mut dof_coords = vec![[0.0; 2]; total];
        for t in 0..mesh.n_elements() {
            let tri = mesh.triangles[t];
            let edges = mesh.element_edges(t);
            let map = mesh.element_map(t);
            let mut dofs = Vec::with_capacity(basis.dim());
            let mut interior = 0;
            for (k, n) in basis.nodes.iter().enumerate() {
                let zero = n.iter().filter(|&&c| c == 0).count();
                let dof = if zero == 2 {
                    tri[n.iter().position(|&c| c == p).unwrap()]
                } else if zero == 1 {
                    let i = n.iter().position(|&c| c == 0).unwrap();
                    let s = n[(i + 2) % 3];
                    let along = if mesh.edge_orientation_positive(t, i) { s - 1 } else { p - 1 - s };
                    nv + edges[i] * per_edge + along
                } else {
                    interior += 1;
                    nv + ne * per_edge + t * per_cell + interior - 1
                };
                dof_coords[dof] = map.apply(basis.node_xy(k));
                dofs.push(dof);
            }
            element_dofs.push(dofs);
        }

        let mut dirichlet = vec![false; total];
        for e in mesh.tagged_edges(crate::mesh::BoundaryTag::Dirichlet) {
            let [a, b] = mesh.edge(e);
            dirichlet[a] = true;
            dirichlet[b] = true;
            for k in 0..per_edge {
                dirichlet[nv + e * per_edge + k] = true;
            }
        }
        let mut free_index = vec![None; total];
        let mut n_free = 0;
        for (d, slot) in free_index.iter_mut().enumerate() {
            if !dirichlet[d] {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        Self {
            mesh,
            basis,
            element_dofs,
            dof_coords,
            dirichlet,
            free_index,
            n_free,
        }
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }
}
