//! Raviart–Thomas elements `RT_q(K) = x P_q(K) + [P_q(K)]^2`.
//!
//! Degrees of freedom on the reference triangle:
//!
//! * edge `e`, `j = 0..=q`: `∫_0^1 σ(x_e(t)) · N_e L_j(t) dt`, where `x_e` runs
//!   counterclockwise along the edge, `N_e` is the outward normal scaled by
//!   the edge length and `L_j` is the shifted Legendre polynomial;
//! * interior: moments against `[P_{q-1}]^2`.
//!
//! The edge moments are invariant under the contravariant Piola map, so a
//! physical basis is obtained by sign changes alone: for an edge whose
//! counterclockwise direction runs from the higher to the lower global
//! vertex index, both the normal and the parametrisation flip, which
//! multiplies moment `j` by `-(-1)^j`.

use faer::linalg::solvers::Solve;
use faer::Mat;

use super::lagrange::LagrangeBasis;
use super::{dim_p, legendre_all};
use crate::mesh::{Mesh, PatchEdgeKind, VertexPatch};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::Point;

/// Reference `RT_q` basis, dual to the edge/interior moments.
#[derive(Debug, Clone)]
pub struct RtBasis {
    pub degree: usize,
    lagrange: LagrangeBasis,
    /// `coeffs[s * dim + i]`: weight of primal function `s` in basis function `i`.
    coeffs: Vec<f64>,
    dim: usize,
}

/// Reference start/end points of local edge `e` (counterclockwise).
pub fn reference_edge(e: usize) -> (Point, Point) {
    const V: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    (V[(e + 1) % 3], V[(e + 2) % 3])
}

impl RtBasis {
    pub fn new(degree: usize) -> Self {
        let q = degree;
        let lagrange = LagrangeBasis::new(q);
        let dim = (q + 1) * (q + 3);
        let mut basis = Self {
            degree,
            lagrange,
            coeffs: Vec::new(),
            dim,
        };
        let n_primal = basis.n_primal();
        debug_assert_eq!(n_primal, dim);

        // Vandermonde of the dual functionals applied to the primal set.
        let mut v = Mat::<f64>::zeros(dim, dim);
        let erule = edge_rule(2 * q + 2).expect("edge rule");
        let mut pv = vec![[0.0; 2]; n_primal];
        let mut pd = vec![0.0; n_primal];
        for e in 0..3 {
            let (a, b) = reference_edge(e);
            let normal = [b[1] - a[1], -(b[0] - a[0])];
            for (t, w) in erule.iter() {
                let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                basis.eval_primal(x, &mut pv, &mut pd);
                let leg = legendre_all(q, t);
                for (j, lj) in leg.iter().enumerate() {
                    let row = e * (q + 1) + j;
                    for s in 0..n_primal {
                        v[(row, s)] += w * lj * (pv[s][0] * normal[0] + pv[s][1] * normal[1]);
                    }
                }
            }
        }
        if q > 0 {
            let inner = LagrangeBasis::new(q - 1);
            let m = inner.dim();
            let trule = triangle_rule(2 * q + 1).expect("triangle rule");
            for (x, w) in trule.iter() {
                basis.eval_primal(x, &mut pv, &mut pd);
                let (psi, _) = inner.eval(x);
                for (k, pk) in psi.iter().enumerate() {
                    for s in 0..n_primal {
                        v[(3 * (q + 1) + k, s)] += w * pk * pv[s][0];
                        v[(3 * (q + 1) + m + k, s)] += w * pk * pv[s][1];
                    }
                }
            }
        }
        let inv = v.partial_piv_lu().solve(Mat::<f64>::identity(dim, dim));
        let mut coeffs = vec![0.0; dim * dim];
        for s in 0..dim {
            for i in 0..dim {
                coeffs[s * dim + i] = inv[(s, i)];
            }
        }
        basis.coeffs = coeffs;
        basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of edge moments per edge.
    pub fn edge_dim(&self) -> usize {
        self.degree + 1
    }

    /// Local index of moment `j` on local edge `e`.
    pub fn edge_dof(&self, e: usize, j: usize) -> usize {
        e * (self.degree + 1) + j
    }

    pub fn n_interior(&self) -> usize {
        self.degree * (self.degree + 1)
    }

    fn n_primal(&self) -> usize {
        2 * self.lagrange.dim() + self.degree + 1
    }

    /// Primal spanning set: `(φ, 0)`, `(0, φ)` for the `P_q` Lagrange basis,
    /// then `x · x^a y^(q-a)`.
    fn eval_primal(&self, x: Point, values: &mut [[f64; 2]], divs: &mut [f64]) {
        let q = self.degree;
        let n = self.lagrange.dim();
        let mut lv = vec![0.0; n];
        let mut lg = vec![[0.0; 2]; n];
        self.lagrange.eval_into(x, &mut lv, &mut lg);
        for k in 0..n {
            values[k] = [lv[k], 0.0];
            divs[k] = lg[k][0];
            values[n + k] = [0.0, lv[k]];
            divs[n + k] = lg[k][1];
        }
        for a in 0..=q {
            let h = x[0].powi(a as i32) * x[1].powi((q - a) as i32);
            values[2 * n + a] = [x[0] * h, x[1] * h];
            // div(x h) = (2 + deg h) h for homogeneous h
            divs[2 * n + a] = (2 + q) as f64 * h;
        }
    }

    /// Reference values and divergences of all basis functions at `x`.
    pub fn eval(&self, x: Point) -> (Vec<[f64; 2]>, Vec<f64>) {
        let mut values = vec![[0.0; 2]; self.dim];
        let mut divs = vec![0.0; self.dim];
        self.eval_into(x, &mut values, &mut divs);
        (values, divs)
    }

    pub fn eval_into(&self, x: Point, values: &mut [[f64; 2]], divs: &mut [f64]) {
        let n = self.n_primal();
        let mut pv = vec![[0.0; 2]; n];
        let mut pd = vec![0.0; n];
        self.eval_primal(x, &mut pv, &mut pd);
        values.iter_mut().for_each(|v| *v = [0.0; 2]);
        divs.iter_mut().for_each(|d| *d = 0.0);
        for s in 0..n {
            let row = &self.coeffs[s * self.dim..(s + 1) * self.dim];
            for i in 0..self.dim {
                let c = row[i];
                values[i][0] += c * pv[s][0];
                values[i][1] += c * pv[s][1];
                divs[i] += c * pd[s];
            }
        }
    }

    /// Orientation signs of the local basis on element `t`, making edge
    /// moments refer to the global edge orientation.
    pub fn signs(&self, mesh: &Mesh, t: usize) -> Vec<f64> {
        let mut s = vec![1.0; self.dim];
        for e in 0..3 {
            if !mesh.edge_orientation_positive(t, e) {
                for j in 0..=self.degree {
                    s[self.edge_dof(e, j)] = if j % 2 == 0 { -1.0 } else { 1.0 };
                }
            }
        }
        s
    }
}

/// Dof map of `RT_q(T_a) ∩ H(div, ω_a)` on a vertex patch.
///
/// Patch dofs: `q + 1` per patch edge (interior edges first, then the edges
/// of ∂ω_a), then `q (q + 1)` per element. Edge moments refer to the global
/// edge orientation, so the shared dofs give normal-trace continuity.
#[derive(Debug, Clone)]
pub struct PatchRtSpace {
    pub degree: usize,
    pub vertex: usize,
    pub elements: Vec<usize>,
    /// Per patch element: patch dof of every local basis function.
    pub local_to_patch: Vec<Vec<usize>>,
    /// Per patch element: orientation signs of the local basis.
    pub signs: Vec<Vec<f64>>,
    /// Patch edges (global index), each owning `q + 1` consecutive dofs.
    pub edges: Vec<usize>,
    /// Dofs whose value is prescribed (normal-trace moments on Γ_a).
    pub essential: Vec<bool>,
    pub n_dofs: usize,
    /// Dimension of `P_q` on one element (multiplier space).
    pub multiplier_dim: usize,
    /// Whether the multiplier carries the mean-zero constraint (vertex not on Γ_D).
    pub mean_zero: bool,
}

impl PatchRtSpace {
    pub fn new(mesh: &Mesh, patch: &VertexPatch, basis: &RtBasis) -> Self {
        let q = basis.degree;
        let mut edges: Vec<usize> = patch.interior_edges.clone();
        edges.extend(patch.patch_boundary.iter().map(|(e, _)| *e));
        let edge_slot = |e: usize| edges.iter().position(|&x| x == e).unwrap();
        let n_edge_dofs = edges.len() * (q + 1);
        let mut essential = vec![false; n_edge_dofs + patch.elements.len() * basis.n_interior()];
        for (e, kind) in &patch.patch_boundary {
            if *kind != PatchEdgeKind::DirichletSharingVertex {
                let slot = edge_slot(*e);
                essential[slot * (q + 1)..(slot + 1) * (q + 1)].fill(true);
            }
        }
        let mut local_to_patch = Vec::with_capacity(patch.elements.len());
        let mut signs = Vec::with_capacity(patch.elements.len());
        for (k, &t) in patch.elements.iter().enumerate() {
            let gedges = mesh.element_edges(t);
            let mut map = Vec::with_capacity(basis.dim());
            for &ge in &gedges {
                let slot = edge_slot(ge);
                map.extend((0..=q).map(|j| slot * (q + 1) + j));
            }
            let base = n_edge_dofs + k * basis.n_interior();
            map.extend(base..base + basis.n_interior());
            local_to_patch.push(map);
            signs.push(basis.signs(mesh, t));
        }
        Self {
            degree: q,
            vertex: patch.vertex,
            elements: patch.elements.clone(),
            local_to_patch,
            signs,
            edges,
            n_dofs: essential.len(),
            essential,
            multiplier_dim: dim_p(q),
            mean_zero: !patch.is_dirichlet_vertex,
        }
    }

    /// Patch dofs of the `q + 1` moments on global edge `e`.
    pub fn edge_dofs(&self, e: usize) -> Option<std::ops::Range<usize>> {
        let slot = self.edges.iter().position(|&x| x == e)?;
        let q1 = self.degree + 1;
        Some(slot * q1..(slot + 1) * q1)
    }
}
