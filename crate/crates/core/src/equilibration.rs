//! Equilibrated flux reconstruction.
//!
//! For every vertex `a` with hat function `ψ_a`, the local flux
//!
//! ```text
//! σ_a = argmin ‖τ + ψ_a ∇u_h‖_{ω_a}   over τ ∈ RT_{p+1}(T_a) ∩ H(div, ω_a),
//!       div τ = d_a,  τ·n = b_a on Γ_a,
//! d_a = ψ_a π f + ψ_a k^2 u_h - ∇ψ_a·∇u_h,
//! b_a = -ψ_a (π̃ g + ik u_h) on Γ_A edges, 0 on the rest of Γ_a,
//! ```
//!
//! is obtained from its mixed (Euler–Lagrange) system
//!
//! ```text
//! (σ, v) - (r, div v) = -(ψ_a ∇u_h, v),     (div σ, χ) = (d_a, χ),
//! ```
//!
//! with `r` in `P_{p+1}(T_a)`, mean-free when `a` is not on Γ_D. The global
//! flux is `σ_h = Σ_a σ_a`. The system matrix is real, so real and imaginary
//! parts are solved as two right-hand sides of one factorization.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{edge_rule, triangle_rule, EdgeRule, TriangleRule};
use crate::solver::{absorbing_edges, AbsorbingEdge, DiscreteField, HelmholtzProblem};
use crate::spaces::{barycentric, legendre_all, LagrangeBasis, PatchRtSpace, RtBasis};
use crate::{Point, C64};

/// Relative compatibility residual above which a patch is rejected.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Elementwise/facewise `L^2` projections of the data onto degree `p`.
#[derive(Debug, Clone)]
pub struct ProjectedData {
    pub degree: usize,
    /// `π_h^p f`: nodal `P_p` coefficients per element.
    pub f_proj: Vec<Vec<C64>>,
    /// `π̃_h^p g`: Legendre coefficients per Γ_A edge, in the counterclockwise
    /// parametrisation of the owning element; `None` off Γ_A.
    pub g_proj: Vec<Option<Vec<C64>>>,
}

impl ProjectedData {
    pub fn g_at(&self, edge: usize, t: f64) -> C64 {
        match &self.g_proj[edge] {
            Some(c) => c.iter().zip(legendre_all(self.degree, t)).map(|(c, l)| c * l).sum(),
            None => ZERO,
        }
    }
}

/// Inverse of the reference mass matrix of a nodal basis.
fn reference_mass_inverse(basis: &LagrangeBasis) -> Mat<f64> {
    let n = basis.dim();
    let rule = triangle_rule(2 * basis.degree).expect("mass rule");
    let mut m = Mat::<f64>::zeros(n, n);
    for (x, w) in rule.iter() {
        let (v, _) = basis.eval(x);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    m.partial_piv_lu().solve(Mat::<f64>::identity(n, n))
}

pub fn project_data(problem: &HelmholtzProblem) -> Result<ProjectedData> {
    project_data_with_degree(problem, problem.degree)
}

pub fn project_data_with_degree(problem: &HelmholtzProblem, p: usize) -> Result<ProjectedData> {
    let mesh = &*problem.mesh;
    let basis = LagrangeBasis::new(p);
    let n = basis.dim();
    let qdeg = problem.data_quad_degree().max(2 * p);
    let f_proj = match &problem.f {
        None => vec![vec![ZERO; n]; mesh.n_elements()],
        Some(f) => {
            let minv = reference_mass_inverse(&basis);
            let rule = triangle_rule(qdeg)?;
            let tab = basis.tabulate(&rule);
            (0..mesh.n_elements())
                .into_par_iter()
                .map(|t| {
                    let map = mesh.element_map(t);
                    let mut b = vec![ZERO; n];
                    for (q, &w) in rule.weights.iter().enumerate() {
                        let fx = f(map.apply(rule.xy(q))) * w;
                        for (bi, vi) in b.iter_mut().zip(tab.values(q)) {
                            *bi += fx * vi;
                        }
                    }
                    (0..n).map(|i| (0..n).map(|j| b[j] * minv[(i, j)]).sum()).collect()
                })
                .collect()
        }
    };
    let mut g_proj = vec![None; mesh.n_edges()];
    if let Some(g) = &problem.g {
        let rule = edge_rule(qdeg)?;
        for edge in absorbing_edges(mesh) {
            let map = mesh.element_map(edge.element);
            let mut c = vec![ZERO; p + 1];
            for (s, w) in rule.iter() {
                let gx = g(map.apply(edge.reference_point(s)), edge.normal) * w;
                for (j, l) in legendre_all(p, s).into_iter().enumerate() {
                    c[j] += gx * (l * (2 * j + 1) as f64);
                }
            }
            g_proj[edge.edge] = Some(c);
        }
    } else {
        for edge in absorbing_edges(mesh) {
            g_proj[edge.edge] = Some(vec![ZERO; p + 1]);
        }
    }
    Ok(ProjectedData {
        degree: p,
        f_proj,
        g_proj,
    })
}

/// Largest relative violation of `(f - π f, q)_K = 0` and `(g - π̃ g, q)_F = 0`
/// over the `P_p` test functions.
pub fn projection_residual(problem: &HelmholtzProblem, data: &ProjectedData) -> Result<f64> {
    let mesh = &*problem.mesh;
    let p = data.degree;
    let basis = LagrangeBasis::new(p);
    let qdeg = problem.data_quad_degree().max(2 * p);
    let mut worst: f64 = 0.0;
    if let Some(f) = &problem.f {
        let rule = triangle_rule(qdeg)?;
        let tab = basis.tabulate(&rule);
        for t in 0..mesh.n_elements() {
            let map = mesh.element_map(t);
            let mut r = vec![ZERO; basis.dim()];
            let mut scale = 0.0;
            for (q, &w) in rule.weights.iter().enumerate() {
                let v = tab.values(q);
                let fx = f(map.apply(rule.xy(q)));
                let pf: C64 = data.f_proj[t].iter().zip(v).map(|(c, v)| c * v).sum();
                scale += w * fx.norm();
                for (ri, vi) in r.iter_mut().zip(v) {
                    *ri += (fx - pf) * (w * vi);
                }
            }
            let m = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if scale > 0.0 {
                worst = worst.max(m / scale);
            }
        }
    }
    if let Some(g) = &problem.g {
        let rule = edge_rule(qdeg)?;
        for edge in absorbing_edges(mesh) {
            let map = mesh.element_map(edge.element);
            let mut r = vec![ZERO; p + 1];
            let mut scale = 0.0;
            for (s, w) in rule.iter() {
                let gx = g(map.apply(edge.reference_point(s)), edge.normal);
                let d = gx - data.g_at(edge.edge, s);
                scale += w * gx.norm();
                for (j, l) in legendre_all(p, s).into_iter().enumerate() {
                    r[j] += d * (w * l);
                }
            }
            let m = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if scale > 0.0 {
                worst = worst.max(m / scale);
            }
        }
    }
    Ok(worst)
}

/// Reference-element tables shared by all patches of a given degree.
#[derive(Debug, Clone)]
pub struct PatchReference {
    /// Degree `p` of `u_h`; the flux degree is `q = p + 1`.
    pub p: usize,
    pub rt: RtBasis,
    /// Nodal `P_q` basis for `d_a`, the target and the multipliers.
    pub pq: LagrangeBasis,
    pub pp: LagrangeBasis,
    pub rule: TriangleRule,
    pub erule: EdgeRule,
    rt_values: Vec<Vec<[f64; 2]>>,
    pq_values: Vec<Vec<f64>>,
    /// `∫ χ_k div φ_i` on the reference element.
    b_hat: Vec<Vec<f64>>,
    /// `∫ χ_k χ_m` on the reference element.
    mass_q: Vec<Vec<f64>>,
    /// `∫ χ_k` on the reference element.
    mean_q: Vec<f64>,
    /// `P_p` values/gradients at the `P_q` nodes.
    pp_at_nodes: Vec<(Vec<f64>, Vec<[f64; 2]>)>,
}

impl PatchReference {
    pub fn new(p: usize) -> Result<Self> {
        let q = p + 1;
        let rt = RtBasis::new(q);
        let pq = LagrangeBasis::new(q);
        let pp = LagrangeBasis::new(p);
        let rule = triangle_rule(2 * q + 2)?;
        let erule = edge_rule(2 * q)?;
        let mut rt_values = Vec::with_capacity(rule.len());
        let mut pq_values = Vec::with_capacity(rule.len());
        let mut b_hat = vec![vec![0.0; rt.dim()]; pq.dim()];
        let mut mass_q = vec![vec![0.0; pq.dim()]; pq.dim()];
        let mut mean_q = vec![0.0; pq.dim()];
        for (x, w) in rule.iter() {
            let (v, d) = rt.eval(x);
            let (c, _) = pq.eval(x);
            for k in 0..pq.dim() {
                mean_q[k] += w * c[k];
                for i in 0..rt.dim() {
                    b_hat[k][i] += w * c[k] * d[i];
                }
                for m in 0..pq.dim() {
                    mass_q[k][m] += w * c[k] * c[m];
                }
            }
            rt_values.push(v);
            pq_values.push(c);
        }
        let pp_at_nodes = (0..pq.dim()).map(|m| pp.eval(pq.node_xy(m))).collect();
        Ok(Self {
            p,
            rt,
            pq,
            pp,
            rule,
            erule,
            rt_values,
            pq_values,
            b_hat,
            mass_q,
            mean_q,
            pp_at_nodes,
        })
    }

    pub fn q(&self) -> usize {
        self.p + 1
    }
}

/// Data of one patch minimization.
#[derive(Debug, Clone)]
pub struct PatchProblem {
    pub mesh: Arc<Mesh>,
    pub space: PatchRtSpace,
    /// `d_a`: nodal `P_{p+1}` values per patch element.
    pub d: Vec<Vec<C64>>,
    /// `b_a` on the Γ_A edges through `a`: (edge, owning element, local edge,
    /// Legendre coefficients in that element's counterclockwise parametrisation).
    pub b: Vec<BoundaryDatum>,
    /// `ψ_a ∇u_h`: nodal `[P_{p+1}]^2` values per patch element.
    pub target: Vec<Vec<[C64; 2]>>,
    /// Relative compatibility residual before re-balancing (0 on Γ_D vertices).
    pub compatibility_residual: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryDatum {
    pub edge: usize,
    pub element: usize,
    pub local: usize,
    pub coeffs: Vec<C64>,
}

/// Context for building patch problems from a discrete solution.
pub struct Equilibrator<'a> {
    pub problem: &'a HelmholtzProblem,
    pub u_h: &'a DiscreteField,
    pub data: &'a ProjectedData,
    pub reference: &'a PatchReference,
    absorbing: Vec<Option<AbsorbingEdge>>,
    /// Fault injection: flips the sign of `b_a`.
    #[doc(hidden)]
    pub flip_boundary_sign: bool,
}

impl<'a> Equilibrator<'a> {
    pub fn new(
        problem: &'a HelmholtzProblem,
        u_h: &'a DiscreteField,
        data: &'a ProjectedData,
        reference: &'a PatchReference,
    ) -> Self {
        let mesh = &*problem.mesh;
        let mut absorbing = vec![None; mesh.n_edges()];
        for e in absorbing_edges(mesh) {
            absorbing[e.edge] = Some(e);
        }
        Self {
            problem,
            u_h,
            data,
            reference,
            absorbing,
            flip_boundary_sign: false,
        }
    }

    /// Builds the data `d_a`, `b_a`, `ψ_a ∇u_h` of vertex `a` and checks compatibility.
    pub fn build_patch_problem(&self, a: usize) -> Result<PatchProblem> {
        let mesh = self.problem.mesh.clone();
        let r = self.reference;
        let k2 = self.problem.k * self.problem.k;
        let ik = C64::new(0.0, self.problem.k);
        let patch = mesh.vertex_patch(a);
        let space = PatchRtSpace::new(&mesh, &patch, &r.rt);

        let mut d = Vec::with_capacity(patch.elements.len());
        let mut target = Vec::with_capacity(patch.elements.len());
        for &t in &patch.elements {
            let ia = mesh.triangles[t].iter().position(|&v| v == a).unwrap();
            let map = mesh.element_map(t);
            let c = self.u_h.element_coeffs(t);
            let grad_psi = map.grad(barycentric([0.0, 0.0]).1[ia]);
            let mut dt = Vec::with_capacity(r.pq.dim());
            let mut tt = Vec::with_capacity(r.pq.dim());
            for m in 0..r.pq.dim() {
                let psi = barycentric(r.pq.node_xy(m)).0[ia];
                let (v, g) = &r.pp_at_nodes[m];
                let mut u = ZERO;
                let mut gu = [ZERO; 2];
                let mut pf = ZERO;
                for i in 0..v.len() {
                    u += c[i] * v[i];
                    pf += self.data.f_proj[t][i] * v[i];
                    let gi = map.grad(g[i]);
                    gu[0] += c[i] * gi[0];
                    gu[1] += c[i] * gi[1];
                }
                dt.push((pf + u * k2) * psi - (gu[0] * grad_psi[0] + gu[1] * grad_psi[1]));
                tt.push([gu[0] * psi, gu[1] * psi]);
            }
            d.push(dt);
            target.push(tt);
        }

        let sign = if self.flip_boundary_sign { -1.0 } else { 1.0 };
        let mut b = Vec::new();
        for (e, _) in patch.gamma_a() {
            let Some(edge) = self.absorbing[e] else { continue };
            if !mesh.edge(e).contains(&a) {
                continue;
            }
            let t = edge.element;
            let ia = mesh.triangles[t].iter().position(|&v| v == a).unwrap();
            let c = self.u_h.element_coeffs(t);
            let q = r.q();
            let mut coeffs = vec![ZERO; q + 1];
            for (s, w) in r.erule.iter() {
                let xhat = edge.reference_point(s);
                let psi = barycentric(xhat).0[ia];
                let (v, _) = r.pp.eval(xhat);
                let u: C64 = c.iter().zip(&v).map(|(c, v)| c * v).sum();
                let val = -(self.data.g_at(e, s) + ik * u) * (psi * sign);
                for (j, l) in legendre_all(q, s).into_iter().enumerate() {
                    coeffs[j] += val * (w * l * (2 * j + 1) as f64);
                }
            }
            b.push(BoundaryDatum {
                edge: e,
                element: t,
                local: edge.local,
                coeffs,
            });
        }

        let mut pp = PatchProblem {
            mesh,
            space,
            d,
            b,
            target,
            compatibility_residual: 0.0,
        };
        if !patch.is_dirichlet_vertex {
            rebalance(&mut pp, r)?;
        }
        Ok(pp)
    }
}

/// `(d_a, 1)_{ω_a} - (b_a, 1)_{∂ω_a}` together with an `L^1` scale.
pub fn compatibility_defect(pp: &PatchProblem, r: &PatchReference) -> (C64, f64, f64) {
    let mut defect = ZERO;
    let mut scale = 0.0;
    let mut area = 0.0;
    for (k, &t) in pp.space.elements.iter().enumerate() {
        let det = pp.mesh.element_map(t).det;
        area += 0.5 * det;
        for (m, dm) in pp.d[k].iter().enumerate() {
            defect += dm * (det * r.mean_q[m]);
        }
        for (qi, &w) in r.rule.weights.iter().enumerate() {
            let v: C64 = pp.d[k].iter().zip(&r.pq_values[qi]).map(|(d, c)| d * c).sum();
            scale += w * det * v.norm();
        }
    }
    for bd in &pp.b {
        let len = pp.mesh.edge_length(bd.edge);
        defect -= bd.coeffs[0] * len;
        for (s, w) in r.erule.iter() {
            let v: C64 = bd.coeffs.iter().zip(legendre_all(r.q(), s)).map(|(c, l)| c * l).sum();
            scale += w * len * v.norm();
        }
    }
    (defect, scale, area)
}

fn rebalance(pp: &mut PatchProblem, r: &PatchReference) -> Result<()> {
    let (defect, scale, area) = compatibility_defect(pp, r);
    let rel = if scale > 0.0 { defect.norm() / scale } else { 0.0 };
    pp.compatibility_residual = rel;
    if rel > COMPATIBILITY_TOL {
        return Err(Error::Compatibility {
            vertex: pp.space.vertex,
            residual: rel,
        });
    }
    if defect.norm() > 0.0 {
        log::debug!("vertex {}: removing compatibility offset {:e}", pp.space.vertex, defect.norm());
        let shift = defect / area;
        for dk in &mut pp.d {
            for v in dk.iter_mut() {
                *v -= shift;
            }
        }
    }
    Ok(())
}

/// Prescribed values of the essential patch dofs (normal moments on Γ_a).
pub fn essential_values(pp: &PatchProblem, r: &PatchReference) -> Vec<C64> {
    let mut x = vec![ZERO; pp.space.n_dofs];
    for bd in &pp.b {
        let k = pp.space.elements.iter().position(|&t| t == bd.element).unwrap();
        let len = pp.mesh.edge_length(bd.edge);
        for j in 0..=r.q() {
            let li = r.rt.edge_dof(bd.local, j);
            let local = bd.coeffs[j] * (len / (2 * j + 1) as f64);
            x[pp.space.local_to_patch[k][li]] = local * pp.space.signs[k][li];
        }
    }
    x
}

/// Physical mass matrix of the local RT basis (before orientation signs).
fn element_rt_mass(map: &crate::mesh::AffineMap, r: &PatchReference) -> Vec<f64> {
    let n = r.rt.dim();
    let j = map.jacobian;
    let mut m = vec![0.0; n * n];
    let mut jv = vec![[0.0; 2]; n];
    for (qi, &w) in r.rule.weights.iter().enumerate() {
        for (i, v) in r.rt_values[qi].iter().enumerate() {
            jv[i] = [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]];
        }
        let wq = w / map.det;
        for a in 0..n {
            for b in a..n {
                m[a * n + b] += wq * (jv[a][0] * jv[b][0] + jv[a][1] * jv[b][1]);
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            m[a * n + b] = m[b * n + a];
        }
    }
    m
}

/// Solution of one patch problem in patch dofs.
#[derive(Debug, Clone)]
pub struct PatchFlux {
    pub coeffs: Vec<C64>,
}

impl PatchFlux {
    /// Coefficients of the local reference basis on patch element `k`.
    pub fn local(&self, space: &PatchRtSpace, k: usize) -> Vec<C64> {
        space.local_to_patch[k]
            .iter()
            .zip(&space.signs[k])
            .map(|(&p, &s)| self.coeffs[p] * s)
            .collect()
    }
}

/// Solves the mixed system of one patch with a dense LU factorization.
pub fn solve_patch(pp: &PatchProblem, r: &PatchReference) -> Result<PatchFlux> {
    let sp = &pp.space;
    let n_rt = r.rt.dim();
    let n_pq = r.pq.dim();
    let free: Vec<Option<usize>> = {
        let mut c = 0;
        sp.essential
            .iter()
            .map(|&e| {
                if e {
                    None
                } else {
                    c += 1;
                    Some(c - 1)
                }
            })
            .collect()
    };
    let n_f = free.iter().filter(|f| f.is_some()).count();
    let n_m = sp.elements.len() * n_pq;
    let n_mu = usize::from(sp.mean_zero);
    let n = n_f + n_m + n_mu;
    let xe = essential_values(pp, r);

    let mut a = Mat::<f64>::zeros(n, n);
    let mut rhs = Mat::<f64>::zeros(n, 2);
    let mut add_rhs = |row: usize, v: C64| {
        rhs[(row, 0)] += v.re;
        rhs[(row, 1)] += v.im;
    };
    for (k, &t) in sp.elements.iter().enumerate() {
        let map = pp.mesh.element_map(t);
        let mass = element_rt_mass(&map, r);
        let l2p = &sp.local_to_patch[k];
        let sg = &sp.signs[k];

        // -(ψ_a ∇u_h, φ_i)_K via the Piola map (det > 0)
        let mut f = vec![ZERO; n_rt];
        let j = map.jacobian;
        for (qi, &w) in r.rule.weights.iter().enumerate() {
            let c = &r.pq_values[qi];
            let mut tv = [ZERO; 2];
            for (m, cm) in c.iter().enumerate() {
                tv[0] += pp.target[k][m][0] * *cm;
                tv[1] += pp.target[k][m][1] * *cm;
            }
            for (i, v) in r.rt_values[qi].iter().enumerate() {
                let jv = [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]];
                f[i] -= (tv[0] * jv[0] + tv[1] * jv[1]) * w;
            }
        }
        // (d_a, χ_m)_K
        let g: Vec<C64> = (0..n_pq)
            .map(|m| (0..n_pq).map(|l| pp.d[k][l] * (map.det * r.mass_q[m][l])).sum())
            .collect();

        for i in 0..n_rt {
            let pi = l2p[i];
            let Some(fi) = free[pi] else { continue };
            add_rhs(fi, f[i] * sg[i]);
            for jj in 0..n_rt {
                let v = sg[i] * sg[jj] * mass[i * n_rt + jj];
                match free[l2p[jj]] {
                    Some(fj) => a[(fi, fj)] += v,
                    None => add_rhs(fi, -xe[l2p[jj]] * v),
                }
            }
        }
        for m in 0..n_pq {
            let row = n_f + k * n_pq + m;
            add_rhs(row, -g[m]);
            for i in 0..n_rt {
                let v = -sg[i] * r.b_hat[m][i];
                match free[l2p[i]] {
                    Some(fi) => {
                        a[(row, fi)] += v;
                        a[(fi, row)] += v;
                    }
                    None => add_rhs(row, -xe[l2p[i]] * v),
                }
            }
            if sp.mean_zero {
                let c = map.det * r.mean_q[m];
                a[(row, n - 1)] += c;
                a[(n - 1, row)] += c;
            }
        }
    }

    let x = a.partial_piv_lu().solve(&rhs);
    let res = &a * &x - &rhs;
    let rn = res.norm_l2();
    let bn = rhs.norm_l2();
    if !rn.is_finite() || rn > 1e-8 * bn.max(f64::MIN_POSITIVE) && bn > 0.0 {
        return Err(Error::SingularPatch { vertex: sp.vertex });
    }
    let coeffs = (0..sp.n_dofs)
        .map(|p| match free[p] {
            Some(fi) => C64::new(x[(fi, 0)], x[(fi, 1)]),
            None => xe[p],
        })
        .collect();
    Ok(PatchFlux { coeffs })
}

/// `‖σ + ψ_a ∇u_h‖^2_{ω_a}` for patch coefficients `coeffs`.
pub fn patch_objective(pp: &PatchProblem, r: &PatchReference, coeffs: &[C64]) -> f64 {
    let flux = PatchFlux { coeffs: coeffs.to_vec() };
    let mut total = 0.0;
    for (k, &t) in pp.space.elements.iter().enumerate() {
        let map = pp.mesh.element_map(t);
        let c = flux.local(&pp.space, k);
        for (qi, &w) in r.rule.weights.iter().enumerate() {
            let mut s = [ZERO; 2];
            for (i, v) in r.rt_values[qi].iter().enumerate() {
                let pv = map.push_vector(*v);
                s[0] += c[i] * pv[0];
                s[1] += c[i] * pv[1];
            }
            for (m, cm) in r.pq_values[qi].iter().enumerate() {
                s[0] += pp.target[k][m][0] * *cm;
                s[1] += pp.target[k][m][1] * *cm;
            }
            total += w * map.det * (s[0].norm_sqr() + s[1].norm_sqr());
        }
    }
    total
}

/// The reconstructed flux `σ_h` as local `RT_{p+1}` coefficients per element.
#[derive(Debug, Clone)]
pub struct FluxField {
    pub mesh: Arc<Mesh>,
    pub basis: RtBasis,
    pub coeffs: Vec<Vec<C64>>,
}

impl FluxField {
    pub fn zero(mesh: Arc<Mesh>, degree: usize) -> Self {
        let basis = RtBasis::new(degree);
        let coeffs = vec![vec![ZERO; basis.dim()]; mesh.n_elements()];
        Self { mesh, basis, coeffs }
    }

    /// Value and divergence at reference point `xhat` of element `t`.
    pub fn eval_element(&self, t: usize, xhat: Point) -> ([C64; 2], C64) {
        let map = self.mesh.element_map(t);
        let (v, d) = self.basis.eval(xhat);
        let mut s = [ZERO; 2];
        let mut div = ZERO;
        for (i, c) in self.coeffs[t].iter().enumerate() {
            let pv = map.push_vector(v[i]);
            s[0] += c * pv[0];
            s[1] += c * pv[1];
            div += c * (d[i] / map.det);
        }
        (s, div)
    }

    pub fn eval(&self, x: Point) -> Result<([C64; 2], C64)> {
        let (t, xhat) = self.mesh.locate(x).ok_or(Error::PointOutsideMesh { x: x[0], y: x[1] })?;
        Ok(self.eval_element(t, xhat))
    }
}

/// Sums the patch fluxes into `σ_h`, in ascending vertex order.
pub fn assemble_global_flux(mesh: Arc<Mesh>, degree: usize, patches: &[(PatchRtSpace, PatchFlux)]) -> FluxField {
    let mut field = FluxField::zero(mesh, degree);
    for (space, flux) in patches {
        for (k, &t) in space.elements.iter().enumerate() {
            for (acc, v) in field.coeffs[t].iter_mut().zip(flux.local(space, k)) {
                *acc += v;
            }
        }
    }
    field
}

/// Output of [`equilibrate`].
#[derive(Debug, Clone)]
pub struct Equilibration {
    pub flux: FluxField,
    pub data: ProjectedData,
    /// Largest relative compatibility residual over the non-Dirichlet vertices.
    pub max_compatibility_residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EquilibrationOptions {
    #[doc(hidden)]
    pub flip_boundary_sign: bool,
}

pub fn equilibrate(problem: &HelmholtzProblem, u_h: &DiscreteField) -> Result<Equilibration> {
    equilibrate_with(problem, u_h, EquilibrationOptions::default())
}

pub fn equilibrate_with(
    problem: &HelmholtzProblem,
    u_h: &DiscreteField,
    options: EquilibrationOptions,
) -> Result<Equilibration> {
    let p = u_h.space.degree();
    let data = project_data_with_degree(problem, p)?;
    let reference = PatchReference::new(p)?;
    let mut eq = Equilibrator::new(problem, u_h, &data, &reference);
    eq.flip_boundary_sign = options.flip_boundary_sign;
    let mesh = problem.mesh.clone();
    let patches: Vec<Result<(PatchRtSpace, PatchFlux, f64)>> = (0..mesh.n_vertices())
        .into_par_iter()
        .map(|a| {
            let pp = eq.build_patch_problem(a)?;
            let flux = solve_patch(&pp, &reference)?;
            Ok((pp.space, flux, pp.compatibility_residual))
        })
        .collect();
    let mut solved = Vec::with_capacity(patches.len());
    let mut worst: f64 = 0.0;
    for r in patches {
        let (s, f, c) = r?;
        worst = worst.max(c);
        solved.push((s, f));
    }
    let flux = assemble_global_flux(mesh, p + 1, &solved);
    Ok(Equilibration {
        flux,
        data,
        max_compatibility_residual: worst,
    })
}

/// Relative violations of the equilibration identities.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCheck {
    /// max over K of `‖div σ_h - π f - k^2 u_h‖_K / ‖div σ_h‖_K`.
    pub divergence: f64,
    /// max over Γ_A edges of `‖σ_h·n + π̃ g + ik u_h‖_e / ‖σ_h·n‖_e`.
    pub boundary_trace: f64,
    /// max over interior edges of the normal-trace jump at quadrature points,
    /// relative to the largest normal trace on the mesh.
    pub normal_jump: f64,
}

pub fn check_identities(
    problem: &HelmholtzProblem,
    u_h: &DiscreteField,
    eq: &Equilibration,
) -> Result<IdentityCheck> {
    let mesh = &*problem.mesh;
    let flux = &eq.flux;
    let data = &eq.data;
    let p = data.degree;
    let k = problem.k;
    let rule = triangle_rule(2 * (p + 1))?;
    let pp = LagrangeBasis::new(p);
    let divergence = (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| {
            let map = mesh.element_map(t);
            let (mut num, mut den) = (0.0, 0.0);
            for (x, w) in rule.iter() {
                let (_, div) = flux.eval_element(t, x);
                let (u, _) = u_h.eval_element(t, x);
                let (v, _) = pp.eval(x);
                let pf: C64 = data.f_proj[t].iter().zip(&v).map(|(c, v)| c * v).sum();
                num += w * map.det * (div - pf - u * (k * k)).norm_sqr();
                den += w * map.det * div.norm_sqr();
            }
            if den > 0.0 {
                (num / den).sqrt()
            } else {
                num.sqrt()
            }
        })
        .reduce(|| 0.0, f64::max);

    let erule = edge_rule(2 * (p + 1))?;
    let ik = C64::new(0.0, k);
    let mut boundary_trace: f64 = 0.0;
    for edge in absorbing_edges(mesh) {
        let (mut num, mut den) = (0.0, 0.0);
        for (s, w) in erule.iter() {
            let xhat = edge.reference_point(s);
            let (sv, _) = flux.eval_element(edge.element, xhat);
            let sn = sv[0] * edge.normal[0] + sv[1] * edge.normal[1];
            let (u, _) = u_h.eval_element(edge.element, xhat);
            num += w * (sn + data.g_at(edge.edge, s) + ik * u).norm_sqr();
            den += w * sn.norm_sqr();
        }
        boundary_trace = boundary_trace.max(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
    }

    let mut max_jump: f64 = 0.0;
    let mut max_trace: f64 = 0.0;
    for e in 0..mesh.n_edges() {
        let [a, b] = mesh.edge(e);
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let len = mesh.edge_length(e);
        let n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let els = mesh.edge_elements(e);
        for (s, _) in erule.iter() {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let mut tr = Vec::with_capacity(2);
            for t in els.iter().flatten() {
                let (sv, _) = flux.eval_element(*t, mesh.element_map(*t).inverse(x));
                tr.push(sv[0] * n[0] + sv[1] * n[1]);
            }
            max_trace = tr.iter().fold(max_trace, |m, z| m.max(z.norm()));
            if tr.len() == 2 {
                max_jump = max_jump.max((tr[0] - tr[1]).norm());
            }
        }
    }
    let normal_jump = if max_trace > 0.0 { max_jump / max_trace } else { max_jump };
    Ok(IdentityCheck {
        divergence,
        boundary_trace,
        normal_jump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian_mesh;
    use crate::solver::{solve_helmholtz, AnalyticSolution, PlaneWave, Polynomial};
    use crate::spaces::LagrangeSpace;
    use std::f64::consts::PI;

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_cartesian_mesh(n, [-1.0, -1.0], [1.0, 1.0]).unwrap())
    }

    #[test]
    fn constant_and_linear_projections() {
        let mesh = square(2);
        let pb = HelmholtzProblem::new(mesh.clone(), 1.0, 1).unwrap().with_source(Arc::new(|_| C64::new(2.0, -1.0)));
        let d = project_data(&pb).unwrap();
        assert!(d.f_proj.iter().flatten().all(|c| (c - C64::new(2.0, -1.0)).norm() < 1e-13));

        // f = x on the reference triangle, p = 0 → mean 1/3
        let tri = Arc::new(
            Mesh::new(
                vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                vec![[0, 1, 2]],
                (0..3)
                    .map(|i| crate::mesh::BoundaryEdge {
                        vertices: [i, (i + 1) % 3],
                        tag: crate::mesh::BoundaryTag::Absorbing,
                    })
                    .collect(),
                None,
            )
            .unwrap(),
        );
        let pb = HelmholtzProblem::new(tri, 1.0, 1).unwrap().with_source(Arc::new(|x| C64::new(x[0], 0.0)));
        let d = project_data_with_degree(&pb, 0).unwrap();
        assert!((d.f_proj[0][0] - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn plane_wave_projection_is_orthogonal() {
        let pb = HelmholtzProblem::new(square(8), PI, 1).unwrap().with_incident(Arc::new(PlaneWave::new(PI, PI / 3.0)));
        let d = project_data(&pb).unwrap();
        assert!(projection_residual(&pb, &d).unwrap() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_patch_data() {
        let mesh = square(3);
        let pb = HelmholtzProblem::new(mesh.clone(), 2.0, 1).unwrap();
        let u = DiscreteField::zero(Arc::new(LagrangeSpace::new(mesh, 1)));
        let data = project_data(&pb).unwrap();
        let r = PatchReference::new(1).unwrap();
        let eq = Equilibrator::new(&pb, &u, &data, &r);
        let pp = eq.build_patch_problem(5).unwrap();
        assert!(pp.d.iter().flatten().all(|z| z.norm() == 0.0));
        assert!(pp.b.iter().flat_map(|b| &b.coeffs).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn non_galerkin_data_violates_compatibility() {
        let mesh = square(4);
        let pb = HelmholtzProblem::new(mesh.clone(), 2.0, 1).unwrap().with_source(Arc::new(|_| C64::new(1.0, 0.0)));
        let u = DiscreteField::zero(Arc::new(LagrangeSpace::new(mesh, 1)));
        let data = project_data(&pb).unwrap();
        let r = PatchReference::new(1).unwrap();
        let eq = Equilibrator::new(&pb, &u, &data, &r);
        assert!(matches!(eq.build_patch_problem(12), Err(Error::Compatibility { vertex: 12, .. })));
    }

    #[test]
    fn polynomial_solution_gives_zero_estimator_flux() {
        // u = x y (p = 2) is reproduced exactly, so σ_h = -∇u_h.
        let mesh = square(3);
        let u = Polynomial::new(vec![(C64::new(1.0, 0.5), 1, 1)]);
        let pb = HelmholtzProblem::manufactured(mesh.clone(), 1.5, 2, u.clone()).unwrap();
        let uh = solve_helmholtz(&pb).unwrap();
        let eq = equilibrate(&pb, &uh).unwrap();
        let rule = triangle_rule(6).unwrap();
        for t in 0..mesh.n_elements() {
            for (x, _) in rule.iter() {
                let (s, _) = eq.flux.eval_element(t, x);
                let g = u.gradient(mesh.element_map(t).apply(x));
                assert!((s[0] + g[0]).norm() < 1e-9 && (s[1] + g[1]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn identities_hold_for_plane_wave() {
        for p in 1..=2 {
            let pb = HelmholtzProblem::new(square(4), PI, p).unwrap().with_incident(Arc::new(PlaneWave::new(PI, PI / 3.0)));
            let uh = solve_helmholtz(&pb).unwrap();
            let eq = equilibrate(&pb, &uh).unwrap();
            let c = check_identities(&pb, &uh, &eq).unwrap();
            assert!(c.divergence < 1e-10, "{c:?}");
            assert!(c.boundary_trace < 1e-10, "{c:?}");
            assert!(c.normal_jump < 1e-10, "{c:?}");
            assert!(eq.max_compatibility_residual < 1e-11);
        }
    }

    #[test]
    fn flipped_boundary_datum_breaks_identities() {
        let pb = HelmholtzProblem::new(square(4), PI, 1).unwrap().with_incident(Arc::new(PlaneWave::new(PI, PI / 3.0)));
        let uh = solve_helmholtz(&pb).unwrap();
        let res = equilibrate_with(&pb, &uh, EquilibrationOptions { flip_boundary_sign: true });
        match res {
            Err(Error::Compatibility { .. }) => {}
            Ok(eq) => {
                let c = check_identities(&pb, &uh, &eq).unwrap();
                assert!(c.boundary_trace > 1e-3 || c.divergence > 1e-3);
            }
            Err(e) => panic!("{e}"),
        }
    }
}
