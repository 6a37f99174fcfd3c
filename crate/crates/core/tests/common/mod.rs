//! Shared fixtures: random vertex patches and an independent dense solver
//! for the patch flux minimization.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use helmholtz_core::equilibration::{
    assemble_global_flux, solve_patch, BoundaryDatum, PatchFlux, PatchProblem, PatchReference,
};
use helmholtz_core::mesh::{BoundaryEdge, BoundaryTag, Mesh};
use helmholtz_core::spaces::{LagrangeBasis, PatchRtSpace};
use helmholtz_core::{Point, C64};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss–Legendre nodes and weights on `[0, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        t[(i, i - 1)] = b;
        t[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(t);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v * v)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Collapsed tensor rule on the reference triangle.
pub fn duffy(n: usize) -> Vec<(Point, f64)> {
    let g = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            out.push(([u, v * (1.0 - u)], wu * wv * (1.0 - u)));
        }
    }
    out
}

/// A mesh consisting of one vertex patch around vertex 0.
pub struct RandomPatch {
    pub mesh: Arc<Mesh>,
    pub interior: bool,
}

/// Fan of `m` triangles around the origin; closed if `interior`.
pub fn random_patch(rng: &mut ChaCha8Rng, interior: bool, m: usize) -> RandomPatch {
    let span = if interior { 2.0 * PI } else { rng.random_range(0.5 * PI..1.5 * PI) };
    // Angular gaps in [0.25, 0.8π] so no triangle degenerates.
    let gaps = loop {
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(0.75..1.25)).collect();
        let total: f64 = g.iter().sum();
        let g: Vec<f64> = g.iter().map(|x| x * span / total).collect();
        if g.iter().all(|&x| (0.25..=0.8 * PI).contains(&x)) {
            break g;
        }
    };
    let mut angles = vec![0.0];
    for g in &gaps[..m - 1] {
        angles.push(angles.last().unwrap() + g);
    }
    if !interior {
        angles.push(span);
    }
    let rot = rng.random_range(0.0..2.0 * PI);
    let mut vertices = vec![[rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)]];
    for a in &angles {
        let r = rng.random_range(0.5..1.5);
        vertices.push([vertices[0][0] + r * (a + rot).cos(), vertices[0][1] + r * (a + rot).sin()]);
    }
    let n_outer = angles.len();
    let triangles: Vec<[usize; 3]> = (0..m).map(|i| [0, 1 + i, 1 + (i + 1) % n_outer]).collect();
    let mut tag = || if rng.random_bool(0.5) { BoundaryTag::Absorbing } else { BoundaryTag::Dirichlet };
    let mut boundary: Vec<BoundaryEdge> =
        triangles.iter().map(|t| BoundaryEdge { vertices: [t[1], t[2]], tag: tag() }).collect();
    if !interior {
        boundary.push(BoundaryEdge { vertices: [0, 1], tag: tag() });
        boundary.push(BoundaryEdge { vertices: [n_outer, 0], tag: tag() });
    }
    let mesh = Mesh::new(vertices, triangles, boundary, None).expect("valid fan");
    RandomPatch { mesh: Arc::new(mesh), interior }
}

fn random_c64(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Patch problem around vertex 0 with random polynomial data, made
/// compatible when the vertex is not on Γ_D.
pub fn random_patch_problem(rng: &mut ChaCha8Rng, patch: &RandomPatch, r: &PatchReference) -> PatchProblem {
    let mesh = patch.mesh.clone();
    let vp = mesh.vertex_patch(0);
    let space = PatchRtSpace::new(&mesh, &vp, &r.rt);
    let q = r.q();
    let nq = r.pq.dim();
    let mut d: Vec<Vec<C64>> = vp.elements.iter().map(|_| (0..nq).map(|_| random_c64(rng)).collect()).collect();
    let target = vp.elements.iter().map(|_| (0..nq).map(|_| [random_c64(rng), random_c64(rng)]).collect()).collect();
    let mut b = Vec::new();
    for e in 0..mesh.n_edges() {
        if mesh.edge_tag(e) == Some(BoundaryTag::Absorbing) && mesh.edge(e).contains(&0) {
            let t = mesh.edge_elements(e)[0].unwrap();
            let local = mesh.element_edges(t).iter().position(|&x| x == e).unwrap();
            b.push(BoundaryDatum { edge: e, element: t, local, coeffs: (0..=q).map(|_| random_c64(rng)).collect() });
        }
    }
    if space.mean_zero {
        let rule = duffy(8);
        let mut integral = C64::new(0.0, 0.0);
        let mut area = 0.0;
        for (k, &t) in vp.elements.iter().enumerate() {
            let det = mesh.element_map(t).det;
            area += 0.5 * det;
            for (x, w) in &rule {
                integral += nodal(&r.pq, &d[k], *x) * (w * det);
            }
        }
        let flux: C64 = b.iter().map(|bd| bd.coeffs[0] * mesh.edge_length(bd.edge)).sum();
        let shift = (flux - integral) / area;
        for dk in &mut d {
            for v in dk.iter_mut() {
                *v += shift;
            }
        }
    }
    PatchProblem { mesh, space, d, b, target, compatibility_residual: 0.0 }
}

fn nodal(basis: &LagrangeBasis, coeffs: &[C64], xhat: Point) -> C64 {
    let (v, _) = basis.eval(xhat);
    v.iter().zip(coeffs).map(|(a, c)| c * *a).sum()
}

fn nodal_vec(basis: &LagrangeBasis, coeffs: &[[C64; 2]], xhat: Point) -> [C64; 2] {
    let (v, _) = basis.eval(xhat);
    let mut out = [C64::new(0.0, 0.0); 2];
    for (a, c) in v.iter().zip(coeffs) {
        out[0] += c[0] * *a;
        out[1] += c[1] * *a;
    }
    out
}

/// Monomial Raviart–Thomas basis of degree `q` in scaled coordinates
/// `ξ = (x - c) / h`: `[P_q]^2` plus `ξ` times homogeneous degree-`q` terms.
struct MonomialRt {
    q: usize,
    centre: Point,
    scale: f64,
}

impl MonomialRt {
    fn dim(&self) -> usize {
        (self.q + 1) * (self.q + 3)
    }

    fn exponents(&self) -> Vec<(i32, i32)> {
        let mut e = Vec::new();
        for d in 0..=self.q as i32 {
            for i in 0..=d {
                e.push((d - i, i));
            }
        }
        e
    }

    /// Values and divergences at physical point `x`.
    fn eval(&self, x: Point) -> (Vec<[f64; 2]>, Vec<f64>) {
        let xi = [(x[0] - self.centre[0]) / self.scale, (x[1] - self.centre[1]) / self.scale];
        let pw = |a: i32, b: i32| xi[0].powi(a) * xi[1].powi(b);
        let dpw = |a: i32, b: i32, dir: usize| {
            let (c, a2, b2) = if dir == 0 { (a, a - 1, b) } else { (b, a, b - 1) };
            if c == 0 {
                0.0
            } else {
                c as f64 * xi[0].powi(a2.max(0)) * xi[1].powi(b2.max(0))
            }
        };
        let mut v = Vec::with_capacity(self.dim());
        let mut d = Vec::with_capacity(self.dim());
        for (a, b) in self.exponents() {
            v.push([pw(a, b), 0.0]);
            d.push(dpw(a, b, 0) / self.scale);
            v.push([0.0, pw(a, b)]);
            d.push(dpw(a, b, 1) / self.scale);
        }
        for i in 0..=self.q as i32 {
            let (a, b) = (self.q as i32 - i, i);
            let m = pw(a, b);
            v.push([xi[0] * m, xi[1] * m]);
            d.push((2 + self.q) as f64 * m / self.scale);
        }
        (v, d)
    }
}

/// Solves the patch minimization with a broken monomial RT space, Lagrange
/// multipliers for the divergence, normal continuity and boundary conditions,
/// and an SVD least-squares solve of the full KKT system. Returns the flux
/// values at the points of `duffy(8)` on every patch element.
pub fn oracle_flux(pp: &PatchProblem, r: &PatchReference) -> Vec<Vec<[C64; 2]>> {
    let mesh = &*pp.mesh;
    let q = r.q();
    let elements = &pp.space.elements;
    let bases: Vec<MonomialRt> = elements
        .iter()
        .map(|&t| {
            let v = mesh.element_vertices(t);
            let centre = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
            MonomialRt { q, centre, scale: mesh.element_geometry(t).unwrap().h }
        })
        .collect();
    let nb = bases[0].dim();
    let n = nb * elements.len();
    let rule = duffy(8);
    let gl = gauss_legendre(8);

    // Objective ‖σ + target‖² gives M x = -f.
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut f = DMatrix::<f64>::zeros(n, 2);
    let mut rows: Vec<(Vec<(usize, f64)>, C64)> = Vec::new();
    for (k, &t) in elements.iter().enumerate() {
        let map = mesh.element_map(t);
        let basis = &bases[k];
        let off = k * nb;
        // Divergence tested against monomials of degree <= q.
        let tests = basis.exponents();
        let mut div_rows = vec![vec![0.0; nb]; tests.len()];
        let mut div_rhs = vec![C64::new(0.0, 0.0); tests.len()];
        for (xhat, w) in &rule {
            let x = map.apply(*xhat);
            let wq = w * map.det;
            let (v, d) = basis.eval(x);
            let tgt = nodal_vec(&r.pq, &pp.target[k], *xhat);
            let dval = nodal(&r.pq, &pp.d[k], *xhat);
            for i in 0..nb {
                for j in 0..nb {
                    m[(off + i, off + j)] += wq * (v[i][0] * v[j][0] + v[i][1] * v[j][1]);
                }
                let ft = tgt[0] * v[i][0] + tgt[1] * v[i][1];
                f[(off + i, 0)] += wq * ft.re;
                f[(off + i, 1)] += wq * ft.im;
            }
            let xi = [(x[0] - basis.centre[0]) / basis.scale, (x[1] - basis.centre[1]) / basis.scale];
            for (ti, &(a, b)) in tests.iter().enumerate() {
                let mu = xi[0].powi(a) * xi[1].powi(b);
                for i in 0..nb {
                    div_rows[ti][i] += wq * d[i] * mu;
                }
                div_rhs[ti] += dval * (wq * mu);
            }
        }
        for (row, rhs) in div_rows.into_iter().zip(div_rhs) {
            rows.push((row.into_iter().enumerate().map(|(i, v)| (off + i, v)).collect(), rhs));
        }
    }

    // Normal-trace rows per edge of the patch elements.
    let mut edges: Vec<usize> = elements.iter().flat_map(|&t| mesh.element_edges(t)).collect();
    edges.sort_unstable();
    edges.dedup();
    for e in edges {
        let owners: Vec<usize> = mesh.edge_elements(e).iter().flatten().filter_map(|t| elements.iter().position(|x| x == t)).collect();
        let [va, vb] = mesh.edge(e);
        let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
        let len = mesh.edge_length(e);
        let tag = mesh.edge_tag(e);
        let through_vertex = va == pp.space.vertex || vb == pp.space.vertex;
        if owners.len() == 1 && tag == Some(BoundaryTag::Dirichlet) && through_vertex {
            continue;
        }
        let datum = if owners.len() == 1 && tag == Some(BoundaryTag::Absorbing) && through_vertex {
            pp.b.iter().find(|bd| bd.edge == e)
        } else {
            None
        };
        for j in 0..=q {
            let mut row = vec![0.0; n];
            let mut rhs = C64::new(0.0, 0.0);
            for (s, w) in &gl {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let mu = s.powi(j as i32);
                for &k in &owners {
                    let nrm = outward_normal(mesh, elements[k], e);
                    let (v, _) = bases[k].eval(x);
                    for i in 0..nb {
                        row[k * nb + i] += w * len * mu * (v[i][0] * nrm[0] + v[i][1] * nrm[1]);
                    }
                }
                if let Some(bd) = datum {
                    let t = bd.element;
                    let tri = mesh.triangles[t];
                    let start = mesh.vertices[tri[(bd.local + 1) % 3]];
                    let sp = ((x[0] - start[0]).powi(2) + (x[1] - start[1]).powi(2)).sqrt() / len;
                    let bval: C64 = bd.coeffs.iter().enumerate().map(|(i, c)| c * shifted_legendre(i, sp)).sum();
                    rhs += bval * (w * len * mu);
                }
            }
            rows.push((row.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect(), rhs));
        }
    }

    let nc = rows.len();
    let mut kkt = DMatrix::<f64>::zeros(n + nc, n + nc);
    let mut rhs = DMatrix::<f64>::zeros(n + nc, 2);
    kkt.view_mut((0, 0), (n, n)).copy_from(&m);
    for i in 0..n {
        rhs[(i, 0)] = -f[(i, 0)];
        rhs[(i, 1)] = -f[(i, 1)];
    }
    for (c, (row, g)) in rows.iter().enumerate() {
        for &(i, v) in row {
            kkt[(n + c, i)] = v;
            kkt[(i, n + c)] = v;
        }
        rhs[(n + c, 0)] = g.re;
        rhs[(n + c, 1)] = g.im;
    }
    let svd = kkt.clone().svd(true, true);
    let tol = 1e-13 * svd.singular_values.max();
    let mut sol = svd.solve(&rhs, tol).expect("svd solve");
    for _ in 0..2 {
        let res = &rhs - &kkt * &sol;
        sol += svd.solve(&res, tol).expect("svd solve");
    }

    elements
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let map = mesh.element_map(t);
            rule.iter()
                .map(|(xhat, _)| {
                    let (v, _) = bases[k].eval(map.apply(*xhat));
                    let mut s = [C64::new(0.0, 0.0); 2];
                    for i in 0..nb {
                        let c = C64::new(sol[(k * nb + i, 0)], sol[(k * nb + i, 1)]);
                        s[0] += c * v[i][0];
                        s[1] += c * v[i][1];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn shifted_legendre(n: usize, t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn outward_normal(mesh: &Mesh, t: usize, e: usize) -> Point {
    let v = mesh.element_vertices(t);
    let [a, b] = mesh.edge(e);
    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
    let opposite = v.iter().find(|p| **p != pa && **p != pb).unwrap();
    let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
    let l = dx.hypot(dy);
    let mut n = [dy / l, -dx / l];
    if (opposite[0] - pa[0]) * n[0] + (opposite[1] - pa[1]) * n[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// The library patch flux at the points of `duffy(8)`.
pub fn library_flux(pp: &PatchProblem, r: &PatchReference) -> Vec<Vec<[C64; 2]>> {
    let flux: PatchFlux = solve_patch(pp, r).expect("patch solve");
    let field = assemble_global_flux(pp.mesh.clone(), r.q(), &[(pp.space.clone(), flux)]);
    let rule = duffy(8);
    pp.space
        .elements
        .iter()
        .map(|&t| rule.iter().map(|(x, _)| field.eval_element(t, *x).0).collect())
        .collect()
}

/// Relative max-norm distance between library and oracle fluxes.
pub fn patch_discrepancy(pp: &PatchProblem, r: &PatchReference) -> f64 {
    let a = library_flux(pp, r);
    let b = oracle_flux(pp, r);
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (ea, eb) in a.iter().zip(&b) {
        for (sa, sb) in ea.iter().zip(eb) {
            diff = diff.max((sa[0] - sb[0]).norm()).max((sa[1] - sb[1]).norm());
            scale = scale.max(sb[0].norm()).max(sb[1].norm());
        }
    }
    diff / scale
}

/// The 25 seeded patches of the oracle comparison: `(seed, p, interior, m)`.
pub fn oracle_cases() -> Vec<(u64, usize, bool, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..25)
        .map(|i| {
            let interior = i % 2 == 0;
            let m = if interior { rng.random_range(3..=6) } else { rng.random_range(2..=6) };
            (1000 + i as u64, 1 + (i / 2) % 2, interior, m)
        })
        .collect()
}

pub fn run_oracle_case(seed: u64, p: usize, interior: bool, m: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = PatchReference::new(p).unwrap();
    let patch = random_patch(&mut rng, interior, m);
    let pp = random_patch_problem(&mut rng, &patch, &r);
    patch_discrepancy(&pp, &r)
}

