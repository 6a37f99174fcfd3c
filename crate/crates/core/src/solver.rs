//! Assembly and solution of the discrete Helmholtz problem
//!
//! ```text
//! b(u, v) = -k^2 (u, v) - ik (u, v)_{Γ_A} + (∇u, ∇v),   v conjugated,
//! b(u_h, v_h) = (f, v_h) + (g, v_h)_{Γ_A}   for all v_h in V_h,
//! ```
//!
//! with homogeneous Dirichlet conditions on Γ_D eliminated from the system.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::{edge_rule, triangle_rule, EdgeRule, TriangleRule};
use crate::spaces::lagrange::Tabulation;
use crate::spaces::raviart_thomas::reference_edge;
use crate::spaces::LagrangeSpace;
use crate::{Point, C64};

/// Volume source `f(x)`.
pub type SourceFn = Arc<dyn Fn(Point) -> C64 + Send + Sync>;
/// Impedance datum `g(x, n)` with `n` the unit outward normal.
pub type ImpedanceFn = Arc<dyn Fn(Point, Point) -> C64 + Send + Sync>;

/// Largest supported polynomial degree of `V_h`.
pub const MAX_DEGREE: usize = 6;
/// Required relative residual of every linear solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// An exactly known field with its gradient.
pub trait AnalyticSolution: Send + Sync {
    fn value(&self, x: Point) -> C64;
    fn gradient(&self, x: Point) -> [C64; 2];

    /// Impedance datum `∇u·n - iku`.
    fn impedance(&self, x: Point, n: Point, k: f64) -> C64 {
        let g = self.gradient(x);
        g[0] * n[0] + g[1] * n[1] - C64::new(0.0, k) * self.value(x)
    }
}

/// Plane wave `ξ(x) = exp(ik d·x)` with `d = (cos ν, sin ν)`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave {
    pub k: f64,
    pub direction: Point,
}

impl PlaneWave {
    pub fn new(k: f64, nu: f64) -> Self {
        Self {
            k,
            direction: [nu.cos(), nu.sin()],
        }
    }

    /// Exact `‖ξ‖_{1,k}` on `(-1,1)^2` with Γ_A the whole boundary.
    pub fn unit_square_energy_norm(k: f64) -> f64 {
        (8.0 * k * k + 8.0 * k).sqrt()
    }
}

impl AnalyticSolution for PlaneWave {
    fn value(&self, x: Point) -> C64 {
        C64::from_polar(1.0, self.k * (self.direction[0] * x[0] + self.direction[1] * x[1]))
    }

    fn gradient(&self, x: Point) -> [C64; 2] {
        let v = self.value(x) * C64::new(0.0, self.k);
        [v * self.direction[0], v * self.direction[1]]
    }
}

/// Polynomial `Σ c x^a y^b`, used for manufactured solutions.
#[derive(Debug, Clone, Default)]
pub struct Polynomial {
    pub terms: Vec<(C64, u32, u32)>,
}

fn pw(x: f64, a: u32) -> f64 {
    x.powi(a as i32)
}

impl Polynomial {
    pub fn new(terms: Vec<(C64, u32, u32)>) -> Self {
        Self { terms }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.1 + t.2).max().unwrap_or(0)
    }

    pub fn laplacian(&self, x: Point) -> C64 {
        self.terms
            .iter()
            .map(|&(c, a, b)| {
                let dxx = if a >= 2 { (a * (a - 1)) as f64 * pw(x[0], a - 2) * pw(x[1], b) } else { 0.0 };
                let dyy = if b >= 2 { (b * (b - 1)) as f64 * pw(x[0], a) * pw(x[1], b - 2) } else { 0.0 };
                c * (dxx + dyy)
            })
            .sum()
    }
}

impl AnalyticSolution for Polynomial {
    fn value(&self, x: Point) -> C64 {
        self.terms.iter().map(|&(c, a, b)| c * pw(x[0], a) * pw(x[1], b)).sum()
    }

    fn gradient(&self, x: Point) -> [C64; 2] {
        let mut g = [C64::new(0.0, 0.0); 2];
        for &(c, a, b) in &self.terms {
            if a > 0 {
                g[0] += c * (a as f64 * pw(x[0], a - 1) * pw(x[1], b));
            }
            if b > 0 {
                g[1] += c * (b as f64 * pw(x[0], a) * pw(x[1], b - 1));
            }
        }
        g
    }
}

/// Problem data: mesh, wavenumber, degree of `V_h`, sources.
#[derive(Clone)]
pub struct HelmholtzProblem {
    pub mesh: Arc<Mesh>,
    pub k: f64,
    pub degree: usize,
    pub f: Option<SourceFn>,
    pub g: Option<ImpedanceFn>,
    /// Overrides the quadrature degree used for analytic data.
    pub quad_degree: Option<usize>,
}

impl std::fmt::Debug for HelmholtzProblem {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("HelmholtzProblem")
            .field("n_elements", &self.mesh.n_elements())
            .field("k", &self.k)
            .field("degree", &self.degree)
            .field("has_f", &self.f.is_some())
            .field("has_g", &self.g.is_some())
            .finish()
    }
}

impl HelmholtzProblem {
    pub fn new(mesh: Arc<Mesh>, k: f64, degree: usize) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidInput(format!("wavenumber must be positive, got {k}")));
        }
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::InvalidInput(format!("degree must lie in 1..={MAX_DEGREE}, got {degree}")));
        }
        Ok(Self {
            mesh,
            k,
            degree,
            f: None,
            g: None,
            quad_degree: None,
        })
    }

    pub fn with_source(mut self, f: SourceFn) -> Self {
        self.f = Some(f);
        self
    }

    pub fn with_impedance(mut self, g: ImpedanceFn) -> Self {
        self.g = Some(g);
        self
    }

    /// `f = 0` and `g` the impedance trace of `u`; `u` solves the problem when it
    /// is a Helmholtz solution vanishing on Γ_D (plane wave, scattering data).
    pub fn with_incident<U: AnalyticSolution + 'static>(self, u: Arc<U>) -> Self {
        let k = self.k;
        self.with_impedance(Arc::new(move |x, n| u.impedance(x, n, k)))
    }

    /// Data `f = -k^2 u - Δu`, `g = ∇u·n - iku` for a polynomial `u`.
    pub fn manufactured(mesh: Arc<Mesh>, k: f64, degree: usize, u: Polynomial) -> Result<Self> {
        let u = Arc::new(u);
        let uf = u.clone();
        Ok(Self::new(mesh, k, degree)?
            .with_source(Arc::new(move |x| -k * k * uf.value(x) - uf.laplacian(x)))
            .with_incident(u))
    }

    /// Quadrature degree for integrals involving analytic data.
    pub fn data_quad_degree(&self) -> usize {
        self.quad_degree.unwrap_or_else(|| elevated_degree(self.degree))
    }

    /// Whether `k^2` is close to a Dirichlet eigenvalue on a closed rectangle
    /// is the caller's concern; here only Γ_A emptiness is reported.
    pub fn has_absorbing_boundary(&self) -> bool {
        self.mesh.tagged_edges(BoundaryTag::Absorbing).next().is_some()
    }
}

/// Quadrature degree for oscillatory analytic integrands.
pub fn elevated_degree(p: usize) -> usize {
    (2 * p + 2).max(12)
}

/// A Γ_A edge seen from its element.
#[derive(Debug, Clone, Copy)]
pub struct AbsorbingEdge {
    pub edge: usize,
    pub element: usize,
    /// Local index of the edge in `element` (opposite vertex).
    pub local: usize,
    pub length: f64,
    pub normal: Point,
}

impl AbsorbingEdge {
    /// Reference coordinates of the point at parameter `t` (counterclockwise).
    pub fn reference_point(&self, t: f64) -> Point {
        let (a, b) = reference_edge(self.local);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

/// All Γ_A edges with their owning element and outward unit normal.
pub fn absorbing_edges(mesh: &Mesh) -> Vec<AbsorbingEdge> {
    mesh.tagged_edges(BoundaryTag::Absorbing)
        .map(|e| {
            let t = mesh.edge_elements(e)[0].expect("boundary edge has an element");
            let local = mesh.element_edges(t).iter().position(|&x| x == e).unwrap();
            let tri = mesh.triangles[t];
            let (a, b) = (mesh.vertices[tri[(local + 1) % 3]], mesh.vertices[tri[(local + 2) % 3]]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let length = dx.hypot(dy);
            AbsorbingEdge {
                edge: e,
                element: t,
                local,
                length,
                normal: [dy / length, -dx / length],
            }
        })
        .collect()
}

/// Coefficients of a `V_h` function in the global Lagrange numbering.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub space: Arc<LagrangeSpace>,
    pub coeffs: Vec<C64>,
}

impl DiscreteField {
    pub fn zero(space: Arc<LagrangeSpace>) -> Self {
        let n = space.n_dofs();
        Self {
            space,
            coeffs: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// Interpolant of `u` at the Lagrange nodes (Dirichlet nodes set to zero).
    pub fn interpolate(space: Arc<LagrangeSpace>, u: &dyn AnalyticSolution) -> Self {
        let coeffs = space
            .dof_coords
            .iter()
            .zip(&space.dirichlet)
            .map(|(&x, &d)| if d { C64::new(0.0, 0.0) } else { u.value(x) })
            .collect();
        Self { space, coeffs }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.space.mesh
    }

    pub fn element_coeffs(&self, t: usize) -> Vec<C64> {
        self.space.element_dofs[t].iter().map(|&d| self.coeffs[d]).collect()
    }

    /// Value and physical gradient at reference point `xhat` of element `t`.
    pub fn eval_element(&self, t: usize, xhat: Point) -> (C64, [C64; 2]) {
        let (v, g) = self.space.basis.eval(xhat);
        let map = self.space.mesh.element_map(t);
        combine(&self.element_coeffs(t), &v, &g, |r| map.grad(r))
    }

    /// Values and physical gradients at every point of a tabulated rule.
    pub fn eval_tabulated(&self, t: usize, tab: &Tabulation, n_points: usize) -> Vec<(C64, [C64; 2])> {
        let c = self.element_coeffs(t);
        let map = self.space.mesh.element_map(t);
        (0..n_points)
            .map(|q| combine(&c, tab.values(q), tab.grads(q), |r| map.grad(r)))
            .collect()
    }

    pub fn eval(&self, x: Point) -> Result<(C64, [C64; 2])> {
        let (t, xhat) = self.space.mesh.locate(x).ok_or(Error::PointOutsideMesh { x: x[0], y: x[1] })?;
        Ok(self.eval_element(t, xhat))
    }
}

fn combine(c: &[C64], v: &[f64], g: &[[f64; 2]], push: impl Fn([f64; 2]) -> [f64; 2]) -> (C64, [C64; 2]) {
    let mut val = C64::new(0.0, 0.0);
    let mut grad = [C64::new(0.0, 0.0); 2];
    for i in 0..c.len() {
        val += c[i] * v[i];
        let gi = push(g[i]);
        grad[0] += c[i] * gi[0];
        grad[1] += c[i] * gi[1];
    }
    (val, grad)
}

/// Sparse system over the free (non-Dirichlet) dofs.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseColMat<usize, C64>,
    pub rhs: Vec<C64>,
    /// Whether the matrix equals its transpose (no conjugation).
    pub symmetric: bool,
}

impl LinearSystem {
    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        sparse_apply(&self.matrix, x)
    }
}

fn sparse_apply(a: &SparseColMat<usize, C64>, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    let sym = a.symbolic();
    let (cp, ri, val) = (sym.col_ptr(), sym.row_idx(), a.val());
    for (j, xj) in x.iter().enumerate() {
        for idx in cp[j]..cp[j + 1] {
            y[ri[idx]] += val[idx] * xj;
        }
    }
    y
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Element stiffness `(∇φ_j, ∇φ_i)_K` and mass `(φ_j, φ_i)_K`, row-major.
fn element_matrices(mesh: &Mesh, t: usize, tab: &Tabulation, rule: &TriangleRule) -> (Vec<f64>, Vec<f64>) {
    let n = tab.dim;
    let map = mesh.element_map(t);
    let jac = map.det.abs();
    let mut stiff = vec![0.0; n * n];
    let mut mass = vec![0.0; n * n];
    let mut pg = vec![[0.0; 2]; n];
    for (q, &w) in rule.weights.iter().enumerate() {
        let wq = w * jac;
        let v = tab.values(q);
        for (i, g) in tab.grads(q).iter().enumerate() {
            pg[i] = map.grad(*g);
        }
        for i in 0..n {
            for j in 0..n {
                stiff[i * n + j] += wq * (pg[i][0] * pg[j][0] + pg[i][1] * pg[j][1]);
                mass[i * n + j] += wq * v[i] * v[j];
            }
        }
    }
    (stiff, mass)
}

/// Edge mass `(φ_j, φ_i)_e` for the basis of the owning element.
fn edge_mass(space: &LagrangeSpace, edge: &AbsorbingEdge, rule: &EdgeRule) -> Vec<f64> {
    let n = space.basis.dim();
    let mut m = vec![0.0; n * n];
    for (t, w) in rule.iter() {
        let (v, _) = space.basis.eval(edge.reference_point(t));
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] += w * edge.length * v[i] * v[j];
            }
        }
    }
    m
}

/// Coefficients `(a, b, c)` of the form `a (∇u,∇v) + b (u,v) + c (u,v)_{Γ_A}`.
#[derive(Debug, Clone, Copy)]
struct FormCoefficients {
    stiffness: C64,
    mass: C64,
    boundary: C64,
}

fn assemble_matrix(space: &LagrangeSpace, form: FormCoefficients) -> Result<SparseColMat<usize, C64>> {
    let mesh = &*space.mesh;
    let p = space.degree();
    let rule = triangle_rule(2 * p)?;
    let erule = edge_rule(2 * p)?;
    let tab = space.basis.tabulate(&rule);
    let n = space.basis.dim();

    let locals: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| element_matrices(mesh, t, &tab, &rule))
        .collect();

    let mut triplets = Vec::with_capacity(mesh.n_elements() * n * n);
    let mut push = |t: usize, i: usize, j: usize, v: C64| {
        let dofs = &space.element_dofs[t];
        if let (Some(r), Some(c)) = (space.free_index[dofs[i]], space.free_index[dofs[j]]) {
            triplets.push(Triplet::new(r, c, v));
        }
    };
    for (t, (stiff, mass)) in locals.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                push(t, i, j, form.stiffness * stiff[i * n + j] + form.mass * mass[i * n + j]);
            }
        }
    }
    if form.boundary != C64::new(0.0, 0.0) {
        for edge in absorbing_edges(mesh) {
            let m = edge_mass(space, &edge, &erule);
            for i in 0..n {
                for j in 0..n {
                    if m[i * n + j] != 0.0 {
                        push(edge.element, i, j, form.boundary * m[i * n + j]);
                    }
                }
            }
        }
    }
    SparseColMat::try_new_from_triplets(space.n_free, space.n_free, &triplets)
        .map_err(|e| Error::InvalidInput(format!("sparse assembly failed: {e:?}")))
}

/// Load vector `(f, φ_i) + (g, φ_i)_{Γ_A}` over the free dofs.
fn assemble_load(
    space: &LagrangeSpace,
    f: Option<&(dyn Fn(Point) -> C64 + Send + Sync)>,
    g: Option<&(dyn Fn(Point, Point) -> C64 + Send + Sync)>,
    degree: usize,
) -> Result<Vec<C64>> {
    let mesh = &*space.mesh;
    let n = space.basis.dim();
    let mut rhs = vec![C64::new(0.0, 0.0); space.n_free];
    if let Some(f) = f {
        let rule = triangle_rule(degree)?;
        let tab = space.basis.tabulate(&rule);
        let locals: Vec<Vec<C64>> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|t| {
                let map = mesh.element_map(t);
                let mut b = vec![C64::new(0.0, 0.0); n];
                for (q, &w) in rule.weights.iter().enumerate() {
                    let fx = f(map.apply(rule.xy(q))) * (w * map.det.abs());
                    for (bi, vi) in b.iter_mut().zip(tab.values(q)) {
                        *bi += fx * vi;
                    }
                }
                b
            })
            .collect();
        for (t, b) in locals.iter().enumerate() {
            for (i, bi) in b.iter().enumerate() {
                if let Some(r) = space.free_index[space.element_dofs[t][i]] {
                    rhs[r] += bi;
                }
            }
        }
    }
    if let Some(g) = g {
        let erule = edge_rule(degree)?;
        for edge in absorbing_edges(mesh) {
            let map = mesh.element_map(edge.element);
            for (s, w) in erule.iter() {
                let xhat = edge.reference_point(s);
                let gx = g(map.apply(xhat), edge.normal) * (w * edge.length);
                let (v, _) = space.basis.eval(xhat);
                for (i, vi) in v.iter().enumerate() {
                    if let Some(r) = space.free_index[space.element_dofs[edge.element][i]] {
                        rhs[r] += gx * vi;
                    }
                }
            }
        }
    }
    Ok(rhs)
}

/// Assembles `b(φ_j, φ_i)` and the load vector on `space`.
pub fn assemble_on(problem: &HelmholtzProblem, space: &LagrangeSpace) -> Result<LinearSystem> {
    let k = problem.k;
    let matrix = assemble_matrix(
        space,
        FormCoefficients {
            stiffness: C64::new(1.0, 0.0),
            mass: C64::new(-k * k, 0.0),
            boundary: C64::new(0.0, -k),
        },
    )?;
    let rhs = assemble_load(space, problem.f.as_deref(), problem.g.as_deref(), problem.data_quad_degree())?;
    Ok(LinearSystem {
        matrix,
        rhs,
        symmetric: true,
    })
}

pub fn assemble(problem: &HelmholtzProblem) -> Result<LinearSystem> {
    assemble_on(problem, &LagrangeSpace::new(problem.mesh.clone(), problem.degree))
}

/// A factorized system, reusable for several right-hand sides.
pub struct Factorization<'a> {
    system: &'a LinearSystem,
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
}

impl<'a> Factorization<'a> {
    pub fn new(system: &'a LinearSystem) -> Result<Self> {
        let lu = system.matrix.sp_lu().map_err(|e| Error::SingularSystem {
            reason: format!("sparse LU failed: {e:?}"),
            residual: f64::INFINITY,
            condition: f64::INFINITY,
        })?;
        Ok(Self { system, lu })
    }

    fn raw_solve(&self, rhs: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let n = self.system.n();
        let b = Mat::<C64>::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect()
    }

    /// Solves for every column of `rhs`, with one step of iterative refinement.
    pub fn solve(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let mut xs = self.raw_solve(rhs);
        let residuals: Vec<Vec<C64>> = xs
            .iter()
            .zip(rhs)
            .map(|(x, b)| b.iter().zip(self.system.apply(x)).map(|(bi, ai)| bi - ai).collect())
            .collect();
        let corrections = self.raw_solve(&residuals);
        for (x, dx) in xs.iter_mut().zip(corrections) {
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        for (x, b) in xs.iter().zip(rhs) {
            let bn = norm(b);
            let ax = self.system.apply(x);
            let r = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
            let rel = if bn > 0.0 { r / bn } else { r };
            if !(rel <= RESIDUAL_TOL) {
                return Err(Error::SingularSystem {
                    reason: "residual above tolerance".into(),
                    residual: rel,
                    condition: condition_estimate(&self.system.matrix, x, b),
                });
            }
        }
        Ok(xs)
    }
}

/// Lower bound `‖A‖_1 ‖x‖_1 / ‖b‖_1` on the 1-norm condition number.
fn condition_estimate(a: &SparseColMat<usize, C64>, x: &[C64], b: &[C64]) -> f64 {
    let sym = a.symbolic();
    let cp = sym.col_ptr();
    let a1 = (0..a.ncols())
        .map(|j| a.val()[cp[j]..cp[j + 1]].iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let x1: f64 = x.iter().map(|z| z.norm()).sum();
    let b1: f64 = b.iter().map(|z| z.norm()).sum();
    if b1 > 0.0 {
        a1 * x1 / b1
    } else {
        f64::INFINITY
    }
}

pub fn solve_linear(system: &LinearSystem) -> Result<Vec<C64>> {
    if system.n() == 0 {
        return Ok(Vec::new());
    }
    let mut x = Factorization::new(system)?.solve(std::slice::from_ref(&system.rhs))?;
    Ok(x.pop().unwrap())
}

/// Scatters free-dof values into a full coefficient vector.
fn expand(space: &LagrangeSpace, free: &[C64]) -> Vec<C64> {
    space
        .free_index
        .iter()
        .map(|fi| fi.map_or(C64::new(0.0, 0.0), |i| free[i]))
        .collect()
}

pub fn solve_on(problem: &HelmholtzProblem, space: Arc<LagrangeSpace>) -> Result<DiscreteField> {
    let system = assemble_on(problem, &space)?;
    let x = solve_linear(&system)?;
    let coeffs = expand(&space, &x);
    Ok(DiscreteField { space, coeffs })
}

pub fn solve_helmholtz(problem: &HelmholtzProblem) -> Result<DiscreteField> {
    solve_on(problem, Arc::new(LagrangeSpace::new(problem.mesh.clone(), problem.degree)))
}

/// Residual `⟨R(u_h), φ_i⟩ = (f, φ_i) + (g, φ_i)_{Γ_A} - b(u_h, φ_i)` over the free dofs.
pub fn galerkin_residual(problem: &HelmholtzProblem, u_h: &DiscreteField) -> Result<(Vec<C64>, f64)> {
    let system = assemble_on(problem, &u_h.space)?;
    let free: Vec<C64> = u_h
        .coeffs
        .iter()
        .zip(&u_h.space.free_index)
        .filter_map(|(c, fi)| fi.map(|_| *c))
        .collect();
    let au = system.apply(&free);
    let r = system.rhs.iter().zip(au).map(|(b, a)| b - a).collect();
    Ok((r, norm(&system.rhs)))
}

/// `b(v, v)` for a discrete field, with `v` conjugated in the test slot.
pub fn sesquilinear_diagonal(problem: &HelmholtzProblem, v: &DiscreteField) -> Result<C64> {
    let system = assemble_on(problem, &v.space)?;
    let free: Vec<C64> = v
        .coeffs
        .iter()
        .zip(&v.space.free_index)
        .filter_map(|(c, fi)| fi.map(|_| *c))
        .collect();
    let av = system.apply(&free);
    Ok(free.iter().zip(av).map(|(vi, a)| vi.conj() * a).sum())
}

/// Energy projection `P_h u`: `k^2 (P_h u, v) + k (P_h u, v)_{Γ_A} + (∇P_h u, ∇v)`
/// equals the same form with `u` for all `v` in `V_h`.
pub fn best_approximation(u: &dyn AnalyticSolution, space: Arc<LagrangeSpace>, k: f64) -> Result<DiscreteField> {
    let matrix = assemble_matrix(
        &space,
        FormCoefficients {
            stiffness: C64::new(1.0, 0.0),
            mass: C64::new(k * k, 0.0),
            boundary: C64::new(k, 0.0),
        },
    )?;
    let mesh = &*space.mesh;
    let degree = elevated_degree(space.degree());
    let n = space.basis.dim();
    let rule = triangle_rule(degree)?;
    let tab = space.basis.tabulate(&rule);
    let locals: Vec<Vec<C64>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| {
            let map = mesh.element_map(t);
            let mut b = vec![C64::new(0.0, 0.0); n];
            for (q, &w) in rule.weights.iter().enumerate() {
                let x = map.apply(rule.xy(q));
                let wq = w * map.det.abs();
                let (uv, ug) = (u.value(x), u.gradient(x));
                for i in 0..n {
                    let gi = map.grad(tab.grads(q)[i]);
                    b[i] += (uv * (k * k * tab.values(q)[i]) + ug[0] * gi[0] + ug[1] * gi[1]) * wq;
                }
            }
            b
        })
        .collect();
    let mut rhs = vec![C64::new(0.0, 0.0); space.n_free];
    for (t, b) in locals.iter().enumerate() {
        for (i, bi) in b.iter().enumerate() {
            if let Some(r) = space.free_index[space.element_dofs[t][i]] {
                rhs[r] += bi;
            }
        }
    }
    let erule = edge_rule(degree)?;
    for edge in absorbing_edges(mesh) {
        let map = mesh.element_map(edge.element);
        for (s, w) in erule.iter() {
            let xhat = edge.reference_point(s);
            let ux = u.value(map.apply(xhat)) * (k * w * edge.length);
            let (v, _) = space.basis.eval(xhat);
            for (i, vi) in v.iter().enumerate() {
                if let Some(r) = space.free_index[space.element_dofs[edge.element][i]] {
                    rhs[r] += ux * vi;
                }
            }
        }
    }
    let system = LinearSystem {
        matrix,
        rhs,
        symmetric: true,
    };
    let x = solve_linear(&system)?;
    let coeffs = expand(&space, &x);
    Ok(DiscreteField { space, coeffs })
}

/// Default incidence angle of the plane-wave experiments.
pub const DEFAULT_NU: f64 = PI / 3.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian_mesh;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn dense(sys: &LinearSystem) -> Vec<Vec<C64>> {
        let n = sys.n();
        (0..n)
            .map(|j| {
                let mut e = vec![c(0.0, 0.0); n];
                e[j] = c(1.0, 0.0);
                sys.apply(&e)
            })
            .collect()
    }

    #[test]
    fn p1_single_triangle_matrices() {
        // legs 1: stiffness [[1,-.5,-.5],[-.5,.5,0],[-.5,0,.5]], mass area/12 (2,1,1)
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                crate::mesh::BoundaryEdge { vertices: [0, 1], tag: BoundaryTag::Absorbing },
                crate::mesh::BoundaryEdge { vertices: [1, 2], tag: BoundaryTag::Absorbing },
                crate::mesh::BoundaryEdge { vertices: [2, 0], tag: BoundaryTag::Absorbing },
            ],
            None,
        )
        .unwrap();
        let space = LagrangeSpace::new(Arc::new(mesh), 1);
        let stiff = assemble_matrix(
            &space,
            FormCoefficients { stiffness: c(1.0, 0.0), mass: c(0.0, 0.0), boundary: c(0.0, 0.0) },
        )
        .unwrap();
        let mass = assemble_matrix(
            &space,
            FormCoefficients { stiffness: c(0.0, 0.0), mass: c(1.0, 0.0), boundary: c(0.0, 0.0) },
        )
        .unwrap();
        let ks = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let wrap = |m| LinearSystem { matrix: m, rhs: vec![c(0.0, 0.0); 3], symmetric: true };
        let (ds, dm) = (dense(&wrap(stiff)), dense(&wrap(mass)));
        for i in 0..3 {
            for j in 0..3 {
                assert!((ds[j][i] - ks[i][j]).norm() < 1e-14);
                let m = if i == j { 2.0 } else { 1.0 } * 0.5 / 12.0;
                assert!((dm[j][i] - m).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn matrix_is_complex_symmetric_and_boundary_local() {
        let mesh = Arc::new(build_cartesian_mesh(3, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let problem = HelmholtzProblem::new(mesh.clone(), 3.0, 2).unwrap();
        let space = LagrangeSpace::new(mesh, 2);
        let sys = assemble_on(&problem, &space).unwrap();
        let a = dense(&sys);
        for i in 0..sys.n() {
            for j in 0..sys.n() {
                assert!((a[i][j] - a[j][i]).norm() < 1e-13);
                if a[j][i].im != 0.0 {
                    let on_bnd = |d: usize| {
                        let x = space.dof_coords[space.free_index.iter().position(|f| *f == Some(d)).unwrap()];
                        (x[0].abs() - 1.0).abs() < 1e-12 || (x[1].abs() - 1.0).abs() < 1e-12
                    };
                    assert!(on_bnd(i) && on_bnd(j));
                }
            }
        }
        assert!(sys.rhs.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn two_by_two_and_identity_solves() {
        let t = [
            Triplet::new(0, 0, c(1.0, 1.0)),
            Triplet::new(0, 1, c(2.0, 0.0)),
            Triplet::new(1, 0, c(0.0, -1.0)),
            Triplet::new(1, 1, c(3.0, 0.0)),
        ];
        let m = SparseColMat::try_new_from_triplets(2, 2, &t).unwrap();
        // A x = b with x = (1 - i, 2)
        let x = [c(1.0, -1.0), c(2.0, 0.0)];
        let sys0 = LinearSystem { matrix: m, rhs: vec![c(0.0, 0.0); 2], symmetric: false };
        let b = sys0.apply(&x);
        let sys = LinearSystem { rhs: b, ..sys0 };
        let y = solve_linear(&sys).unwrap();
        for i in 0..2 {
            assert!((y[i] - x[i]).norm() < 1e-14);
        }

        let id: Vec<_> = (0..4).map(|i| Triplet::new(i, i, c(1.0, 0.0))).collect();
        let b = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(7.0, -1.0)];
        let sys = LinearSystem {
            matrix: SparseColMat::try_new_from_triplets(4, 4, &id).unwrap(),
            rhs: b.clone(),
            symmetric: true,
        };
        assert_eq!(solve_linear(&sys).unwrap(), b);
    }

    #[test]
    fn singular_system_is_reported() {
        let t = [Triplet::new(0, 0, c(1.0, 0.0)), Triplet::new(1, 0, c(1.0, 0.0))];
        let sys = LinearSystem {
            matrix: SparseColMat::try_new_from_triplets(2, 2, &t).unwrap(),
            rhs: vec![c(1.0, 0.0), c(0.0, 1.0)],
            symmetric: false,
        };
        assert!(matches!(solve_linear(&sys), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn plane_wave_values() {
        let xi = PlaneWave::new(PI, PI / 3.0);
        assert!((xi.value([0.0, 0.0]) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((xi.value([1.0, 0.0]) - c(0.0, 1.0)).norm() < 1e-15);
        let g = xi.gradient([0.3, -0.7]);
        assert!(((g[0].norm_sqr() + g[1].norm_sqr()).sqrt() - PI).abs() < 1e-13);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = Arc::new(build_cartesian_mesh(4, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let u = solve_helmholtz(&HelmholtzProblem::new(mesh, 2.0, 2).unwrap()).unwrap();
        assert!(u.coeffs.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn manufactured_polynomial_is_reproduced() {
        let mesh = Arc::new(build_cartesian_mesh(3, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let u = Polynomial::new(vec![(c(1.0, 0.0), 2, 1)]);
        for p in 3..=4 {
            let problem = HelmholtzProblem::manufactured(mesh.clone(), 2.5, p, u.clone()).unwrap();
            let uh = solve_helmholtz(&problem).unwrap();
            let interp = DiscreteField::interpolate(uh.space.clone(), &u);
            let err = uh.coeffs.iter().zip(&interp.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "p={p}: {err}");
        }
    }

    #[test]
    fn galerkin_orthogonality_of_plane_wave_solution() {
        let mesh = Arc::new(build_cartesian_mesh(8, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let problem = HelmholtzProblem::new(mesh, PI, 1).unwrap().with_incident(Arc::new(PlaneWave::new(PI, DEFAULT_NU)));
        let uh = solve_helmholtz(&problem).unwrap();
        let (r, bn) = galerkin_residual(&problem, &uh).unwrap();
        assert!(r.iter().all(|z| z.norm() <= 1e-9 * bn));
    }

    #[test]
    fn real_and_imaginary_parts_of_b() {
        let mesh = Arc::new(build_cartesian_mesh(4, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let k = 2.7;
        let problem = HelmholtzProblem::new(mesh.clone(), k, 2).unwrap();
        let space = Arc::new(LagrangeSpace::new(mesh.clone(), 2));
        let coeffs: Vec<C64> = (0..space.n_dofs()).map(|i| c((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos())).collect();
        let v = DiscreteField { space: space.clone(), coeffs };
        let bvv = sesquilinear_diagonal(&problem, &v).unwrap();

        let rule = triangle_rule(6).unwrap();
        let tab = space.basis.tabulate(&rule);
        let (mut l2, mut h1) = (0.0, 0.0);
        for t in 0..mesh.n_elements() {
            let det = mesh.element_map(t).det.abs();
            for (q, (val, g)) in v.eval_tabulated(t, &tab, rule.len()).into_iter().enumerate() {
                l2 += rule.weights[q] * det * val.norm_sqr();
                h1 += rule.weights[q] * det * (g[0].norm_sqr() + g[1].norm_sqr());
            }
        }
        let erule = edge_rule(6).unwrap();
        let mut gam = 0.0;
        for e in absorbing_edges(&mesh) {
            for (s, w) in erule.iter() {
                gam += w * e.length * v.eval_element(e.element, e.reference_point(s)).0.norm_sqr();
            }
        }
        assert!((-bvv.im - k * gam).abs() < 1e-12 * k * gam);
        let re = h1 - k * k * l2;
        assert!((bvv.re - re).abs() < 1e-12 * (h1 + k * k * l2));
    }
}
