//! Computable constants of the guaranteed upper bound.
//!
//! ```text
//! θ̃₁(t)    = sqrt(s + s² + t²) - √2,   s = 1/2 + sqrt(1/4 + t²)
//! θ̃₂(t, t̃) = sqrt(s² + t² + t̃²) - 1
//! c_up     = √2 + θ̃₁(c_ba)   (or min with 1 + θ̃₂ when t̃ is known)
//! ```
//!
//! `c_ba` bounds the approximation factor σ_ba in one of four settings:
//! scattering by a star-shaped obstacle (1a), free space with a fine mesh
//! (1b), and a closed cavity on a coarse (2a) or fine (2b) mesh.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::Point;

/// Interpolation constant of P1 on right triangles, divided by `√2`.
pub const DEFAULT_C_I: f64 = 0.493 / SQRT_2;

/// Dimension of the problem.
const D: f64 = 2.0;

/// The four settings with a computable bound on σ_ba.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundCase {
    /// Non-trapping obstacle, any mesh.
    Scattering1a,
    /// Γ_D empty, fine mesh.
    FreeSpace1b,
    /// Γ_A empty (cavity), any mesh.
    Interior2a,
    /// Γ_A empty, convex cavity, fine mesh.
    InteriorConvex2b,
}

#[derive(Debug, Clone)]
pub struct BoundContext {
    pub case: BoundCase,
    pub k: f64,
    /// Diameter of the domain.
    pub h_omega: f64,
    /// Mesh size.
    pub h: f64,
    pub p: usize,
    pub c_stab: f64,
    pub c_i: f64,
    /// Exponent of `p` in the interpolation estimate (0 unless `c_i` is p-explicit).
    pub beta: f64,
    pub star_point: Point,
    /// Dirichlet Laplace eigenvalues; must include the neighbours of `k^2`.
    pub eigenvalues: Vec<f64>,
}

impl BoundContext {
    /// Setting of the plane-wave experiment on `(-1,1)^2`.
    pub fn free_space_square(k: f64, h: f64, p: usize) -> Self {
        Self {
            case: BoundCase::FreeSpace1b,
            k,
            h_omega: 2.0 * SQRT_2,
            h,
            p,
            c_stab: square_c_stab(),
            c_i: DEFAULT_C_I,
            beta: 0.0,
            star_point: [0.0, 0.0],
            eigenvalues: Vec::new(),
        }
    }

    /// Scattering setting with `C_stab` computed from the mesh boundary.
    pub fn scattering(mesh: &Mesh, k: f64, x0: Point, p: usize) -> Result<Self> {
        Ok(Self {
            case: BoundCase::Scattering1a,
            k,
            h_omega: mesh.domain_diameter(),
            h: mesh.h_max(),
            p,
            c_stab: c_stab(mesh, x0)?,
            c_i: DEFAULT_C_I,
            beta: 0.0,
            star_point: x0,
            eigenvalues: Vec::new(),
        })
    }

    /// Closed rectangular cavity `a × b`, coarse (2a) or fine (2b).
    pub fn rectangle(case: BoundCase, a: f64, b: f64, k: f64, h: f64, p: usize) -> Self {
        Self {
            case,
            k,
            h_omega: a.hypot(b),
            h,
            p,
            c_stab: 0.0,
            c_i: DEFAULT_C_I,
            beta: 0.0,
            star_point: [a / 2.0, b / 2.0],
            eigenvalues: rectangle_eigenvalues_up_to(a, b, k * k),
        }
    }

    pub fn c_ba(&self) -> Result<f64> {
        sigma_ba_bound(self)
    }

    pub fn c_up(&self) -> Result<f64> {
        c_up_from(self.c_ba()?, None)
    }
}

/// `C_stab` of the square `(-1,1)^2` with the star point at its centre.
pub fn square_c_stab() -> f64 {
    (3.0 + SQRT_2) / (2.0 * SQRT_2)
}

/// `C_stab = (1/h_Ω) [sup_Ω |x - x0| + sup_{Γ_A} (2 (x-x0)·n + |(x-x0)×n|^2 / ((x-x0)·n))]`.
///
/// On a straight edge `(x-x0)·n` is constant and the cross term is a convex
/// quadratic in the tangential coordinate, so edge endpoints give the suprema.
pub fn c_stab(mesh: &Mesh, x0: Point) -> Result<f64> {
    let h_omega = mesh.domain_diameter();
    let radius = mesh
        .vertices
        .iter()
        .map(|v| (v[0] - x0[0]).hypot(v[1] - x0[1]))
        .fold(0.0, f64::max);
    let tol = 1e-12 * h_omega;
    let mut sup_a = f64::NEG_INFINITY;
    for e in 0..mesh.n_edges() {
        let Some(tag) = mesh.edge_tag(e) else { continue };
        let [i, j] = mesh.edge(e);
        let (a, b) = (mesh.vertices[i], mesh.vertices[j]);
        let n = outward_normal(mesh, e);
        let dn = (a[0] - x0[0]) * n[0] + (a[1] - x0[1]) * n[1];
        let inadmissible = |reason: &str| Error::InadmissibleStarPoint {
            x: x0[0],
            y: x0[1],
            reason: format!("{reason} on edge ({i}, {j})"),
        };
        match tag {
            BoundaryTag::Dirichlet if dn > tol => return Err(inadmissible("(x - x0)·n > 0 on Γ_D")),
            BoundaryTag::Absorbing if dn <= tol => return Err(inadmissible("(x - x0)·n <= 0 on Γ_A")),
            BoundaryTag::Absorbing => {
                for x in [a, b] {
                    let r = [x[0] - x0[0], x[1] - x0[1]];
                    let cross = r[0] * n[1] - r[1] * n[0];
                    sup_a = sup_a.max(2.0 * dn + cross * cross / dn);
                }
            }
            BoundaryTag::Dirichlet => {}
        }
    }
    if sup_a == f64::NEG_INFINITY {
        return Err(Error::InvalidInput("C_stab needs a nonempty Γ_A".into()));
    }
    Ok((radius + sup_a) / h_omega)
}

fn outward_normal(mesh: &Mesh, e: usize) -> Point {
    let t = mesh.edge_elements(e)[0].expect("boundary edge has an element");
    let local = mesh.element_edges(t).iter().position(|&x| x == e).unwrap();
    let tri = mesh.triangles[t];
    let (a, b) = (mesh.vertices[tri[(local + 1) % 3]], mesh.vertices[tri[(local + 2) % 3]]);
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l = dx.hypot(dy);
    [dy / l, -dx / l]
}

/// Bound on σ_ba for the context's case.
pub fn sigma_ba_bound(ctx: &BoundContext) -> Result<f64> {
    let k = ctx.k;
    let p_factor = (ctx.p.max(1) as f64).powf(ctx.beta);
    match ctx.case {
        BoundCase::Scattering1a => {
            let a = (D - 1.0) + ctx.c_stab * k * ctx.h_omega;
            Ok((a + a * a).sqrt())
        }
        BoundCase::FreeSpace1b => Ok(ctx.c_i * (D + ctx.c_stab * k * ctx.h_omega) * k * ctx.h / p_factor),
        BoundCase::Interior2a => {
            check_resonance(ctx)?;
            Ok(k * ctx
                .eigenvalues
                .iter()
                .map(|&l| l.sqrt() / (l - k * k).abs())
                .fold(0.0, f64::max))
        }
        BoundCase::InteriorConvex2b => {
            check_resonance(ctx)?;
            let gap = ctx.eigenvalues.iter().map(|&l| (l - k * k).abs()).fold(f64::INFINITY, f64::min);
            Ok(ctx.c_i * (1.0 + k * k / gap) * k * ctx.h / p_factor)
        }
    }
}

fn check_resonance(ctx: &BoundContext) -> Result<()> {
    let k2 = ctx.k * ctx.k;
    if ctx.eigenvalues.is_empty() {
        return Err(Error::InvalidInput("interior case needs Dirichlet eigenvalues".into()));
    }
    match ctx.eigenvalues.iter().find(|&&l| (l - k2).abs() <= 1e-12 * l) {
        Some(&l) => Err(Error::Resonance { k2, eigenvalue: l }),
        None => Ok(()),
    }
}

/// The `count` smallest Dirichlet eigenvalues `π^2 (m^2/a^2 + n^2/b^2)` of an
/// `a × b` rectangle, with multiplicity.
///
/// The smallest `count` values have `m, n ≤ count`, since `λ_{m,1}` for
/// `m = 1..=count` already supplies `count` values below any `λ_{count+1,n}`.
pub fn rectangle_eigenvalues(a: f64, b: f64, count: usize) -> Vec<f64> {
    let mut l = Vec::with_capacity(count * count);
    for m in 1..=count {
        for n in 1..=count {
            l.push(PI * PI * ((m * m) as f64 / (a * a) + (n * n) as f64 / (b * b)));
        }
    }
    l.sort_by(f64::total_cmp);
    l.truncate(count);
    l
}

/// All eigenvalues up to and including the first one above `lambda`.
///
/// For σ_ba only the eigenvalues adjacent to `k^2` matter: `√λ/|λ - k^2|`
/// increases in λ below `k^2` and decreases above it.
pub fn rectangle_eigenvalues_up_to(a: f64, b: f64, lambda: f64) -> Vec<f64> {
    let mut count = 8;
    loop {
        let l = rectangle_eigenvalues(a, b, count);
        if let Some(i) = l.iter().position(|&x| x > lambda) {
            return l[..=i].to_vec();
        }
        count *= 2;
    }
}

fn check_nonneg(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("constant must be nonnegative, got {t}")))
    }
}

fn s_of(t: f64) -> f64 {
    0.5 + (0.25 + t * t).sqrt()
}

pub fn theta_tilde_1(t: f64) -> Result<f64> {
    check_nonneg(t)?;
    let s = s_of(t);
    Ok((s + s * s + t * t).sqrt() - SQRT_2)
}

pub fn theta_tilde_2(t: f64, tt: f64) -> Result<f64> {
    check_nonneg(t)?;
    check_nonneg(tt)?;
    let s = s_of(t);
    Ok((s * s + t * t + tt * tt).sqrt() - 1.0)
}

pub fn theta_1(t: f64) -> Result<f64> {
    check_nonneg(t)?;
    Ok((2.0 * t + 2.0 * t * t).sqrt())
}

pub fn theta_2(t: f64, tt: f64) -> Result<f64> {
    check_nonneg(t)?;
    check_nonneg(tt)?;
    Ok((t + 2.0 * t * t + tt * tt).sqrt())
}

/// `c_up = √2 + θ̃₁(t)`, or `min(√2 + θ̃₁(t), 1 + θ̃₂(t, t̃))` given `t̃`.
pub fn c_up_from(t: f64, tt: Option<f64>) -> Result<f64> {
    let c1 = SQRT_2 + theta_tilde_1(t)?;
    match tt {
        Some(tt) => Ok(c1.min(1.0 + theta_tilde_2(t, tt)?)),
        None => Ok(c1),
    }
}
