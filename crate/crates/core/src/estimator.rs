//! Estimators, data oscillation and energy norms.
//!
//! `η_K = ‖σ_h + ∇u_h‖_K`, and
//! `osc_K = h_K/π ‖f - π f‖_K + C_tr,K (h_K/π)^{1/2} ‖g - π̃ g‖_{∂K∩Γ_A}` with
//! `C_tr,K^2 = N_{K,Γ_A} (3/(4π)) (1 + 1/π) (h_K/ρ_K)^2`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::equilibration::{Equilibration, FluxField, ProjectedData};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::solver::{absorbing_edges, elevated_degree, AbsorbingEdge, AnalyticSolution, DiscreteField, HelmholtzProblem};
use crate::spaces::LagrangeBasis;
use crate::{Point, C64};

/// `η_K` on every element.
pub fn eta_local(flux: &FluxField, u_h: &DiscreteField) -> Result<Vec<f64>> {
    let mesh = &*flux.mesh;
    // RT_q contains degree q + 1 terms.
    let rule = triangle_rule(2 * flux.basis.degree + 2)?;
    let tab = u_h.space.basis.tabulate(&rule);
    Ok((0..mesh.n_elements())
        .into_par_iter()
        .map(|t| {
            let det = mesh.element_map(t).det;
            let vals = u_h.eval_tabulated(t, &tab, rule.len());
            let mut s = 0.0;
            for (q, (x, w)) in rule.iter().enumerate() {
                let (sig, _) = flux.eval_element(t, x);
                let g = vals[q].1;
                s += w * det * ((sig[0] + g[0]).norm_sqr() + (sig[1] + g[1]).norm_sqr());
            }
            s.sqrt()
        })
        .collect())
}

/// Trace constant `C_tr,K` for an element with `n_absorbing` edges on Γ_A.
pub fn trace_constant(n_absorbing: usize, h: f64, rho: f64) -> f64 {
    (n_absorbing as f64 * 3.0 / (4.0 * PI) * (1.0 + 1.0 / PI) * (h / rho).powi(2)).sqrt()
}

/// `osc_K` on every element.
pub fn osc_local(problem: &HelmholtzProblem, data: &ProjectedData) -> Result<Vec<f64>> {
    let mesh = &*problem.mesh;
    let p = data.degree;
    let basis = LagrangeBasis::new(p);
    let qdeg = problem.data_quad_degree().max(2 * p);
    let mut vol = vec![0.0; mesh.n_elements()];
    if let Some(f) = &problem.f {
        let rule = triangle_rule(qdeg)?;
        let tab = basis.tabulate(&rule);
        vol = (0..mesh.n_elements())
            .into_par_iter()
            .map(|t| {
                let map = mesh.element_map(t);
                let mut s = 0.0;
                for (q, &w) in rule.weights.iter().enumerate() {
                    let pf: C64 = data.f_proj[t].iter().zip(tab.values(q)).map(|(c, v)| c * v).sum();
                    s += w * map.det * (f(map.apply(rule.xy(q))) - pf).norm_sqr();
                }
                s.sqrt()
            })
            .collect();
    }
    let mut bnd = vec![0.0; mesh.n_elements()];
    let mut count = vec![0usize; mesh.n_elements()];
    let erule = edge_rule(qdeg)?;
    for edge in absorbing_edges(mesh) {
        count[edge.element] += 1;
        if let Some(g) = &problem.g {
            let map = mesh.element_map(edge.element);
            for (s, w) in erule.iter() {
                let gx = g(map.apply(edge.reference_point(s)), edge.normal);
                bnd[edge.element] += w * edge.length * (gx - data.g_at(edge.edge, s)).norm_sqr();
            }
        }
    }
    (0..mesh.n_elements())
        .map(|t| {
            let geo = mesh.element_geometry(t)?;
            let h = geo.h;
            let mut osc = h / PI * vol[t];
            if count[t] > 0 {
                osc += trace_constant(count[t], h, geo.rho) * (h / PI).sqrt() * bnd[t].sqrt();
            }
            Ok(osc)
        })
        .collect()
}

/// A field evaluable on every element of a mesh.
pub enum Field<'a> {
    Analytic(&'a dyn AnalyticSolution),
    Discrete(&'a DiscreteField),
    Zero,
}

impl Field<'_> {
    fn eval(&self, mesh: &Mesh, t: usize, xhat: Point) -> (C64, [C64; 2]) {
        match self {
            Field::Analytic(u) => {
                let x = mesh.element_map(t).apply(xhat);
                (u.value(x), u.gradient(x))
            }
            Field::Discrete(u) => u.eval_element(t, xhat),
            Field::Zero => (C64::new(0.0, 0.0), [C64::new(0.0, 0.0); 2]),
        }
    }

    /// Polynomial degree, if discrete.
    fn degree(&self) -> Option<usize> {
        match self {
            Field::Discrete(u) => Some(u.space.degree()),
            _ => None,
        }
    }
}

/// Squared local energy norms `k^2‖a-b‖_K^2 + |a-b|_{1,K}^2 + k‖a-b‖^2_{∂K∩Γ_A}` per element.
pub fn energy_norm_squared_local(mesh: &Mesh, k: f64, a: &Field, b: &Field, quad_degree: usize) -> Result<Vec<f64>> {
    let rule = triangle_rule(quad_degree)?;
    let mut local: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| {
            let det = mesh.element_map(t).det;
            let mut s = 0.0;
            for (x, w) in rule.iter() {
                let (va, ga) = a.eval(mesh, t, x);
                let (vb, gb) = b.eval(mesh, t, x);
                s += w * det * (k * k * (va - vb).norm_sqr() + (ga[0] - gb[0]).norm_sqr() + (ga[1] - gb[1]).norm_sqr());
            }
            s
        })
        .collect();
    let erule = edge_rule(quad_degree)?;
    let edges: Vec<AbsorbingEdge> = absorbing_edges(mesh);
    for edge in &edges {
        let mut s = 0.0;
        for (t, w) in erule.iter() {
            let xhat = edge.reference_point(t);
            let (va, _) = a.eval(mesh, edge.element, xhat);
            let (vb, _) = b.eval(mesh, edge.element, xhat);
            s += w * edge.length * (va - vb).norm_sqr();
        }
        local[edge.element] += k * s;
    }
    Ok(local)
}

/// Quadrature degree for an energy norm of `a - b`.
pub fn energy_quad_degree(a: &Field, b: &Field) -> usize {
    match (a, b) {
        (Field::Analytic(_), _) | (_, Field::Analytic(_)) => {
            elevated_degree(a.degree().or(b.degree()).unwrap_or(1))
        }
        _ => 2 * a.degree().unwrap_or(0).max(b.degree().unwrap_or(0)).max(1),
    }
}

/// `‖a - b‖_{1,k,Ω}`.
pub fn energy_norm(mesh: &Mesh, k: f64, a: &Field, b: &Field) -> Result<f64> {
    let deg = energy_quad_degree(a, b);
    Ok(energy_norm_squared_local(mesh, k, a, b, deg)?.iter().sum::<f64>().sqrt())
}

/// Constants entering the guaranteed bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub c_ba: f64,
    pub c_up: f64,
}

/// Local and global estimator quantities; percentages are relative to the
/// reference energy norm.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub eta_k: Vec<f64>,
    pub osc_k: Vec<f64>,
    /// `‖ref - u_h‖_{1,k,K}` if a reference was supplied.
    pub err_k: Option<Vec<f64>>,
    pub eta: f64,
    pub osc: f64,
    /// Energy norm of the reference.
    pub reference_norm: Option<f64>,
    pub e_fem: Option<f64>,
    pub e_ba: Option<f64>,
    pub e_est: Option<f64>,
    pub e_est_guaranteed: Option<f64>,
    pub constants: Option<Constants>,
}

impl EstimateReport {
    /// `E_est / E_fem`, absent when the error vanishes.
    pub fn effectivity(&self) -> Option<f64> {
        match (self.e_est, self.e_fem) {
            (Some(est), Some(fem)) if fem > 0.0 => Some(est / fem),
            _ => None,
        }
    }

    pub fn guaranteed_effectivity(&self) -> Option<f64> {
        match (self.e_est_guaranteed, self.e_fem) {
            (Some(est), Some(fem)) if fem > 0.0 => Some(est / fem),
            _ => None,
        }
    }
}

/// Reference solution for a report.
pub enum Reference<'a> {
    None,
    /// Exact solution; its energy norm is computed by quadrature unless given.
    Analytic {
        u: &'a dyn AnalyticSolution,
        norm: Option<f64>,
    },
    /// Higher-degree discrete solution on the same mesh.
    Discrete(&'a DiscreteField),
}

pub fn report(
    problem: &HelmholtzProblem,
    u_h: &DiscreteField,
    eq: &Equilibration,
    reference: Reference,
    best_approximation: Option<&DiscreteField>,
    constants: Option<Constants>,
) -> Result<EstimateReport> {
    let mesh = &*problem.mesh;
    let k = problem.k;
    let eta_k = eta_local(&eq.flux, u_h)?;
    let osc_k = osc_local(problem, &eq.data)?;
    let eta = eta_k.iter().map(|e| e * e).sum::<f64>().sqrt();
    let osc = osc_k.iter().map(|e| e * e).sum::<f64>().sqrt();
    let uh = Field::Discrete(u_h);
    let (err_k, reference_norm, ba) = match reference {
        Reference::None => (None, None, None),
        Reference::Analytic { u, norm } => {
            let r = Field::Analytic(u);
            let deg = problem.quad_degree.unwrap_or_else(|| energy_quad_degree(&r, &uh));
            let e = energy_norm_squared_local(mesh, k, &r, &uh, deg)?;
            let n = match norm {
                Some(n) => n,
                None => energy_norm_squared_local(mesh, k, &r, &Field::Zero, deg)?.iter().sum::<f64>().sqrt(),
            };
            let ba = match best_approximation {
                Some(pu) => Some(energy_norm_squared_local(mesh, k, &r, &Field::Discrete(pu), deg)?.iter().sum::<f64>().sqrt()),
                None => None,
            };
            (Some(e.iter().map(|v| v.sqrt()).collect::<Vec<_>>()), Some(n), ba)
        }
        Reference::Discrete(u) => {
            let r = Field::Discrete(u);
            let deg = energy_quad_degree(&r, &uh);
            let e = energy_norm_squared_local(mesh, k, &r, &uh, deg)?;
            let n = energy_norm_squared_local(mesh, k, &r, &Field::Zero, deg)?.iter().sum::<f64>().sqrt();
            (Some(e.iter().map(|v| v.sqrt()).collect::<Vec<_>>()), Some(n), None)
        }
    };
    let pct = |v: f64| reference_norm.filter(|n| *n > 0.0).map(|n| 100.0 * v / n);
    let e_fem = err_k.as_ref().and_then(|e| pct(e.iter().map(|v| v * v).sum::<f64>().sqrt()));
    let e_est = pct(eta);
    Ok(EstimateReport {
        eta_k,
        osc_k,
        err_k,
        eta,
        osc,
        reference_norm,
        e_fem,
        e_ba: ba.and_then(pct),
        e_est,
        e_est_guaranteed: match (e_est, constants) {
            (Some(e), Some(c)) => Some(c.c_up * e),
            _ => None,
        },
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibration::equilibrate;
    use crate::mesh::build_cartesian_mesh;
    use crate::solver::{solve_helmholtz, PlaneWave, Polynomial};
    use crate::spaces::LagrangeSpace;
    use std::sync::Arc;

    #[test]
    fn trace_constant_for_unit_right_triangle() {
        let g = crate::mesh::element_geometry_of([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let ratio = 2f64.sqrt() / (1.0 - 0.5 * 2f64.sqrt());
        let expect = (0.75 / PI * (1.0 + 1.0 / PI)).sqrt() * ratio;
        assert!((trace_constant(1, g.h, g.rho) - expect).abs() < 1e-12);
        assert!((expect - 2.70876).abs() < 1e-5);
        assert_eq!(trace_constant(0, g.h, g.rho), 0.0);
    }

    #[test]
    fn plane_wave_energy_norms() {
        let mesh = build_cartesian_mesh(16, [-1.0, -1.0], [1.0, 1.0]).unwrap();
        for k in [PI, 4.0 * PI] {
            let u = PlaneWave::new(k, PI / 3.0);
            let n = energy_norm(&mesh, k, &Field::Analytic(&u), &Field::Zero).unwrap();
            assert!((n - PlaneWave::unit_square_energy_norm(k)).abs() < 1e-9 * n);
        }
        assert_eq!(energy_norm(&mesh, 1.0, &Field::Zero, &Field::Zero).unwrap(), 0.0);
    }

    #[test]
    fn zero_flux_gives_gradient_norm() {
        let mesh = Arc::new(build_cartesian_mesh(2, [0.0, 0.0], [1.0, 1.0]).unwrap());
        let space = Arc::new(LagrangeSpace::new(mesh.clone(), 1));
        // u_h = x, so |u_h|_{1,K} = sqrt(area)
        let u = Polynomial::new(vec![(C64::new(1.0, 0.0), 1, 0)]);
        let uh = DiscreteField::interpolate(space, &u);
        let eta = eta_local(&FluxField::zero(mesh.clone(), 2), &uh).unwrap();
        for (t, e) in eta.iter().enumerate() {
            let area = mesh.element_geometry(t).unwrap().area;
            assert!((e - area.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn polynomial_data_has_no_oscillation_and_no_estimator() {
        let mesh = Arc::new(build_cartesian_mesh(3, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let u = Polynomial::new(vec![(C64::new(1.0, 0.0), 1, 0), (C64::new(0.0, 2.0), 0, 1)]);
        let pb = HelmholtzProblem::manufactured(mesh, 2.0, 1, u.clone()).unwrap();
        let uh = solve_helmholtz(&pb).unwrap();
        let eq = equilibrate(&pb, &uh).unwrap();
        let rep = report(&pb, &uh, &eq, Reference::Analytic { u: &u, norm: None }, None, None).unwrap();
        assert!(rep.osc < 1e-12, "{}", rep.osc);
        assert!(rep.eta < 1e-9 * rep.reference_norm.unwrap());
        assert!(rep.e_fem.unwrap() < 1e-8);
    }

    #[test]
    fn self_reference_has_no_effectivity() {
        let mesh = Arc::new(build_cartesian_mesh(4, [-1.0, -1.0], [1.0, 1.0]).unwrap());
        let pb = HelmholtzProblem::new(mesh, PI, 1).unwrap().with_incident(Arc::new(PlaneWave::new(PI, PI / 3.0)));
        let uh = solve_helmholtz(&pb).unwrap();
        let eq = equilibrate(&pb, &uh).unwrap();
        let rep = report(&pb, &uh, &eq, Reference::Discrete(&uh), None, None).unwrap();
        assert_eq!(rep.e_fem, Some(0.0));
        assert!(rep.effectivity().is_none());
        let sum: f64 = rep.eta_k.iter().map(|e| e * e).sum();
        assert!((sum.sqrt() - rep.eta).abs() < 1e-14 * rep.eta);
    }
}
