//! Estimator-driven adaptive refinement.
//!
//! Each iteration solves on the current mesh, equilibrates, estimates, marks
//! the decile of elements with the largest `η_K` and bisects them.

use std::f64::consts::PI;
use std::sync::Arc;

use log::info;

use crate::equilibration::equilibrate;
use crate::error::{Error, Result};
use crate::estimator::{report, Constants, EstimateReport, Reference};
use crate::mesh::{refine, Mesh};
use crate::solver::{solve_helmholtz, solve_on, DiscreteField, HelmholtzProblem, MAX_DEGREE};
use crate::spaces::LagrangeSpace;

pub const DEFAULT_MARK_FRACTION: f64 = 0.1;

/// Number of elements marked out of `n` for fraction `theta`.
pub fn marked_count(n: usize, theta: f64) -> usize {
    let x = theta * n as f64;
    // 0.1 * 30 is 3.0000000000000004 in binary.
    ((x - 1e-12 * n as f64).ceil().max(0.0) as usize).min(n)
}

/// Indices of the `ceil(θN)` elements with the largest `η_K`, ties broken by
/// ascending index. The result is sorted by decreasing `η_K`.
pub fn mark(eta: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    order.truncate(marked_count(eta.len(), theta));
    order
}

/// `max_K k h_K / (2π p)`; at most 1 in the resolved regime.
pub fn resolution(mesh: &Mesh, k: f64, p: usize) -> f64 {
    k * mesh.h_max() / (2.0 * PI * p as f64)
}

pub fn default_reference_degree(p: usize) -> usize {
    (p + 3).min(MAX_DEGREE)
}

#[derive(Debug, Clone)]
pub struct AdaptOptions {
    pub iterations: usize,
    pub mark_fraction: f64,
    /// Degree of the reference solution used for `E_fem`; `None` skips it.
    pub reference_degree: Option<usize>,
    pub constants: Option<Constants>,
}

impl AdaptOptions {
    pub fn new(iterations: usize, p: usize) -> Self {
        Self {
            iterations,
            mark_fraction: DEFAULT_MARK_FRACTION,
            reference_degree: Some(default_reference_degree(p)),
            constants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub n_elem: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub e_fem: Option<f64>,
    pub e_est: Option<f64>,
    pub eff: Option<f64>,
    /// Elements marked for refinement after this iteration.
    pub marked: usize,
    pub resolution: f64,
}

/// Everything computed in one iteration.
pub struct AdaptState {
    pub iteration: usize,
    pub problem: HelmholtzProblem,
    pub u_h: DiscreteField,
    pub reference: Option<DiscreteField>,
    pub report: EstimateReport,
    pub marked: Vec<usize>,
}

impl AdaptState {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.problem.mesh
    }

    pub fn row(&self) -> HistoryRow {
        let mesh = self.mesh();
        HistoryRow {
            iter: self.iteration,
            n_elem: mesh.n_elements(),
            h_min: mesh.h_min(),
            h_max: mesh.h_max(),
            e_fem: self.report.e_fem,
            e_est: self.report.e_est,
            eff: self.report.effectivity(),
            marked: self.marked.len(),
            resolution: resolution(mesh, self.problem.k, self.problem.degree),
        }
    }
}

/// Runs the adaptive loop from `mesh`.
///
/// `build` creates the problem on a given mesh; `on_iteration` sees each
/// state before refinement. Stops early when `η = 0`. Returns one history row
/// per iteration.
pub fn adapt_loop<B, F>(mesh: Arc<Mesh>, build: B, options: &AdaptOptions, mut on_iteration: F) -> Result<Vec<HistoryRow>>
where
    B: Fn(Arc<Mesh>) -> Result<HelmholtzProblem>,
    F: FnMut(&AdaptState) -> Result<()>,
{
    let mut mesh = mesh;
    let mut history = Vec::with_capacity(options.iterations + 1);
    for iteration in 0..=options.iterations {
        let problem = build(mesh.clone())?;
        if let Some(pr) = options.reference_degree {
            if pr <= problem.degree {
                return Err(Error::InvalidInput(format!(
                    "reference degree {pr} must exceed the discretization degree {}",
                    problem.degree
                )));
            }
        }
        let u_h = solve_helmholtz(&problem)?;
        let eq = equilibrate(&problem, &u_h)?;
        let reference = match options.reference_degree {
            Some(pr) => {
                let ref_problem = HelmholtzProblem { degree: pr, ..problem.clone() };
                Some(solve_on(&ref_problem, Arc::new(LagrangeSpace::new(mesh.clone(), pr)))?)
            }
            None => None,
        };
        let r = match &reference {
            Some(u) => Reference::Discrete(u),
            None => Reference::None,
        };
        let report = report(&problem, &u_h, &eq, r, None, options.constants)?;
        let done = report.eta == 0.0 || iteration == options.iterations;
        let marked = if done { Vec::new() } else { mark(&report.eta_k, options.mark_fraction) };
        let state = AdaptState { iteration, problem, u_h, reference, report, marked };
        let row = state.row();
        info!(
            "iter {} n_elem {} h_min {:.3e} E_est {:?} E_fem {:?}",
            row.iter, row.n_elem, row.h_min, row.e_est, row.e_fem
        );
        on_iteration(&state)?;
        history.push(row);
        if done {
            break;
        }
        mesh = Arc::new(refine(&mesh, &state.marked));
    }
    Ok(history)
}

/// Index of the first row in the resolved regime.
pub fn first_resolved(history: &[HistoryRow]) -> Option<usize> {
    history.iter().position(|r| r.resolution <= 1.0)
}

/// Whether `E_est` is nonincreasing over `rows`, allowing `allowed_upticks`
/// increases of at most `tolerance` (relative).
pub fn nonincreasing_with_upticks(values: &[f64], tolerance: f64, allowed_upticks: usize) -> bool {
    let mut upticks = 0;
    for w in values.windows(2) {
        if w[1] > w[0] {
            if w[1] > w[0] * (1.0 + tolerance) {
                return false;
            }
            upticks += 1;
        }
    }
    upticks <= allowed_upticks
}
