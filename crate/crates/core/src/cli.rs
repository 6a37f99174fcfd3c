//! Command-line drivers: plane-wave convergence tables, adaptive scattering
//! runs and a self-check.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::adaptivity::{adapt_loop, default_reference_degree, AdaptOptions, AdaptState, HistoryRow};
use crate::bounds::BoundContext;
use crate::equilibration::{check_identities, equilibrate, equilibrate_with, project_data, projection_residual, EquilibrationOptions};
use crate::error::{Error, Result};
use crate::estimator::{energy_norm, report, Constants, EstimateReport, Field, Reference};
use crate::mesh::{build_cartesian_mesh, parse_mesh, write_mesh, Mesh};
use crate::solver::{
    best_approximation, solve_helmholtz, DiscreteField, HelmholtzProblem, PlaneWave, Polynomial, DEFAULT_NU, MAX_DEGREE,
};
use crate::spaces::{LagrangeBasis, LagrangeSpace};
use crate::C64;

/// The scattering geometry: `(-1,1)^2` minus the obstacle
/// `{2|x1| - 1/2 < x2 < |x1|}`, obstacle edges tagged `D`.
pub const SCATTERING_MESH: &str = include_str!("../assets/scattering.mesh");

pub fn scattering_mesh() -> Result<Mesh> {
    parse_mesh(SCATTERING_MESH, Path::new("assets/scattering.mesh"))
}

/// Formats like C's `%.12g`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (11 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

/// Parses a wavenumber such as `3.5`, `pi`, `2pi`, `10*pi`.
pub fn parse_wavenumber(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let k = match t.strip_suffix("pi") {
        Some(prefix) => {
            let prefix = prefix.trim_end_matches('*').trim();
            let factor = if prefix.is_empty() { 1.0 } else { prefix.parse::<f64>().map_err(|e| format!("{s}: {e}"))? };
            factor * PI
        }
        None => t.parse::<f64>().map_err(|e| format!("{s}: {e}"))?,
    };
    if k > 0.0 && k.is_finite() {
        Ok(k)
    } else {
        Err(format!("wavenumber must be positive, got {s}"))
    }
}

/// Parses an angle, accepting the same `pi` forms with an optional sign.
pub fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    match t.strip_prefix('-') {
        Some(rest) => parse_angle(rest).map(|v| -v),
        None if t.to_ascii_lowercase().contains("pi") => {
            let (num, den) = t.split_once('/').unwrap_or((t, "1"));
            let den: f64 = den.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            Ok(parse_wavenumber(num)? / den)
        }
        None => t.parse::<f64>().map_err(|e| format!("{s}: {e}")),
    }
}

fn parse_degree(s: &str) -> std::result::Result<usize, String> {
    let p: usize = s.parse().map_err(|e| format!("{s}: {e}"))?;
    if (1..=MAX_DEGREE).contains(&p) {
        Ok(p)
    } else {
        Err(format!("degree must be in 1..={MAX_DEGREE}, got {p}"))
    }
}

fn parse_n(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        Ok(_) => Err("n must be at least 1".into()),
        Err(e) => Err(format!("{s}: {e}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "helmholtz", about = "Helmholtz FEM with guaranteed equilibrated-flux error estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plane wave on (-1,1)^2 over a sequence of structured meshes.
    PlaneWave(PlaneWaveArgs),
    /// Adaptive scattering by the reference obstacle.
    Scattering(ScatteringArgs),
    /// Runs the invariant checks and reports pass/fail.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PlaneWaveArgs {
    #[arg(long, default_value = "pi", value_parser = parse_wavenumber)]
    pub k: f64,
    #[arg(long, default_value = "1", value_parser = parse_degree)]
    pub p: usize,
    /// Subdivisions per side, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128", value_parser = parse_n)]
    pub n: Vec<usize>,
    /// Propagation angle of the plane wave.
    #[arg(long, default_value = "pi/3", value_parser = parse_angle, allow_hyphen_values = true)]
    pub nu: f64,
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Output CSV; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScatteringArgs {
    #[arg(long, default_value = "2pi", value_parser = parse_wavenumber)]
    pub k: f64,
    #[arg(long, default_value = "1", value_parser = parse_degree)]
    pub p: usize,
    /// Initial mesh; the built-in obstacle mesh if absent.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value = "15")]
    pub iters: usize,
    /// Degree of the reference solution; defaults to min(p+3, 6).
    #[arg(long, value_parser = parse_degree)]
    pub pref: Option<usize>,
    #[arg(long, default_value = "pi/3", value_parser = parse_angle, allow_hyphen_values = true)]
    pub nu: f64,
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Directory receiving per-iteration mesh and element-value snapshots.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Flip the sign of the boundary datum in every patch problem.
    FlipSign,
    /// Perturb `u_h` so it no longer solves the discrete problem.
    NonGalerkin,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, hide = true)]
    pub inject: Option<Fault>,
}

/// One row of the plane-wave table.
#[derive(Debug, Clone)]
pub struct PlaneWaveRow {
    pub n: usize,
    pub h: f64,
    pub p: usize,
    pub k: f64,
    pub report: EstimateReport,
    pub identities: crate::equilibration::IdentityCheck,
}

impl PlaneWaveRow {
    pub fn e_fem(&self) -> f64 {
        self.report.e_fem.expect("analytic reference")
    }
    pub fn e_ba(&self) -> f64 {
        self.report.e_ba.expect("best approximation")
    }
    pub fn e_est(&self) -> f64 {
        self.report.e_est.expect("analytic reference")
    }
    pub fn e_est_guaranteed(&self) -> f64 {
        self.report.e_est_guaranteed.expect("constants")
    }
    pub fn constants(&self) -> Constants {
        self.report.constants.expect("constants")
    }
}

pub const PLANE_WAVE_HEADER: [&str; 14] =
    ["n", "h", "p", "k", "E_fem", "E_ba", "E_est", "E_est_guar", "eff_est", "eff_guar", "eta", "osc", "c_ba", "c_up"];

pub const ADAPTIVE_HEADER: [&str; 7] = ["iter", "n_elem", "h_min", "h_max", "E_fem", "E_est", "eff"];

/// Solves, equilibrates and estimates the plane wave `ξ_ν` on the `n × n` mesh.
pub fn plane_wave_row(k: f64, p: usize, n: usize, nu: f64, quad_degree: Option<usize>) -> Result<PlaneWaveRow> {
    let mesh = Arc::new(build_cartesian_mesh(n, [-1.0, -1.0], [1.0, 1.0])?);
    let u = Arc::new(PlaneWave::new(k, nu));
    let mut problem = HelmholtzProblem::new(mesh.clone(), k, p)?.with_incident(u.clone());
    problem.quad_degree = quad_degree;
    let u_h = solve_helmholtz(&problem)?;
    let eq = equilibrate(&problem, &u_h)?;
    let identities = check_identities(&problem, &u_h, &eq)?;
    let ba = best_approximation(&*u, Arc::new(LagrangeSpace::new(mesh.clone(), p)), k)?;
    let h = mesh.h_max();
    let ctx = BoundContext::free_space_square(k, h, p);
    let c_ba = ctx.c_ba()?;
    let constants = Constants { c_ba, c_up: crate::bounds::c_up_from(c_ba, None)? };
    let reference = Reference::Analytic { u: &*u, norm: Some(PlaneWave::unit_square_energy_norm(k)) };
    let report = report(&problem, &u_h, &eq, reference, Some(&ba), Some(constants))?;
    Ok(PlaneWaveRow { n, h, p, k, report, identities })
}

pub fn write_plane_wave_csv<W: Write>(rows: &[PlaneWaveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLANE_WAVE_HEADER)?;
    for r in rows {
        let c = r.report.constants;
        w.write_record([
            r.n.to_string(),
            format_number(r.h),
            r.p.to_string(),
            format_number(r.k),
            opt(r.report.e_fem),
            opt(r.report.e_ba),
            opt(r.report.e_est),
            opt(r.report.e_est_guaranteed),
            opt(r.report.effectivity()),
            opt(r.report.guaranteed_effectivity()),
            format_number(r.report.eta),
            format_number(r.report.osc),
            opt(c.map(|c| c.c_ba)),
            opt(c.map(|c| c.c_up)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adaptive_csv<W: Write>(header: &str, rows: &[HistoryRow], mut out: W) -> Result<()> {
    writeln!(out, "{header}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ADAPTIVE_HEADER)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.n_elem.to_string(),
            format_number(r.h_min),
            format_number(r.h_max),
            opt(r.e_fem),
            opt(r.e_est),
            opt(r.eff),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `iter_NNN.mesh` and `iter_NNN_elements.csv` (`element,eta,osc,err`).
pub fn write_snapshot(dir: &Path, state: &AdaptState) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stem = format!("iter_{:03}", state.iteration);
    fs::write(dir.join(format!("{stem}.mesh")), write_mesh(state.mesh()))?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}_elements.csv")))?;
    w.write_record(["element", "eta", "osc", "err"])?;
    let r = &state.report;
    for t in 0..r.eta_k.len() {
        w.write_record([
            t.to_string(),
            format_number(r.eta_k[t]),
            format_number(r.osc_k[t]),
            opt(r.err_k.as_ref().map(|e| e[t])),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn cmd_plane_wave(args: &PlaneWaveArgs) -> Result<Vec<PlaneWaveRow>> {
    let mut rows = Vec::with_capacity(args.n.len());
    for &n in &args.n {
        let row = plane_wave_row(args.k, args.p, n, args.nu, args.quad_degree)?;
        info!("n {n}: E_fem {:.4} E_est {:.4}", row.e_fem(), row.e_est());
        rows.push(row);
    }
    write_plane_wave_csv(&rows, output(&args.out)?)?;
    Ok(rows)
}

pub struct ScatteringRun {
    pub history: Vec<HistoryRow>,
    pub constants: Constants,
}

pub fn cmd_scattering(args: &ScatteringArgs) -> Result<ScatteringRun> {
    let mesh = match &args.mesh {
        Some(p) => crate::mesh::load_mesh(p)?,
        None => scattering_mesh()?,
    };
    let pref = args.pref.unwrap_or_else(|| default_reference_degree(args.p));
    if pref <= args.p {
        return Err(Error::InvalidInput(format!("--pref {pref} must exceed --p {}", args.p)));
    }
    let ctx = BoundContext::scattering(&mesh, args.k, [0.0, 0.0], args.p)?;
    let constants = Constants { c_ba: ctx.c_ba()?, c_up: ctx.c_up()? };
    let (k, p, nu, quad) = (args.k, args.p, args.nu, args.quad_degree);
    let incident = Arc::new(PlaneWave::new(k, nu));
    let build = |m: Arc<Mesh>| -> Result<HelmholtzProblem> {
        let mut pb = HelmholtzProblem::new(m, k, p)?.with_incident(incident.clone());
        pb.quad_degree = quad;
        Ok(pb)
    };
    let options = AdaptOptions { reference_degree: Some(pref), constants: Some(constants), ..AdaptOptions::new(args.iters, p) };
    let history = adapt_loop(Arc::new(mesh), build, &options, |state| match &args.snapshots {
        Some(dir) => write_snapshot(dir, state),
        None => Ok(()),
    })?;
    let header = format!(
        "# k={} p={} nu={} pref={} c_stab={} c_ba={} c_up={}",
        format_number(k),
        p,
        format_number(nu),
        pref,
        format_number(ctx.c_stab),
        format_number(constants.c_ba),
        format_number(constants.c_up)
    );
    write_adaptive_csv(&header, &history, output(&args.out)?)?;
    Ok(ScatteringRun { history, constants })
}

/// Outcome of one self-check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: Result<f64>, tol: f64) -> Check {
    match value {
        Ok(v) => Check { name, passed: v <= tol, detail: format!("{v:.3e} (tol {tol:.0e})") },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

fn partition_of_unity() -> f64 {
    let mut worst: f64 = 0.0;
    for p in 1..=MAX_DEGREE {
        let basis = LagrangeBasis::new(p);
        for i in 0..=10 {
            for j in 0..=(10 - i) {
                let (v, g) = basis.eval([i as f64 / 10.0, j as f64 / 10.0]);
                worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
                worst = worst.max(g.iter().map(|d| d[0]).sum::<f64>().abs());
                worst = worst.max(g.iter().map(|d| d[1]).sum::<f64>().abs());
            }
        }
    }
    worst
}

fn manufactured() -> Result<f64> {
    let mesh = Arc::new(build_cartesian_mesh(3, [-1.0, -1.0], [1.0, 1.0])?);
    let u = Polynomial::new(vec![(C64::new(1.0, 0.0), 2, 0), (C64::new(0.0, -0.5), 1, 1), (C64::new(0.25, 0.0), 0, 0)]);
    let pb = HelmholtzProblem::manufactured(mesh.clone(), 2.0, 2, u.clone())?;
    let u_h = solve_helmholtz(&pb)?;
    let eq = equilibrate(&pb, &u_h)?;
    let r = report(&pb, &u_h, &eq, Reference::Analytic { u: &u, norm: None }, None, None)?;
    let norm = energy_norm(&mesh, 2.0, &Field::Discrete(&u_h), &Field::Zero)?;
    Ok((r.e_fem.unwrap_or(f64::INFINITY) / 100.0).max(r.eta / norm))
}

fn plane_wave_fixture(n: usize, p: usize) -> Result<(HelmholtzProblem, DiscreteField)> {
    let mesh = Arc::new(build_cartesian_mesh(n, [-1.0, -1.0], [1.0, 1.0])?);
    let pb = HelmholtzProblem::new(mesh, PI, p)?.with_incident(Arc::new(PlaneWave::new(PI, DEFAULT_NU)));
    let u_h = solve_helmholtz(&pb)?;
    Ok((pb, u_h))
}

fn identities(p: usize, fault: Option<Fault>) -> Result<f64> {
    let (pb, mut u_h) = plane_wave_fixture(8, p)?;
    if fault == Some(Fault::NonGalerkin) {
        let mid = u_h.coeffs.len() / 2;
        u_h.coeffs[mid] += C64::new(0.1, 0.0);
    }
    let options = EquilibrationOptions { flip_boundary_sign: fault == Some(Fault::FlipSign) };
    let eq = equilibrate_with(&pb, &u_h, options)?;
    let c = check_identities(&pb, &u_h, &eq)?;
    Ok(c.divergence.max(c.boundary_trace).max(c.normal_jump))
}

fn projection_orthogonality() -> Result<f64> {
    let (pb, _) = plane_wave_fixture(4, 2)?;
    let data = project_data(&pb)?;
    projection_residual(&pb, &data)
}

/// Runs the invariant suite, optionally with an injected fault.
pub fn verify_checks(fault: Option<Fault>) -> Vec<Check> {
    vec![
        check("partition of unity", Ok(partition_of_unity()), 1e-12),
        check("manufactured polynomial exactness", manufactured(), 1e-8),
        check("projection orthogonality", projection_orthogonality(), 1e-10),
        check("equilibration identities p=1", identities(1, fault), 1e-10),
        check("equilibration identities p=2", identities(2, fault), 1e-10),
    ]
}

pub fn cmd_verify(args: &VerifyArgs) -> bool {
    let checks = verify_checks(args.inject);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

/// Sizes the global thread pool from `HELM_THREADS`.
pub fn init_threads() {
    if let Some(n) = std::env::var("HELM_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn run(cli: Cli) -> Result<bool> {
    init_threads();
    match cli.command {
        Command::PlaneWave(a) => cmd_plane_wave(&a).map(|_| true),
        Command::Scattering(a) => cmd_scattering(&a).map(|_| true),
        Command::Verify(a) => Ok(cmd_verify(&a)),
    }
}
