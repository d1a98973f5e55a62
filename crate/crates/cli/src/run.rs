//! Command dispatch: builds the problem from a config and runs one pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use profile_shift_core::fredholm::{backward_log10_condition, dense_solve, DEFAULT_DENSE_CAP};
use profile_shift_core::operator::{min_eigenvalue, CoefficientError};
use profile_shift_core::validation::{
    check_fixed_shift, AnalyticCase, FixedShiftCheck, Reference, ValidationError,
    DEFAULT_POSITIVITY_TOL,
};
use profile_shift_core::{
    build_grid, check_mass, check_positivity, compare_posedness, convergence_study,
    dense_propagator, normalize, solve_profile_shift, spectral_analysis, validate_coefficients,
    CoefficientField, Domain, Field, FredholmError, FredholmReport, Grid, GridError, Mask,
    PrincipleReport, ProblemSetup, ProfileShift, Propagator, PropagatorError, SolverOptions,
    TimeGrid, Trajectory,
};

use crate::config::{ConfigError, ExperimentConfig, Preset};
use crate::output::{trajectory_csv, FileEntry, OutputSet};

/// Largest `|∫ p(x,0) dx − 1|` accepted for a normalized solution.
pub const MASS_TOL: f64 = 1e-12;

/// Largest relative gap between the Krylov and dense solutions.
pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Oracle,
    Spectrum,
    Posedness,
    Convergence,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Oracle => "oracle",
            Command::Spectrum => "spectrum",
            Command::Posedness => "posedness",
            Command::Convergence => "convergence",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("{m} unknowns exceed the dense-oracle cap of {cap}")]
    OracleCap { m: usize, cap: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Validation(_) => 4,
            CliError::OracleCap { .. } => 5,
            CliError::Io(_) => 1,
        }
    }
}

fn config_error(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(ConfigError::Validation {
        field: field.into(),
        constraint: e.to_string(),
    })
}

impl From<PropagatorError> for CliError {
    fn from(e: PropagatorError) -> Self {
        match e {
            PropagatorError::Coefficients(c) => config_error("coefficients", c),
            PropagatorError::InvalidTimeGrid(_) => config_error("N_t", e),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<FredholmError> for CliError {
    fn from(e: FredholmError) -> Self {
        match e {
            FredholmError::Propagator(p) => p.into(),
            FredholmError::InvalidShift(_) => config_error("gamma", e),
            FredholmError::InvalidOptions(_) => config_error("solver", e),
            FredholmError::TooLarge { m, cap } => CliError::OracleCap { m, cap },
            FredholmError::NonpositiveMass(_) => CliError::Validation(e.to_string()),
            FredholmError::NoConvergence { .. }
            | FredholmError::PostCheckFailure { .. }
            | FredholmError::NumericalBreakdown(_) => CliError::Solver(e.to_string()),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Fredholm(f) => f.into(),
            ValidationError::Propagator(p) => p.into(),
            ValidationError::Grid(g) => config_error("resolution", g),
            ValidationError::UnknownCase(_) => config_error("gamma", e),
            ValidationError::BadLadder => config_error("--resolutions", e),
        }
    }
}

/// Everything a command needs, built and checked from the config.
pub struct Problem {
    pub grid: Grid,
    pub coefficients: CoefficientField,
    pub time_grid: TimeGrid,
    pub propagator: Propagator,
    pub gamma: ProfileShift,
    pub coefficient_warnings: Vec<String>,
}

fn domain_of(cfg: &ExperimentConfig) -> Result<Domain, CliError> {
    let bounds: Vec<(f64, f64)> = cfg
        .domain
        .bounds
        .as_ref()
        .map(|b| b.iter().map(|p| (p[0], p[1])).collect())
        .unwrap_or_else(|| vec![(0.0, PI); cfg.domain.dimension]);
    let mask = match &cfg.domain.mask {
        Some(rows) => Some(Mask::from_rows(rows).map_err(|e| config_error("domain.mask", e))?),
        None => None,
    };
    Domain::new(bounds, mask).map_err(|e| config_error("domain", e))
}

fn tensor(d: &[f64], dim: usize) -> [[f64; 2]; 2] {
    if dim == 1 {
        [[d[0], 0.0], [0.0, d[0]]]
    } else {
        [[d[0], d[1]], [d[1], d[2]]]
    }
}

fn vector(f: &[f64]) -> [f64; 2] {
    [f[0], f.get(1).copied().unwrap_or(0.0)]
}

fn coefficients_of(cfg: &ExperimentConfig) -> Result<CoefficientField, CliError> {
    let spec = &cfg.coefficients;
    let dim = cfg.domain.dimension;
    let mut c = CoefficientField::heat();
    if let Some(table) = &spec.table {
        if let Some(rows) = &table.diffusion {
            c.diffusion = Field::Nodal(rows.iter().map(|r| tensor(r, dim)).collect());
        }
        if let Some(rows) = &table.drift {
            c.drift = Field::Nodal(rows.iter().map(|r| vector(r)).collect());
        }
        if let Some(q) = &table.absorption {
            c.absorption = Field::Nodal(q.clone());
        }
    } else {
        if let Some(d) = &spec.diffusion {
            let a = tensor(d, dim);
            c.diffusion = Field::Constant(a);
            c.delta = min_eigenvalue(&a, dim);
        }
        if let Some(f) = &spec.drift {
            c.drift = Field::Constant(vector(f));
        }
        if let Some(q) = spec.absorption {
            c.absorption = Field::Constant(q);
        }
    }
    if let Some(delta) = spec.delta {
        c.delta = delta;
    }
    if c.delta <= 0.0 {
        return Err(config_error(
            "coefficients.diffusion",
            CoefficientError::BadDelta(c.delta),
        ));
    }
    Ok(c)
}

fn gamma_samples(cfg: &ExperimentConfig, grid: &Grid) -> Result<Vec<f64>, CliError> {
    let g = &cfg.gamma;
    let bounds = grid.domain().bounds().to_vec();
    if let Some(k) = &g.eigenfunction {
        return Ok(grid.sample(|x| {
            x.iter()
                .zip(k)
                .zip(&bounds)
                .map(|((xi, ki), (lo, hi))| (*ki as f64 * PI * (xi - lo) / (hi - lo)).sin())
                .product()
        }));
    }
    if let Some(ind) = &g.indicator {
        return Ok(grid.sample(|x| {
            let inside = x
                .iter()
                .zip(&ind.bounds)
                .all(|(xi, b)| b[0] <= *xi && *xi <= b[1]);
            if inside {
                ind.value
            } else {
                0.0
            }
        }));
    }
    let table = g.table.as_ref().expect("validated: one gamma form");
    if table.len() != grid.len() {
        return Err(config_error(
            "gamma.table",
            format!("has {} entries, grid has {} nodes", table.len(), grid.len()),
        ));
    }
    Ok(table.clone())
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let dim = cfg.domain.dimension;
        let grid = build_grid(domain_of(cfg)?, &cfg.resolution.per_axis(dim))
            .map_err(|e: GridError| config_error("resolution", e))?;
        let coefficients = coefficients_of(cfg)?;
        let time_grid = TimeGrid::new(cfg.horizon, cfg.steps, cfg.theta)?;
        let mut samples = vec![0.0];
        if coefficients.is_time_dependent() {
            samples = (0..=cfg.steps).map(|k| time_grid.time(k)).collect();
        }
        let verdict = validate_coefficients(&coefficients, &grid, &samples)
            .map_err(|e| config_error("coefficients", e))?;

        let values = gamma_samples(cfg, &grid)?;
        let nonneg = cfg
            .gamma
            .nonneg
            .unwrap_or_else(|| values.iter().all(|v| *v >= 0.0) && values.iter().any(|v| *v > 0.0));
        let gamma = if nonneg {
            ProfileShift::nonnegative(values)
        } else {
            ProfileShift::new(values)
        }
        .map_err(|e| config_error("gamma", e))?;

        let propagator = Propagator::new(
            coefficients.clone(),
            grid.clone(),
            time_grid,
            cfg.advection_mode,
        )?;
        Ok(Self {
            grid,
            coefficients,
            time_grid,
            propagator,
            gamma,
            coefficient_warnings: verdict.warnings,
        })
    }

    /// Backward Euler on an M-matrix generator: nonnegativity is guaranteed.
    pub fn positivity_guaranteed(&self) -> bool {
        self.propagator.m_matrix_certified() && self.time_grid.theta() == 1.0
    }
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        restart: cfg.solver.restart,
    }
}

/// A named pass/fail measurement.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub mandatory: bool,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64, mandatory: bool) -> Self {
        Self {
            name,
            value,
            threshold,
            mandatory,
            passed: value <= threshold,
        }
    }
}

#[derive(Debug, Serialize)]
struct GridInfo {
    dimension: usize,
    nodes_per_axis: Vec<usize>,
    spacing: Vec<f64>,
    unknowns: usize,
    steps: usize,
    dt: f64,
    theta: f64,
    m_matrix_certified: bool,
}

fn grid_info(p: &Problem) -> GridInfo {
    GridInfo {
        dimension: p.grid.dimension(),
        nodes_per_axis: p.grid.nodes_per_axis().to_vec(),
        spacing: p.grid.spacing().to_vec(),
        unknowns: p.grid.len(),
        steps: p.time_grid.steps(),
        dt: p.time_grid.dt(),
        theta: p.time_grid.theta(),
        m_matrix_certified: p.propagator.m_matrix_certified(),
    }
}

#[derive(Debug, Serialize)]
struct SolveReport {
    grid: GridInfo,
    coefficient_warnings: Vec<String>,
    nonneg: bool,
    fredholm: FredholmReport,
    fixed_shift: FixedShiftCheck,
    principle: PrincipleReport,
    mass_error: Option<f64>,
    checks: Vec<Check>,
    passed: bool,
}

struct Solved {
    report: SolveReport,
    trajectory: Trajectory,
    normalized: Option<Trajectory>,
}

fn solve(cfg: &ExperimentConfig, p: &Problem) -> Result<Solved, CliError> {
    let (trajectory, mut fredholm) =
        solve_profile_shift(&p.gamma, &p.propagator, &solver_options(cfg))?;
    let fixed_shift = check_fixed_shift(&trajectory, p.gamma.values(), cfg.solver.tol);
    let principle = check_positivity(&trajectory, DEFAULT_POSITIVITY_TOL);
    let mut checks = vec![
        Check::at_most(
            "fixed_shift_residual",
            fixed_shift.relative_residual,
            cfg.solver.tol,
            true,
        ),
        Check {
            name: "positivity_violations",
            value: principle.violation_count as f64,
            threshold: 0.0,
            mandatory: p.gamma.is_nonnegative() && p.positivity_guaranteed(),
            passed: principle.passed(),
        },
    ];
    let mut normalized = None;
    let mut mass_error = None;
    if p.gamma.is_nonnegative() {
        let (alpha, scaled) = normalize(&trajectory, &p.grid)?;
        let e = check_mass(&scaled, &p.grid);
        checks.push(Check::at_most("mass_error", e, MASS_TOL, true));
        fredholm.alpha = Some(alpha);
        mass_error = Some(e);
        normalized = Some(scaled);
    }
    let passed = checks.iter().all(|c| c.passed || !c.mandatory);
    Ok(Solved {
        report: SolveReport {
            grid: grid_info(p),
            coefficient_warnings: p.coefficient_warnings.clone(),
            nonneg: p.gamma.is_nonnegative(),
            fredholm,
            fixed_shift,
            principle,
            mass_error,
            checks,
            passed,
        },
        trajectory,
        normalized,
    })
}

#[derive(Debug, Serialize)]
struct OracleReport {
    grid: GridInfo,
    krylov_iterations: usize,
    krylov_relative_residual: f64,
    krylov_vs_dense: f64,
    cond_i_minus_q: f64,
    spectral_radius: f64,
    checks: Vec<Check>,
    passed: bool,
}

fn oracle(cfg: &ExperimentConfig, p: &Problem) -> Result<OracleReport, CliError> {
    let q = dense_propagator(&p.propagator, DEFAULT_DENSE_CAP)?;
    let (_, krylov) = solve_profile_shift(&p.gamma, &p.propagator, &solver_options(cfg))?;
    let direct = dense_solve(&q, p.gamma.values())?;
    let diff: f64 = krylov
        .zeta
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = direct.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = if scale == 0.0 { diff } else { diff / scale };
    let s = spectral_analysis(&q)?;
    let checks = vec![
        Check::at_most("krylov_vs_dense", rel, ORACLE_TOL, true),
        Check {
            name: "spectral_radius_below_one",
            value: s.spectral_radius,
            threshold: 1.0,
            mandatory: true,
            passed: s.spectral_radius < 1.0,
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(OracleReport {
        grid: grid_info(p),
        krylov_iterations: krylov.iterations,
        krylov_relative_residual: krylov.relative_residual,
        krylov_vs_dense: rel,
        cond_i_minus_q: s.cond_i_minus_q,
        spectral_radius: s.spectral_radius,
        checks,
        passed,
    })
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    grid: GridInfo,
    spectral_radius: f64,
    cond_i_minus_q: f64,
    log10_cond_q: f64,
    cond_q_svd: f64,
    eigenvalues: Vec<[f64; 2]>,
    singular_values: Vec<f64>,
    passed: bool,
}

fn spectrum(p: &Problem) -> Result<SpectrumReport, CliError> {
    let q = dense_propagator(&p.propagator, DEFAULT_DENSE_CAP)?;
    let s = spectral_analysis(&q)?;
    let log10_cond_q = backward_log10_condition(&p.propagator, &q)?;
    Ok(SpectrumReport {
        grid: grid_info(p),
        spectral_radius: s.spectral_radius,
        cond_i_minus_q: s.cond_i_minus_q,
        log10_cond_q,
        cond_q_svd: s.cond_q,
        eigenvalues: s.eigenvalues.iter().map(|&(re, im)| [re, im]).collect(),
        singular_values: s.singular_values,
        passed: s.spectral_radius < 1.0,
    })
}

fn setup_of(cfg: &ExperimentConfig, p: &Problem) -> Result<ProblemSetup, CliError> {
    Ok(ProblemSetup {
        domain: domain_of(cfg)?,
        coefficients: p.coefficients.clone(),
        time_grid: p.time_grid,
        advection: cfg.advection_mode,
    })
}

/// The closed-form case matching the config, if there is one.
fn analytic_case(cfg: &ExperimentConfig) -> Result<AnalyticCase, CliError> {
    let c = &cfg.coefficients;
    let identity_diffusion = match &c.diffusion {
        None => true,
        Some(d) if d.len() == 1 => d[0] == 1.0,
        Some(d) => d[..] == [1.0, 0.0, 1.0],
    };
    let closed_form = matches!(
        c.preset,
        Some(Preset::Heat | Preset::Absorb | Preset::Anisotropic)
    ) && identity_diffusion
        && c.drift.as_ref().is_none_or(|f| f.iter().all(|v| *v == 0.0));
    if !closed_form {
        return Err(config_error(
            "coefficients",
            "convergence needs identity diffusion, no drift and constant absorption",
        ));
    }
    let on_box = cfg.domain.mask.is_none()
        && cfg
            .domain
            .bounds
            .as_ref()
            .is_none_or(|b| b.iter().all(|p| p[0] == 0.0 && p[1] == PI));
    if !on_box {
        return Err(config_error(
            "domain",
            "convergence needs the unmasked box (0, pi)^d",
        ));
    }
    let Some(k) = &cfg.gamma.eigenfunction else {
        return Err(config_error(
            "gamma",
            "convergence needs an eigenfunction shift",
        ));
    };
    let mut modes = [1, 1];
    modes[..k.len()].copy_from_slice(k);
    Ok(AnalyticCase {
        dimension: cfg.domain.dimension,
        modes,
        absorption: c.absorption.unwrap_or(0.0),
        horizon: cfg.horizon,
    })
}

#[derive(Debug, Serialize)]
struct ValidateReport {
    grid: GridInfo,
    oracle_skipped: Option<String>,
    checks: Vec<Check>,
    passed: bool,
}

/// Files written and the verdict of a completed run.
pub struct RunSummary {
    pub lines: Vec<String>,
    pub files: Vec<FileEntry>,
    pub passed: bool,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn run(
    cfg: &ExperimentConfig,
    command: Command,
    out_dir: &Path,
    resolutions: &[usize],
) -> Result<RunSummary, CliError> {
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let problem = Problem::build(cfg)?;
    timings.insert("setup".to_string(), elapsed_ms(start));
    let mut out = OutputSet::create(out_dir)?;
    let stride = cfg.outputs.slice_stride;
    let mut lines = Vec::new();
    let start = Instant::now();

    let passed = match command {
        Command::Solve => {
            let s = solve(cfg, &problem)?;
            out.write(
                "trajectory.csv",
                trajectory_csv(&problem.grid, &s.trajectory, stride).as_bytes(),
            )?;
            if let Some(p) = &s.normalized {
                out.write(
                    "p_trajectory.csv",
                    trajectory_csv(&problem.grid, p, stride).as_bytes(),
                )?;
            }
            out.write_json("report.json", &s.report)?;
            let r = &s.report;
            lines.push(format!(
                "solve: {} unknowns, {} GMRES iterations, residual {:.3e}",
                r.grid.unknowns, r.fredholm.iterations, r.fredholm.relative_residual
            ));
            if let Some(alpha) = r.fredholm.alpha {
                lines.push(format!("alpha = {alpha:.6}"));
            }
            for c in r.checks.iter().filter(|c| !c.passed) {
                lines.push(format!(
                    "check {} failed: {:e} vs {:e}",
                    c.name, c.value, c.threshold
                ));
            }
            r.passed
        }
        Command::Oracle => {
            let r = oracle(cfg, &problem)?;
            out.write_json("oracle.json", &r)?;
            lines.push(format!(
                "oracle: krylov vs dense {:.3e}, cond(I-Q) {:.4}, rho {:.6}",
                r.krylov_vs_dense, r.cond_i_minus_q, r.spectral_radius
            ));
            r.passed
        }
        Command::Spectrum => {
            let r = spectrum(&problem)?;
            out.write_json("spectrum.json", &r)?;
            lines.push(format!(
                "spectrum: rho {:.6}, cond(I-Q) {:.4}, log10 cond(Q) {:.3}",
                r.spectral_radius, r.cond_i_minus_q, r.log10_cond_q
            ));
            r.passed
        }
        Command::Posedness => {
            let r = compare_posedness(&setup_of(cfg, &problem)?, resolutions, DEFAULT_DENSE_CAP)?;
            out.write_json("posedness.json", &r)?;
            for rec in &r.records {
                lines.push(format!(
                    "posedness: M={} cond(I-Q) {:.4} log10 cond(Q) {:.3} rho {:.6}",
                    rec.m, rec.cond_i_minus_q, rec.log10_cond_q, rec.spectral_radius
                ));
            }
            r.records.iter().all(|rec| rec.spectral_radius < 1.0)
        }
        Command::Convergence => {
            let case = analytic_case(cfg)?;
            let ladder: Vec<(usize, usize)> = resolutions.iter().map(|&n| (n, cfg.steps)).collect();
            let r = convergence_study(
                &case,
                &ladder,
                cfg.theta,
                Reference::Continuum,
                &solver_options(cfg),
            )?;
            out.write_json("convergence.json", &r)?;
            for row in &r.rows {
                lines.push(format!(
                    "convergence: n={} h={:.4e} error {:.4e}",
                    row.nodes_per_axis, row.h, row.error_initial
                ));
            }
            lines.push(format!("fitted order {:.3}", r.fitted_order));
            true
        }
        Command::Validate => {
            let s = solve(cfg, &problem)?;
            let mut checks = s.report.checks;
            let mut oracle_skipped = None;
            if problem.grid.len() <= DEFAULT_DENSE_CAP {
                checks.extend(oracle(cfg, &problem)?.checks);
            } else {
                oracle_skipped = Some(format!(
                    "{} unknowns exceed the dense-oracle cap of {DEFAULT_DENSE_CAP}",
                    problem.grid.len()
                ));
            }
            let passed = checks.iter().all(|c| c.passed || !c.mandatory);
            for c in &checks {
                lines.push(format!(
                    "{} {}: {:e} (threshold {:e})",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                ));
            }
            out.write_json(
                "validation.json",
                &ValidateReport {
                    grid: grid_info(&problem),
                    oracle_skipped,
                    checks,
                    passed,
                },
            )?;
            passed
        }
    };
    timings.insert(command.name().to_string(), elapsed_ms(start));
    let files = out.finish(command.name(), cfg, &timings)?;
    Ok(RunSummary {
        lines,
        files,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn config(extra: &str) -> ExperimentConfig {
        parse_config_str(&format!(
            r#"{{"domain": {{"dimension": 1}}, "resolution": 31, "T": 1, "N_t": 64{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn eigenfunction_follows_the_box() {
        let mut cfg = config(r#", "gamma": {"eigenfunction": [2]}"#);
        cfg.domain.bounds = Some(vec![[1.0, 3.0]]);
        let p = Problem::build(&cfg).unwrap();
        let x = p.grid.coordinates(7)[0];
        let expected = (2.0 * PI * (x - 1.0) / 2.0).sin();
        assert!((p.gamma.values()[7] - expected).abs() < 1e-15);
        // a sign-changing mode cannot be normalized
        assert!(!p.gamma.is_nonnegative());
    }

    #[test]
    fn nonneg_inferred_or_enforced() {
        let p = Problem::build(&config(r#", "gamma": {"eigenfunction": [1]}"#)).unwrap();
        assert!(p.gamma.is_nonnegative());
        let e = Problem::build(&config(
            r#", "gamma": {"eigenfunction": [2], "nonneg": true}"#,
        ))
        .err()
        .unwrap();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn table_length_is_checked() {
        let e = Problem::build(&config(r#", "gamma": {"table": [1, 2]}"#))
            .err()
            .unwrap();
        assert!(e.to_string().contains("gamma.table"));
    }

    #[test]
    fn centered_drift_is_not_certified() {
        let cfg = config(
            r#", "advection_mode": "centered", "coefficients": {"preset": "drift", "drift": [1]},
               "gamma": {"eigenfunction": [1]}"#,
        );
        let p = Problem::build(&cfg).unwrap();
        assert!(!p.positivity_guaranteed());
    }

    #[test]
    fn exit_codes_by_family() {
        assert_eq!(
            CliError::from(FredholmError::TooLarge { m: 5000, cap: 4096 }).exit_code(),
            5
        );
        assert_eq!(
            CliError::from(FredholmError::NoConvergence {
                iterations: 3,
                residual: 1.0
            })
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(FredholmError::NonpositiveMass(0.0)).exit_code(),
            4
        );
        assert_eq!(
            CliError::from(ValidationError::UnknownCase("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(PropagatorError::InnerSolveFailure {
                t: 0.0,
                reason: "pivot".into()
            })
            .exit_code(),
            3
        );
    }

    #[test]
    fn convergence_needs_closed_form() {
        let ok = config(
            r#", "coefficients": {"preset": "absorb", "absorption": 0.5}, "gamma": {"eigenfunction": [3]}"#,
        );
        let case = analytic_case(&ok).unwrap();
        assert_eq!(case.modes[0], 3);
        assert_eq!(case.absorption, 0.5);
        let drift = config(
            r#", "coefficients": {"preset": "drift", "drift": [1]}, "gamma": {"eigenfunction": [1]}"#,
        );
        assert_eq!(analytic_case(&drift).err().unwrap().exit_code(), 2);
        let table = config(r#", "gamma": {"table": [0]}"#);
        assert_eq!(analytic_case(&table).err().unwrap().exit_code(), 2);
    }
}
