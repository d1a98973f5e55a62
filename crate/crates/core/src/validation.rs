//! Grid-level checks: the profile-shift identity, positivity, unit mass,
//! the conditioning contrast between the shift problem and the backward
//! problem, and refinement studies against closed-form solutions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fredholm::{
    backward_log10_condition, dense_propagator, shift_residual, solve_profile_shift,
    spectral_analysis, FredholmError, ProfileShift, SolverOptions,
};
use crate::grid::{build_grid, Domain, Grid, GridError};
use crate::operator::{AdvectionMode, CoefficientField};
use crate::propagator::{Propagator, PropagatorError, TimeGrid, Trajectory};

pub const DEFAULT_POSITIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("unknown analytic case {0:?}")]
    UnknownCase(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Fredholm(#[from] FredholmError),
    #[error("resolution list must be non-empty and strictly increasing")]
    BadLadder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedShiftCheck {
    pub relative_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Relative residual of `u(·,0) = u(·,T) + γ`.
pub fn check_fixed_shift(trajectory: &Trajectory, gamma: &[f64], tol: f64) -> FixedShiftCheck {
    let relative_residual = shift_residual(trajectory, gamma);
    FixedShiftCheck {
        relative_residual,
        tol,
        passed: relative_residual <= tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleReport {
    pub min_value_global: f64,
    /// Minimum over all nodes at `t ≥ dt`; `None` for single-slice trajectories.
    pub min_interior_positive_time: Option<f64>,
    pub violation_count: usize,
    pub positivity_tol: f64,
}

impl PrincipleReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

pub fn check_positivity(trajectory: &Trajectory, positivity_tol: f64) -> PrincipleReport {
    let mut min_value_global = f64::INFINITY;
    let mut min_later: Option<f64> = None;
    let mut violation_count = 0;
    for (k, slice) in trajectory.slices.iter().enumerate() {
        let m = slice.values.iter().copied().fold(f64::INFINITY, f64::min);
        min_value_global = min_value_global.min(m);
        if k > 0 {
            min_later = Some(min_later.map_or(m, |v| v.min(m)));
        }
        violation_count += slice
            .values
            .iter()
            .filter(|v| **v < -positivity_tol)
            .count();
    }
    PrincipleReport {
        min_value_global,
        min_interior_positive_time: min_later,
        violation_count,
        positivity_tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPositivity {
    pub component: usize,
    pub nodes: usize,
    /// Whether `γ` has a positive entry in this component.
    pub supports_shift: bool,
    pub min_terminal: f64,
    pub max_abs_terminal: f64,
}

impl ComponentPositivity {
    /// Strictly positive where `γ` is supported, identically zero elsewhere.
    pub fn consistent(&self) -> bool {
        if self.supports_shift {
            self.min_terminal > 0.0
        } else {
            self.max_abs_terminal == 0.0
        }
    }
}

/// Terminal-slice positivity per connected component of the grid.
pub fn check_component_positivity(
    trajectory: &Trajectory,
    grid: &Grid,
    gamma: &[f64],
) -> Vec<ComponentPositivity> {
    let (labels, count) = grid.components();
    let terminal = &trajectory.last().values;
    let mut out: Vec<ComponentPositivity> = (0..count)
        .map(|component| ComponentPositivity {
            component,
            nodes: 0,
            supports_shift: false,
            min_terminal: f64::INFINITY,
            max_abs_terminal: 0.0,
        })
        .collect();
    for (i, &c) in labels.iter().enumerate() {
        let e = &mut out[c];
        e.nodes += 1;
        e.supports_shift |= gamma[i] > 0.0;
        e.min_terminal = e.min_terminal.min(terminal[i]);
        e.max_abs_terminal = e.max_abs_terminal.max(terminal[i].abs());
    }
    out
}

/// `|∫ p(x,0) dx − 1|` by the midpoint rule.
pub fn check_mass(p_trajectory: &Trajectory, grid: &Grid) -> f64 {
    (grid.integrate(&p_trajectory.first().values) - 1.0).abs()
}

/// Everything needed to build a propagator except the resolution.
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub domain: Domain,
    pub coefficients: CoefficientField,
    pub time_grid: TimeGrid,
    pub advection: AdvectionMode,
}

impl ProblemSetup {
    pub fn propagator(&self, nodes_per_axis: &[usize]) -> Result<Propagator, ValidationError> {
        let grid = build_grid(self.domain.clone(), nodes_per_axis)?;
        Ok(Propagator::new(
            self.coefficients.clone(),
            grid,
            self.time_grid,
            self.advection,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosednessRecord {
    pub nodes_per_axis: usize,
    pub m: usize,
    pub cond_i_minus_q: f64,
    pub log10_cond_q: f64,
    /// Saturated dense-SVD value, kept for reference.
    pub cond_q_svd: f64,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosednessReport {
    pub records: Vec<PosednessRecord>,
    /// Least-squares slope of `ln cond(Q_h)` against `M²`.
    pub log_cond_q_slope_vs_m2: f64,
    pub max_cond_i_minus_q: f64,
}

/// Conditioning of `I − Q_h` (shift problem) and `Q_h` (backward problem)
/// across resolutions. Each entry of `resolutions` is a node count per axis.
pub fn compare_posedness(
    setup: &ProblemSetup,
    resolutions: &[usize],
    cap: usize,
) -> Result<PosednessReport, ValidationError> {
    if resolutions.is_empty() || resolutions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ValidationError::BadLadder);
    }
    let dim = setup.domain.dimension();
    let mut records = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let prop = setup.propagator(&vec![n; dim])?;
        let q = dense_propagator(&prop, cap)?;
        let s = spectral_analysis(&q)?;
        let log10_cond_q = backward_log10_condition(&prop, &q)?;
        records.push(PosednessRecord {
            nodes_per_axis: n,
            m: prop.dim(),
            cond_i_minus_q: s.cond_i_minus_q,
            log10_cond_q,
            cond_q_svd: s.cond_q,
            spectral_radius: s.spectral_radius,
        });
    }
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| ((r.m * r.m) as f64, r.log10_cond_q * std::f64::consts::LN_10))
        .collect();
    let max_cond_i_minus_q = records.iter().map(|r| r.cond_i_minus_q).fold(0.0, f64::max);
    Ok(PosednessReport {
        records,
        log_cond_q_slope_vs_m2: least_squares_slope(&pts),
        max_cond_i_minus_q,
    })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Eigenfunction shift on `(0, π)ⁿ` with constant absorption, where every
/// quantity has a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCase {
    pub dimension: usize,
    /// Mode numbers per axis; `γ = Π sin(k_i x_i)`.
    pub modes: [usize; 2],
    pub absorption: f64,
    pub horizon: f64,
}

impl AnalyticCase {
    /// Parses `heat1d`, `heat2d`, optionally followed by `:k=<k>` (or `:k=<kx>,<ky>`),
    /// `:q=<rate>` and `:T=<horizon>`.
    pub fn parse(id: &str) -> Result<Self, ValidationError> {
        let unknown = || ValidationError::UnknownCase(id.to_string());
        let mut parts = id.split(':');
        let dimension = match parts.next() {
            Some("heat1d") => 1,
            Some("heat2d") => 2,
            _ => return Err(unknown()),
        };
        let mut case = AnalyticCase {
            dimension,
            modes: [1, if dimension == 2 { 1 } else { 0 }],
            absorption: 0.0,
            horizon: 1.0,
        };
        for part in parts {
            let (key, value) = part.split_once('=').ok_or_else(unknown)?;
            match key {
                "k" => {
                    let ks: Vec<usize> = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| unknown())?;
                    if ks.len() != dimension || ks.contains(&0) {
                        return Err(unknown());
                    }
                    case.modes[..dimension].copy_from_slice(&ks);
                }
                "q" => {
                    case.absorption = value.parse().map_err(|_| unknown())?;
                    if !(case.absorption >= 0.0) {
                        return Err(unknown());
                    }
                }
                "T" => {
                    case.horizon = value.parse().map_err(|_| unknown())?;
                    if !(case.horizon > 0.0) {
                        return Err(unknown());
                    }
                }
                _ => return Err(unknown()),
            }
        }
        Ok(case)
    }

    pub fn domain(&self) -> Domain {
        let b = vec![(0.0, std::f64::consts::PI); self.dimension];
        Domain::new(b, None).expect("box is valid")
    }

    pub fn coefficients(&self) -> CoefficientField {
        CoefficientField::absorb(self.absorption)
    }

    pub fn gamma(&self, grid: &Grid) -> Vec<f64> {
        let k = self.modes;
        grid.sample(|x| {
            x.iter()
                .zip(k)
                .map(|(xi, ki)| (ki as f64 * xi).sin())
                .product()
        })
    }

    /// Decay rate of the eigenfunction: continuum `Σ k²`, or the discrete
    /// Laplacian eigenvalue when `spacing` is given, plus the absorption.
    pub fn decay_rate(&self, spacing: Option<&[f64]>) -> f64 {
        let lap: f64 = (0..self.dimension)
            .map(|axis| {
                let k = self.modes[axis] as f64;
                match spacing {
                    None => k * k,
                    Some(h) => 4.0 / (h[axis] * h[axis]) * (k * h[axis] / 2.0).sin().powi(2),
                }
            })
            .sum();
        lap + self.absorption
    }
}

/// What the discrete solution is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Exact solution of the PDE.
    #[default]
    Continuum,
    /// Exact-in-time solution of the spatially discretized system; isolates the time error.
    SemiDiscrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nodes_per_axis: usize,
    pub steps: usize,
    pub h: f64,
    pub dt: f64,
    pub error_initial: f64,
    pub error_terminal: f64,
    /// `|μ_h − μ|` for the Rayleigh quotient `μ_h` of `Q_h` on the eigenfunction.
    pub error_propagator: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// `h` varies (with `dt` fixed or proportional to `h`); orders are w.r.t. `h`.
    Space,
    /// Only `dt` varies; orders are w.r.t. `dt`.
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub case: AnalyticCase,
    pub theta: f64,
    pub reference: Reference,
    pub refinement: Refinement,
    pub rows: Vec<ConvergenceRow>,
    /// Ratios `error_initial[i] / error_initial[i+1]`.
    pub error_ratios: Vec<f64>,
    /// Pairwise observed orders of `error_initial`.
    pub observed_orders: Vec<f64>,
    /// Least-squares slope of `log error_initial` against `log h` (or `log dt`).
    pub fitted_order: f64,
}

/// Runs the shift solve on each `(nodes_per_axis, steps)` rung and compares
/// with the closed form `ζ = γ / (1 − e^{−λT})`, `u(·,t) = e^{−λt} ζ`.
pub fn convergence_study(
    case: &AnalyticCase,
    ladder: &[(usize, usize)],
    theta: f64,
    reference: Reference,
    opts: &SolverOptions,
) -> Result<ConvergenceStudy, ValidationError> {
    if ladder.len() < 2 {
        return Err(ValidationError::BadLadder);
    }
    let mut rows = Vec::with_capacity(ladder.len());
    for &(n, steps) in ladder {
        let grid = build_grid(case.domain(), &vec![n; case.dimension])?;
        let h = grid.spacing()[0];
        let lambda = match reference {
            Reference::Continuum => case.decay_rate(None),
            Reference::SemiDiscrete => case.decay_rate(Some(grid.spacing())),
        };
        let tg = TimeGrid::new(case.horizon, steps, theta)?;
        let prop = Propagator::new(case.coefficients(), grid, tg, AdvectionMode::Upwind)?;
        let gamma = case.gamma(prop.grid());
        let (traj, _) = solve_profile_shift(&ProfileShift::new(gamma.clone())?, &prop, opts)?;

        let mu = (-lambda * case.horizon).exp();
        let scale = 1.0 / (1.0 - mu);
        let err = |vals: &[f64], factor: f64| {
            vals.iter()
                .zip(&gamma)
                .fold(0.0f64, |m, (u, g)| m.max((u - factor * g).abs()))
        };
        let qg = prop.apply_q(&gamma)?;
        let gg: f64 = gamma.iter().map(|g| g * g).sum();
        let mu_h = qg.iter().zip(&gamma).map(|(a, b)| a * b).sum::<f64>() / gg;
        rows.push(ConvergenceRow {
            nodes_per_axis: n,
            steps,
            h,
            dt: tg.dt(),
            error_initial: err(&traj.first().values, scale),
            error_terminal: err(&traj.last().values, mu * scale),
            error_propagator: (mu_h - mu).abs(),
        });
    }
    let refinement = if rows.windows(2).all(|w| w[0].h == w[1].h) {
        Refinement::Time
    } else {
        Refinement::Space
    };
    let param = |r: &ConvergenceRow| match refinement {
        Refinement::Space => r.h,
        Refinement::Time => r.dt,
    };
    let error_ratios = rows
        .windows(2)
        .map(|w| w[0].error_initial / w[1].error_initial)
        .collect();
    let observed_orders = rows
        .windows(2)
        .map(|w| {
            (w[0].error_initial / w[1].error_initial).ln() / (param(&w[0]) / param(&w[1])).ln()
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (param(r).ln(), r.error_initial.ln()))
        .collect();
    Ok(ConvergenceStudy {
        case: *case,
        theta,
        reference,
        refinement,
        rows,
        error_ratios,
        observed_orders,
        fitted_order: least_squares_slope(&pts),
    })
}
