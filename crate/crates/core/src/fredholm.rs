//! The profile-shift problem `u(·,0) = u(·,T) + γ`.
//!
//! Writing `Q` for the horizon propagator, the initial profile `ζ = u(·,0)`
//! solves `(I − Q) ζ = γ`; the trajectory is then the forward propagation of
//! `ζ`. For nonnegative, nontrivial `γ` the solution is rescaled by
//! `α = (∫ u(x,0) dx)⁻¹` into a unit-mass solution `p = α u` whose profile
//! shift is `α γ`.
//!
//! The dense propagator matrix (one propagation per basis vector) serves as an
//! independent oracle for the matrix-free solve and for spectral diagnostics.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::krylov::{gmres, GmresError, GmresOptions, LinearOperator};
use crate::propagator::{norm2, Propagator, PropagatorError, Trajectory};

/// Largest system for which dense matrices are formed by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FredholmError {
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error("invalid profile shift: {0}")]
    InvalidShift(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("Krylov solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("a-posteriori check failed: relative residual {residual:e} exceeds {tol:e}")]
    PostCheckFailure { residual: f64, tol: f64 },
    #[error("initial profile has non-positive mass {0:e}")]
    NonpositiveMass(f64),
    #[error("{m} unknowns exceed the dense-oracle cap of {cap}")]
    TooLarge { m: usize, cap: usize },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// Grid samples of the prescribed change of profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileShift {
    values: Vec<f64>,
    nonneg: bool,
}

impl ProfileShift {
    /// Signed shift.
    pub fn new(values: Vec<f64>) -> Result<Self, FredholmError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FredholmError::InvalidShift(format!(
                "entry {i} is not finite"
            )));
        }
        Ok(Self {
            values,
            nonneg: false,
        })
    }

    /// Nonnegative, nontrivial shift requesting the normalized solution.
    pub fn nonnegative(values: Vec<f64>) -> Result<Self, FredholmError> {
        let mut s = Self::new(values)?;
        if let Some(i) = s.values.iter().position(|v| *v < 0.0) {
            return Err(FredholmError::InvalidShift(format!(
                "entry {i} is negative ({})",
                s.values[i]
            )));
        }
        if !s.values.iter().any(|v| *v > 0.0) {
            return Err(FredholmError::InvalidShift(
                "nonnegative shift must have a positive entry".into(),
            ));
        }
        s.nonneg = true;
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonneg
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            restart: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmReport {
    pub zeta: Vec<f64>,
    pub iterations: usize,
    /// `‖u(·,0) − u(·,T) − γ‖₂ / ‖γ‖₂` of the returned trajectory.
    pub relative_residual: f64,
    pub alpha: Option<f64>,
    /// 2-norm condition number of `I − Q`, when an oracle was consulted.
    pub cond_estimate: Option<f64>,
}

/// `x ↦ x − Q x`.
struct ShiftOperator<'a>(&'a Propagator);

impl LinearOperator for ShiftOperator<'_> {
    type Error = PropagatorError;

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), PropagatorError> {
        let qx = self.0.apply_q(x)?;
        for i in 0..x.len() {
            y[i] = x[i] - qx[i];
        }
        Ok(())
    }
}

/// `‖u(·,0) − u(·,T) − γ‖₂ / max(‖γ‖₂, floor)`.
pub(crate) fn shift_residual(trajectory: &Trajectory, gamma: &[f64]) -> f64 {
    let first = &trajectory.first().values;
    let last = &trajectory.last().values;
    let r: Vec<f64> = (0..gamma.len())
        .map(|i| first[i] - last[i] - gamma[i])
        .collect();
    norm2(&r) / norm2(gamma).max(f64::MIN_POSITIVE)
}

/// Solves `(I − Q) ζ = γ` matrix-free and returns the trajectory started from `ζ`.
pub fn solve_profile_shift(
    gamma: &ProfileShift,
    propagator: &Propagator,
    opts: &SolverOptions,
) -> Result<(Trajectory, FredholmReport), FredholmError> {
    if gamma.len() != propagator.dim() {
        return Err(FredholmError::InvalidShift(format!(
            "shift has {} entries, grid has {}",
            gamma.len(),
            propagator.dim()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(FredholmError::InvalidOptions(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let outcome = gmres(
        &ShiftOperator(propagator),
        gamma.values(),
        &GmresOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
            restart: opts.restart,
        },
    )
    .map_err(|e| match e {
        GmresError::NoConvergence {
            iterations,
            residual,
        } => FredholmError::NoConvergence {
            iterations,
            residual,
        },
        GmresError::Operator(p) => FredholmError::Propagator(p),
        GmresError::DimensionMismatch { got, expected } => {
            FredholmError::InvalidShift(format!("shift has {got} entries, grid has {expected}"))
        }
    })?;

    let trajectory = propagator.trajectory(&outcome.x, 0.0)?;
    let residual = if gamma.values().iter().all(|v| *v == 0.0) {
        norm2(&trajectory.first().values) + norm2(&trajectory.last().values)
    } else {
        shift_residual(&trajectory, gamma.values())
    };
    if !(residual <= opts.tol) {
        return Err(FredholmError::PostCheckFailure {
            residual,
            tol: opts.tol,
        });
    }
    let report = FredholmReport {
        zeta: outcome.x,
        iterations: outcome.iterations,
        relative_residual: residual,
        alpha: None,
        cond_estimate: None,
    };
    Ok((trajectory, report))
}

/// Rescales a trajectory to unit initial mass; returns `(α, α·u)`.
pub fn normalize(trajectory: &Trajectory, grid: &Grid) -> Result<(f64, Trajectory), FredholmError> {
    let mass = grid.integrate(&trajectory.first().values);
    if !(mass > 0.0) {
        return Err(FredholmError::NonpositiveMass(mass));
    }
    let alpha = 1.0 / mass;
    Ok((alpha, trajectory.scaled(alpha)))
}

/// Dense matrix of `Q`, column `j` being the propagation of the `j`-th basis vector.
pub fn dense_propagator(
    propagator: &Propagator,
    cap: usize,
) -> Result<DMatrix<f64>, FredholmError> {
    let m = propagator.dim();
    if m > cap {
        return Err(FredholmError::TooLarge { m, cap });
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            propagator.apply_q(&e)
        })
        .collect::<Result<_, _>>()?;
    Ok(DMatrix::from_fn(m, m, |i, j| columns[j][i]))
}

/// Direct solve of `(I − Q_h) ζ = γ` against a dense propagator matrix.
pub fn dense_solve(q: &DMatrix<f64>, gamma: &[f64]) -> Result<Vec<f64>, FredholmError> {
    let n = q.nrows();
    let a = DMatrix::identity(n, n) - q;
    a.lu()
        .solve(&DVector::from_column_slice(gamma))
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| FredholmError::NumericalBreakdown("I − Q is singular".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAnalysis {
    pub spectral_radius: f64,
    pub cond_i_minus_q: f64,
    /// From the singular values of the dense matrix; saturates near `1/ε`
    /// once the smallest singular value drops below rounding level.
    pub cond_q: f64,
    /// Eigenvalues of `Q` as `(re, im)` pairs, by decreasing modulus.
    pub eigenvalues: Vec<(f64, f64)>,
    pub singular_values: Vec<f64>,
}

const EIG_MAX_ITER: usize = 10_000;

fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>, FredholmError> {
    let svd = nalgebra::SVD::try_new(m.clone(), false, false, f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| FredholmError::NumericalBreakdown("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, FredholmError> {
    let schur =
        nalgebra::Schur::try_new(m.clone(), f64::EPSILON, EIG_MAX_ITER).ok_or_else(|| {
            FredholmError::NumericalBreakdown("Schur iteration did not converge".into())
        })?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(ev)
}

fn cond_from(s: &[f64]) -> f64 {
    let (hi, lo) = (s[0], s[s.len() - 1]);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Eigenvalues, spectral radius and 2-norm conditioning of `Q_h` and `I − Q_h`.
pub fn spectral_analysis(q: &DMatrix<f64>) -> Result<SpectralAnalysis, FredholmError> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n {
        return Err(FredholmError::NumericalBreakdown(format!(
            "expected a non-empty square matrix, got {}x{}",
            n,
            q.ncols()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(FredholmError::NumericalBreakdown(
            "matrix has non-finite entries".into(),
        ));
    }
    let ev = eigenvalues(q)?;
    let sv_q = singular_values(q)?;
    let sv_shift = singular_values(&(DMatrix::identity(n, n) - q))?;
    Ok(SpectralAnalysis {
        spectral_radius: ev[0].norm(),
        cond_i_minus_q: cond_from(&sv_shift),
        cond_q: cond_from(&sv_q),
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
        singular_values: sv_q,
    })
}

/// Dense-SVD condition numbers above this are dominated by rounding.
const SVD_RESOLVED_COND: f64 = 1e12;

/// `log₁₀ cond₂(Q_h)` resolved beyond the reach of a dense SVD.
///
/// For time-independent coefficients `Q_h = S^N` with `S` the one-step
/// operator, which is itself well conditioned. Since `σ_max(S^N) ≥ ρ(S)^N`
/// and `σ_min(S^N) ≤ min|μ(S)|^N`, the ratio of extreme eigenvalue moduli of
/// `S`, raised to `N`, bounds `cond₂(Q_h)` from below; it is exact when `S`
/// is normal (symmetric generators). A dense-SVD value still in the resolved
/// range is used when larger. With time-dependent coefficients only the
/// (possibly saturated) SVD value is available.
pub fn backward_log10_condition(
    propagator: &Propagator,
    q: &DMatrix<f64>,
) -> Result<f64, FredholmError> {
    let svd_cond = cond_from(&singular_values(q)?);
    let Some(step) = propagator.dense_step_operator() else {
        return Ok(svd_cond.log10());
    };
    let svd_bound = if svd_cond < SVD_RESOLVED_COND {
        svd_cond.log10()
    } else {
        0.0
    };
    let ev = eigenvalues(&step)?;
    let hi = ev[0].norm();
    let lo = ev[ev.len() - 1].norm();
    if lo == 0.0 {
        return Ok(f64::INFINITY);
    }
    let steps = propagator.time_grid().steps() as f64;
    Ok(svd_bound.max(steps * (hi.log10() - lo.log10())))
}
