//! Initial-value propagation with the implicit θ-scheme.
//!
//! One step solves `(I − θ·dt·A(t+dt)) u⁺ = (I + (1−θ)·dt·A(t)) u`. For
//! time-independent coefficients the left-hand matrix is factored once and
//! reused for every step and every propagation; otherwise generators are
//! re-assembled and re-factored per step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::operator::{assemble, AdvectionMode, CoefficientError, CoefficientField};
use crate::sparse::{BandedLu, CsrMatrix, FactorError};

/// Required relative residual of each inner linear solve.
pub const INNER_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error(transparent)]
    Coefficients(#[from] CoefficientError),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("inner solve failed at t = {t}: {reason}")]
    InnerSolveFailure { t: f64, reason: String },
    #[error("start time {0} is not a node of the time grid")]
    StartOffGrid(f64),
    #[error("state has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    theta: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize, theta: f64) -> Result<Self, PropagatorError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PropagatorError::InvalidTimeGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps < 1 {
            return Err(PropagatorError::InvalidTimeGrid(
                "at least one time step is required".into(),
            ));
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(PropagatorError::InvalidTimeGrid(format!(
                "theta must lie in [0.5, 1], got {theta}"
            )));
        }
        Ok(Self {
            horizon,
            steps,
            theta,
        })
    }

    /// Backward Euler.
    pub fn backward_euler(horizon: f64, steps: usize) -> Result<Self, PropagatorError> {
        Self::new(horizon, steps, 1.0)
    }

    pub fn crank_nicolson(horizon: f64, steps: usize) -> Result<Self, PropagatorError> {
        Self::new(horizon, steps, 0.5)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of node `k`; node `steps` is exactly the horizon.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    /// Index of the node at time `s`, if `s` is (to rounding) a node.
    pub fn node_of(&self, s: f64) -> Option<usize> {
        let k = (s / self.dt()).round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - s).abs() <= 1e-9 * self.horizon).then_some(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSlice {
    pub t: f64,
    pub values: Vec<f64>,
}

impl StateSlice {
    pub fn new(t: f64, values: Vec<f64>) -> Self {
        Self { t, values }
    }

    pub fn zeros(t: f64, len: usize) -> Self {
        Self::new(t, vec![0.0; len])
    }
}

/// Time slices of a solution, first at the start time and last at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub slices: Vec<StateSlice>,
    pub time_grid: TimeGrid,
}

impl Trajectory {
    pub fn first(&self) -> &StateSlice {
        &self.slices[0]
    }

    pub fn last(&self) -> &StateSlice {
        self.slices
            .last()
            .expect("trajectory has at least one slice")
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Multiplies every slice by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            slices: self
                .slices
                .iter()
                .map(|s| StateSlice::new(s.t, s.values.iter().map(|v| v * factor).collect()))
                .collect(),
            time_grid: self.time_grid,
        }
    }
}

/// Result of [`Propagator::propagate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Propagated {
    Trajectory(Trajectory),
    Terminal(StateSlice),
}

/// Factored step `(I − θ dt A₊) u⁺ = (I + (1−θ) dt A) u`.
#[derive(Debug, Clone)]
struct StepOperator {
    implicit: CsrMatrix,
    explicit: Option<CsrMatrix>,
    lu: BandedLu,
}

impl StepOperator {
    fn build(
        coeffs: &CoefficientField,
        grid: &Grid,
        t: f64,
        dt: f64,
        theta: f64,
        mode: AdvectionMode,
    ) -> Result<Self, PropagatorError> {
        let next = assemble(coeffs, grid, t + dt, mode)?;
        let implicit = next.matrix.scale_shift(-theta * dt, 1.0);
        let explicit = if theta < 1.0 {
            let now = if coeffs.is_time_dependent() {
                assemble(coeffs, grid, t, mode)?.matrix
            } else {
                next.matrix
            };
            Some(now.scale_shift((1.0 - theta) * dt, 1.0))
        } else {
            None
        };
        let lu = BandedLu::factor(&implicit).map_err(|e: FactorError| {
            PropagatorError::InnerSolveFailure {
                t: t + dt,
                reason: e.to_string(),
            }
        })?;
        Ok(Self {
            implicit,
            explicit,
            lu,
        })
    }

    fn apply(&self, u: &[f64], t_next: f64) -> Result<Vec<f64>, PropagatorError> {
        let n = u.len();
        let rhs = match &self.explicit {
            Some(b) => {
                let mut r = vec![0.0; n];
                b.mul_vec(u, &mut r);
                r
            }
            None => u.to_vec(),
        };
        let mut x = rhs.clone();
        self.lu.solve_in_place(&mut x);

        let rhs_norm = norm2(&rhs);
        let mut ax = vec![0.0; n];
        let mut residual = |x: &[f64], r: &mut Vec<f64>| {
            self.implicit.mul_vec(x, &mut ax);
            for i in 0..n {
                r[i] = rhs[i] - ax[i];
            }
            norm2(r)
        };
        let mut r = vec![0.0; n];
        let mut res = residual(&x, &mut r);
        if res > INNER_TOL * rhs_norm {
            // one step of iterative refinement
            self.lu.solve_in_place(&mut r);
            for i in 0..n {
                x[i] += r[i];
            }
            res = residual(&x, &mut r);
        }
        if !(res <= INNER_TOL * rhs_norm) {
            return Err(PropagatorError::InnerSolveFailure {
                t: t_next,
                reason: format!("relative residual {:e}", res / rhs_norm),
            });
        }
        Ok(x)
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solution operators of the initial-value problem on a fixed grid and time grid.
#[derive(Debug, Clone)]
pub struct Propagator {
    coeffs: CoefficientField,
    grid: Grid,
    time_grid: TimeGrid,
    mode: AdvectionMode,
    m_matrix_certified: bool,
    /// Shared factorization when the coefficients do not depend on time.
    frozen: Option<StepOperator>,
}

impl Propagator {
    pub fn new(
        coeffs: CoefficientField,
        grid: Grid,
        time_grid: TimeGrid,
        mode: AdvectionMode,
    ) -> Result<Self, PropagatorError> {
        let dt = time_grid.dt();
        let first = assemble(&coeffs, &grid, 0.0, mode)?;
        let mut m_matrix_certified = first.m_matrix_certified;
        let frozen = if coeffs.is_time_dependent() {
            for k in 1..=time_grid.steps() {
                let g = assemble(&coeffs, &grid, time_grid.time(k), mode)?;
                m_matrix_certified &= g.m_matrix_certified;
            }
            None
        } else {
            Some(StepOperator::build(
                &coeffs,
                &grid,
                0.0,
                dt,
                time_grid.theta(),
                mode,
            )?)
        };
        Ok(Self {
            coeffs,
            grid,
            time_grid,
            mode,
            m_matrix_certified,
            frozen,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn advection_mode(&self) -> AdvectionMode {
        self.mode
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// True when every generator on the time grid is an M-matrix.
    pub fn m_matrix_certified(&self) -> bool {
        self.m_matrix_certified
    }

    fn check_len(&self, len: usize) -> Result<(), PropagatorError> {
        if len != self.dim() {
            return Err(PropagatorError::LengthMismatch {
                got: len,
                expected: self.dim(),
            });
        }
        Ok(())
    }

    /// Advances one step from node `k` to node `k + 1`.
    fn step_from(&self, k: usize, u: &[f64]) -> Result<Vec<f64>, PropagatorError> {
        let t_next = self.time_grid.time(k + 1);
        match &self.frozen {
            Some(op) => op.apply(u, t_next),
            None => StepOperator::build(
                &self.coeffs,
                &self.grid,
                self.time_grid.time(k),
                self.time_grid.dt(),
                self.time_grid.theta(),
                self.mode,
            )?
            .apply(u, t_next),
        }
    }

    /// Propagates `xi` from time `s` (a time-grid node) to the horizon.
    pub fn propagate(
        &self,
        xi: &[f64],
        s: f64,
        keep_trajectory: bool,
    ) -> Result<Propagated, PropagatorError> {
        self.check_len(xi.len())?;
        let start = self
            .time_grid
            .node_of(s)
            .ok_or(PropagatorError::StartOffGrid(s))?;
        let mut u = xi.to_vec();
        let mut slices = Vec::new();
        if keep_trajectory {
            slices.reserve(self.time_grid.steps() - start + 1);
            slices.push(StateSlice::new(self.time_grid.time(start), u.clone()));
        }
        for k in start..self.time_grid.steps() {
            u = self.step_from(k, &u)?;
            if keep_trajectory {
                slices.push(StateSlice::new(self.time_grid.time(k + 1), u.clone()));
            }
        }
        Ok(if keep_trajectory {
            Propagated::Trajectory(Trajectory {
                slices,
                time_grid: self.time_grid,
            })
        } else {
            Propagated::Terminal(StateSlice::new(self.time_grid.horizon(), u))
        })
    }

    /// All slices from `s` to the horizon.
    pub fn trajectory(&self, xi: &[f64], s: f64) -> Result<Trajectory, PropagatorError> {
        match self.propagate(xi, s, true)? {
            Propagated::Trajectory(t) => Ok(t),
            Propagated::Terminal(_) => unreachable!(),
        }
    }

    /// Terminal slice only.
    pub fn terminal(&self, xi: &[f64], s: f64) -> Result<StateSlice, PropagatorError> {
        match self.propagate(xi, s, false)? {
            Propagated::Terminal(t) => Ok(t),
            Propagated::Trajectory(_) => unreachable!(),
        }
    }

    /// The time-horizon propagator: `xi ↦ u(·, T)` with `u(·, 0) = xi`.
    pub fn apply_q(&self, xi: &[f64]) -> Result<Vec<f64>, PropagatorError> {
        Ok(self.terminal(xi, 0.0)?.values)
    }

    /// Dense matrix of a single time step, available for time-independent coefficients.
    pub fn dense_step_operator(&self) -> Option<nalgebra::DMatrix<f64>> {
        let op = self.frozen.as_ref()?;
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let rhs = match &op.explicit {
                Some(b) => {
                    let mut r = vec![0.0; n];
                    b.mul_vec(&e, &mut r);
                    r
                }
                None => e.clone(),
            };
            let mut col = rhs;
            op.lu.solve_in_place(&mut col);
            m.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        Some(m)
    }
}

/// A single θ-step from `u.t` to `u.t + dt`.
pub fn step(
    u: &StateSlice,
    coeffs: &CoefficientField,
    grid: &Grid,
    dt: f64,
    theta: f64,
    mode: AdvectionMode,
) -> Result<StateSlice, PropagatorError> {
    if !(dt > 0.0) {
        return Err(PropagatorError::InvalidTimeGrid(format!(
            "step size must be positive, got {dt}"
        )));
    }
    if !(0.5..=1.0).contains(&theta) {
        return Err(PropagatorError::InvalidTimeGrid(format!(
            "theta must lie in [0.5, 1], got {theta}"
        )));
    }
    if u.values.len() != grid.len() {
        return Err(PropagatorError::LengthMismatch {
            got: u.values.len(),
            expected: grid.len(),
        });
    }
    let op = StepOperator::build(coeffs, grid, u.t, dt, theta, mode)?;
    let values = op.apply(&u.values, u.t + dt)?;
    Ok(StateSlice::new(u.t + dt, values))
}
