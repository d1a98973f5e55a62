//! Parabolic diffusion with a prescribed change of profile over a fixed horizon.
//!
//! Given a generator `A` (diffusion, drift, absorption) with homogeneous
//! Dirichlet data on a domain `D`, find `u` with `∂u/∂t = A u` on `(0, T)` and
//!
//! ```text
//! u(·, 0) = u(·, T) + γ.
//! ```
//!
//! The solution is built from the horizon propagator `Q`: solve
//! `(I − Q) ζ = γ` by GMRES, then propagate `ζ` forward. For nonnegative `γ`
//! the result is rescaled to unit initial mass.
//!
//! Modules, bottom-up: [`grid`], [`operator`], [`propagator`], [`fredholm`],
//! [`validation`]. [`sparse`] and [`krylov`] hold the linear-algebra kernels.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::needless_range_loop
)]

pub mod fredholm;
pub mod grid;
pub mod krylov;
pub mod operator;
pub mod propagator;
pub mod sparse;
pub mod validation;

pub use fredholm::{
    dense_propagator, normalize, solve_profile_shift, spectral_analysis, FredholmError,
    FredholmReport, ProfileShift, SolverOptions, SpectralAnalysis,
};
pub use grid::{build_grid, Domain, Grid, GridError, Mask};
pub use operator::{assemble, validate_coefficients, AdvectionMode, CoefficientField, Field};
pub use propagator::{Propagator, PropagatorError, StateSlice, TimeGrid, Trajectory};
pub use validation::{
    check_fixed_shift, check_mass, check_positivity, compare_posedness, convergence_study,
    PosednessReport, PrincipleReport, ProblemSetup,
};
