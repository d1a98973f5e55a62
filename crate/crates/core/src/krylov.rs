//! Restarted GMRES for operators that are only available through their action.

use thiserror::Error;

use crate::propagator::norm2;

/// A square linear map `y = A x`.
pub trait LinearOperator {
    type Error;

    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<(), Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Relative residual target `‖b − A x‖ / ‖b‖`.
    pub tol: f64,
    /// Total Arnoldi steps across all restart cycles.
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            restart: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual of the returned iterate, relative to `‖b‖`.
    pub relative_residual: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmresError<E> {
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("right-hand side has length {got}, operator dimension is {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("operator application failed")]
    Operator(E),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` from `x = 0`.
///
/// Convergence is always confirmed on the true residual: a cycle stops once
/// the Arnoldi estimate drops below half the target, then `b − A x` is formed
/// explicitly and the iteration restarts if it is still above `tol`.
pub fn gmres<Op: LinearOperator>(
    op: &Op,
    b: &[f64],
    opts: &GmresOptions,
) -> Result<GmresOutcome, GmresError<Op::Error>> {
    let n = op.dim();
    if b.len() != n {
        return Err(GmresError::DimensionMismatch {
            got: b.len(),
            expected: n,
        });
    }
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let restart = opts.restart.max(1);
    let mut iterations = 0;
    let mut ax = vec![0.0; n];
    let mut r = b.to_vec();

    loop {
        let beta = norm2(&r);
        let rel = beta / b_norm;
        if rel <= opts.tol {
            return Ok(GmresOutcome {
                x,
                iterations,
                relative_residual: rel,
            });
        }
        if iterations >= opts.max_iter {
            return Err(GmresError::NoConvergence {
                iterations,
                residual: rel,
            });
        }

        let m = restart.min(opts.max_iter - iterations);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, rotated into upper-triangular form as we go
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_done = 0;

        for k in 0..m {
            iterations += 1;
            let mut w = vec![0.0; n];
            op.apply(&basis[k], &mut w).map_err(GmresError::Operator)?;
            let mut col = vec![0.0; k + 2];
            // modified Gram-Schmidt, twice for orthogonality
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    col[j] += c;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let w_norm = norm2(&w);
            col[k + 1] = w_norm;

            for j in 0..k {
                let t = cs[j] * col[j] + sn[j] * col[j + 1];
                col[j + 1] = -sn[j] * col[j] + cs[j] * col[j + 1];
                col[j] = t;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (col[k] / denom, col[k + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            col[k] = denom;
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);
            k_done = k + 1;

            let breakdown = w_norm <= f64::EPSILON * beta;
            if g[k + 1].abs() / b_norm <= 0.5 * opts.tol || breakdown {
                break;
            }
            basis.push(w.into_iter().map(|v| v / w_norm).collect());
        }

        // back substitution on the k_done × k_done triangle
        let mut y = vec![0.0; k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for j in i + 1..k_done {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut()
                .zip(&basis[j])
                .for_each(|(xi, vi)| *xi += yj * vi);
        }

        op.apply(&x, &mut ax).map_err(GmresError::Operator)?;
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
    }
}
