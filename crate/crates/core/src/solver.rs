//! Damped Gauss-Newton / Levenberg-Marquardt minimizer for stacked
//! sum-of-squares objectives.
//!
//! Problems provide the loss and the Gauss-Newton normal equations
//! (`JᵀJ`, `Jᵀr`) directly. Assembling the normal equations on the problem
//! side lets sparse residual structures (each residual touching a handful of
//! parameters) skip materializing the Jacobian, which is where nearly all of
//! the fitting time goes for large tables.

use nalgebra::{DMatrix, DVector};

/// A sum-of-squares minimization problem over a flat parameter vector.
pub trait NormalEquationsProblem {
    fn num_params(&self) -> usize;

    /// Total loss `Σ rᵢ(x)²` at `x`.
    fn loss(&self, x: &[f64]) -> f64;

    /// Fill `jtj = JᵀJ` and `jtr = Jᵀr` at `x` (buffers are pre-zeroed) and
    /// return the loss at `x`.
    fn normal_equations(&self, x: &[f64], jtj: &mut DMatrix<f64>, jtr: &mut DVector<f64>) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Relative loss-change threshold for convergence.
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 2000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize in place, returning the termination report.
///
/// Damping follows Nielsen's update rule: accepted steps shrink the damping
/// factor based on the gain ratio, rejected steps grow it geometrically.
pub fn minimize<P: NormalEquationsProblem>(
    problem: &P,
    x: &mut [f64],
    options: SolveOptions,
) -> SolveReport {
    let p = problem.num_params();
    debug_assert_eq!(x.len(), p);
    let mut jtj = DMatrix::<f64>::zeros(p, p);
    let mut jtr = DVector::<f64>::zeros(p);

    let mut loss = problem.normal_equations(x, &mut jtj, &mut jtr);
    let mut mu = {
        let max_diag = (0..p).map(|i| jtj[(i, i)]).fold(0.0_f64, f64::max);
        1e-3 * max_diag.max(1e-12)
    };
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut candidate = vec![0.0; p];

    while iterations < options.max_iterations {
        iterations += 1;

        // Gradient of Σr² is 2·Jᵀr; an essentially-zero gradient means no
        // further step can change the loss beyond the tolerance.
        let grad_inf = jtr.amax();
        if grad_inf <= 1e-14 {
            converged = true;
            break;
        }

        let mut damped = jtj.clone();
        for i in 0..p {
            damped[(i, i)] += mu;
        }
        let step = match damped.cholesky() {
            Some(chol) => {
                let mut rhs = -jtr.clone();
                chol.solve_mut(&mut rhs);
                rhs
            }
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };

        for i in 0..p {
            candidate[i] = x[i] + step[i];
        }
        let new_loss = problem.loss(&candidate);

        // Predicted reduction of the damped quadratic model:
        // stepᵀ(mu·step - Jᵀr), always positive for a descent step.
        let predicted: f64 = (0..p).map(|i| step[i] * (mu * step[i] - jtr[i])).sum();
        let rho = if predicted > 0.0 {
            (loss - new_loss) / predicted
        } else {
            -1.0
        };

        if new_loss.is_finite() && rho > 0.0 {
            x.copy_from_slice(&candidate);
            let rel_change = (loss - new_loss).abs() / loss.abs().max(1e-300);
            loss = new_loss;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if rel_change < options.tol {
                converged = true;
                break;
            }
            jtj.fill(0.0);
            jtr.fill(0.0);
            loss = problem.normal_equations(x, &mut jtj, &mut jtr);
        } else {
            mu *= nu;
            nu *= 2.0;
            if mu > 1e30 {
                // Loss surface is flat or the step is numerically stuck;
                // no further progress is possible.
                converged = true;
                break;
            }
        }
    }

    SolveReport {
        loss,
        iterations,
        converged,
    }
}
