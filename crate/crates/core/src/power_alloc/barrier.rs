use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kkt::kkt_residuals;
use super::{KktSolution, ProblemJ, SolveStatus};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub mu_start: f64,
    pub mu_end: f64,
    pub mu_factor: f64,
    /// Newton iterations allowed per barrier stage.
    pub max_newton: usize,
    /// Positive factor applied to the objective before solving.
    pub objective_scale: f64,
    /// Phase-1 slack above which the constraints count as unsatisfiable.
    pub feasibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mu_start: 1.0,
            mu_end: 1e-8,
            mu_factor: 0.1,
            max_newton: 200,
            objective_scale: 1.0,
            feasibility_tol: 1e-6,
        }
    }
}

struct Centered {
    x: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// Minimizes `t f(x) - sum log(h - G x)` from a strictly feasible `x`.
fn center<F>(x0: DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>, t: f64, max_iter: usize, f: &F) -> Centered
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let merit = |x: &DVector<f64>| -> Option<f64> {
        let s = h - g * x;
        if s.iter().any(|&v| v <= 0.0) {
            return None;
        }
        Some(t * f(x).0 - s.iter().map(|v| v.ln()).sum::<f64>())
    };
    for it in 0..max_iter {
        let (_, fg, fh) = f(&x);
        let s = h - g * &x;
        let inv = s.map(|v| 1.0 / v);
        let grad = fg * t + g.transpose() * &inv;
        let scaled = DMatrix::from_fn(g.nrows(), n, |i, j| g[(i, j)] * inv[i]);
        let mut hess = fh * t + scaled.transpose() * &scaled;
        hess = (&hess + hess.transpose()) * 0.5;
        let diag_scale = hess.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
        let mut shift = 0.0;
        let step = loop {
            let mut m = hess.clone();
            for i in 0..n {
                m[(i, i)] += shift;
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&(-&grad));
            }
            shift = if shift == 0.0 { 1e-12 * diag_scale } else { shift * 10.0 };
        };
        let decrement = -grad.dot(&step);
        if decrement / 2.0 <= 1e-10 {
            return Centered {
                x,
                iterations: it,
                converged: true,
            };
        }
        let f0 = merit(&x).expect("iterate stays strictly feasible");
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = &x + &step * alpha;
            if let Some(ft) = merit(&trial) {
                if decrement < 1e-3 || ft <= f0 - 0.25 * alpha * decrement {
                    break Some(trial);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-16 {
                break None;
            }
        };
        match accepted {
            Some(next) if (&next - &x).amax() > 1e-15 * (1.0 + x.amax()) => x = next,
            _ => {
                return Centered {
                    x,
                    iterations: it + 1,
                    converged: decrement / 2.0 <= 1e-6,
                }
            }
        }
    }
    Centered {
        x,
        iterations: max_iter,
        converged: false,
    }
}

struct PhaseOne {
    x: DVector<f64>,
    slack: f64,
    iterations: usize,
}

/// Minimizes the common violation `s` subject to `G x - s <= h`.
fn phase_one(p: &ProblemJ, g: &DMatrix<f64>, h: &DVector<f64>, opts: &SolverOptions) -> PhaseOne {
    let n = p.num_vars();
    let rows = g.nrows();
    let mut ge = DMatrix::zeros(rows, n + 1);
    ge.view_mut((0, 0), (rows, n)).copy_from(g);
    ge.column_mut(n).fill(-1.0);
    let start = 1.0 / (p.m_users() as f64 + 1.0);
    let x0 = DVector::from_element(n, start);
    let s0 = (g * &x0 - h).max() + 1.0;
    let mut z = x0.push(s0);
    let objective = |z: &DVector<f64>| {
        let mut grad = DVector::zeros(n + 1);
        grad[n] = 1.0;
        (z[n], grad, DMatrix::zeros(n + 1, n + 1))
    };
    let mut iterations = 0;
    let mut t = 1.0;
    while t <= 1e9 {
        let c = center(z, &ge, h, t, opts.max_newton, &objective);
        iterations += c.iterations;
        z = c.x;
        if z[n] < -1e-3 {
            break;
        }
        t *= 10.0;
    }
    PhaseOne {
        slack: z[n],
        x: z.rows(0, n).into_owned(),
        iterations,
    }
}

/// Whether problem J has a point satisfying every constraint to within the
/// feasibility tolerance.
pub fn is_feasible(p: &ProblemJ) -> bool {
    let (g, h) = p.constraints();
    phase_one(p, &g, &h, &SolverOptions::default()).slack <= SolverOptions::default().feasibility_tol
}

pub fn solve(p: &ProblemJ) -> Result<KktSolution> {
    solve_with(p, &SolverOptions::default())
}

/// Primal log-barrier interior point. Multipliers are recovered from the
/// final centering step as `lambda_i = mu / slack_i`.
pub fn solve_with(p: &ProblemJ, opts: &SolverOptions) -> Result<KktSolution> {
    let (g, h) = p.constraints();
    let n = p.num_vars();
    let empty = |status, x: &DVector<f64>, iterations| KktSolution {
        a_star: p.unflatten(x),
        eta: vec![0.0; p.c1_count()],
        mu: vec![0.0; p.c2_count()],
        tau: vec![0.0; p.c3_count()],
        status,
        objective: p.sum_rate(&p.unflatten(x)),
        kkt_residual: f64::INFINITY,
        duality_gap: f64::INFINITY,
        newton_iterations: iterations,
    };
    let start = phase_one(p, &g, &h, opts);
    if start.slack > opts.feasibility_tol {
        return Ok(empty(SolveStatus::Infeasible, &start.x, start.iterations));
    }
    if start.slack >= 0.0 {
        return Ok(empty(SolveStatus::NumericFailure, &start.x, start.iterations));
    }

    let scale = opts.objective_scale;
    let neg_rate = |x: &DVector<f64>| {
        let (v, gr, he) = p.objective_derivatives(x);
        (-scale * v, -gr * scale, -he * scale)
    };
    let mut x = start.x;
    let mut iterations = start.iterations;
    let mut mu = opts.mu_start;
    let mut converged = true;
    loop {
        let c = center(x, &g, &h, 1.0 / mu, opts.max_newton, &neg_rate);
        iterations += c.iterations;
        x = c.x;
        converged &= c.converged;
        if mu <= opts.mu_end * (1.0 + 1e-9) {
            break;
        }
        mu = (mu * opts.mu_factor).max(opts.mu_end);
    }

    let s = &h - &g * &x;
    let lambda: Vec<f64> = s.iter().map(|&si| mu / (scale * si)).collect();
    let (c1, c2) = (n, n + p.c1_count());
    let c3 = c2 + p.c2_count();
    let mut sol = KktSolution {
        a_star: p.unflatten(&x),
        eta: lambda[c1..c2].to_vec(),
        mu: lambda[c2..c3].to_vec(),
        tau: lambda[c3..].to_vec(),
        status: SolveStatus::Optimal,
        objective: p.sum_rate(&p.unflatten(&x)),
        kkt_residual: 0.0,
        duality_gap: lambda.iter().zip(s.iter()).map(|(l, s)| l * s).sum(),
        newton_iterations: iterations,
    };
    sol.kkt_residual = kkt_residuals(p, &sol)?.max_norm;
    if !converged || !(sol.kkt_residual <= 1e-6) {
        sol.status = SolveStatus::NumericFailure;
    }
    Ok(sol)
}
