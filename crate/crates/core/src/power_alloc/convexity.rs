use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::ProblemJ;
use crate::channel::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub checks: usize,
    /// Sampled pairs discarded because an endpoint violates C2.
    pub skipped: usize,
    pub violations: usize,
    /// Largest `(R(x) + R(y)) / 2 - R(mid)` seen, relative to the tolerance scale.
    pub worst_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MidpointOutcome {
    /// An endpoint lies outside the C2 region.
    Skipped,
    /// `gap = (R(x) + R(y)) / 2 - R(mid)`, positive when concavity fails.
    Checked { gap: f64, violated: bool },
}

fn c2_feasible(p: &ProblemJ, a: &DMatrix<f64>) -> bool {
    p.c2_pairs().into_iter().all(|(l, d)| {
        let lhs: f64 = (0..p.k_bs())
            .map(|k| (a[(d, k)] - (d + 1..=l).map(|i| a[(i, k)]).sum::<f64>()) * p.gamma[(l, k)])
            .sum();
        lhs >= p.sic_sensitivity
    })
}

/// Midpoint concavity of the sum rate along `[x, y]`, with tolerance
/// `1e-8 * max(1, |R(x)|, |R(y)|)`.
pub fn midpoint_check(p: &ProblemJ, x: &DMatrix<f64>, y: &DMatrix<f64>) -> MidpointOutcome {
    if !c2_feasible(p, x) || !c2_feasible(p, y) {
        return MidpointOutcome::Skipped;
    }
    let (rx, ry) = (p.sum_rate(x), p.sum_rate(y));
    let mid = (x + y) * 0.5;
    let gap = 0.5 * (rx + ry) - p.sum_rate(&mid);
    let tol = 1e-8 * 1f64.max(rx.abs()).max(ry.abs());
    MidpointOutcome::Checked { gap, violated: gap > tol }
}

/// Uniform point of `{a >= 0, sum_m a[m,k] <= 1}`: each column is a flat
/// Dirichlet draw over the `M` UEs plus an unused share.
fn sample_allocation<R: Rng>(rng: &mut R, m_users: usize, k_bs: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m_users, k_bs);
    for k in 0..k_bs {
        let draws: Vec<f64> = (0..=m_users).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        for m in 0..m_users {
            a[(m, k)] = draws[m] / total;
        }
    }
    a
}

/// Point whose columns give every UE more than all stronger UEs combined,
/// so the SIC pairs hold with a random per-column margin.
fn sample_ordered_allocation<R: Rng>(rng: &mut R, m_users: usize, k_bs: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m_users, k_bs);
    for k in 0..k_bs {
        let mut tail = 0.0;
        for m in (0..m_users).rev() {
            a[(m, k)] = tail + rng.sample::<f64, _>(Exp1);
            tail += a[(m, k)];
        }
        let total = tail + rng.sample::<f64, _>(Exp1);
        for m in 0..m_users {
            a[(m, k)] /= total;
        }
    }
    a
}

/// Samples pairs of allocations and runs [`midpoint_check`] until `segments`
/// checks have been made (or the attempt budget runs out). Attempts
/// alternate between flat draws and SIC-ordered draws.
pub fn convexity_probe(p: &ProblemJ, segments: usize, seed: u64) -> ConvexityReport {
    let mut rng = stream_rng(seed, 0);
    let mut report = ConvexityReport {
        checks: 0,
        skipped: 0,
        violations: 0,
        worst_gap: f64::NEG_INFINITY,
    };
    let budget = segments.saturating_mul(10_000).max(1);
    let mut attempts = 0;
    while report.checks < segments && attempts < budget {
        attempts += 1;
        let draw = if attempts % 2 == 0 { sample_allocation } else { sample_ordered_allocation };
        let x = draw(&mut rng, p.m_users(), p.k_bs());
        let y = draw(&mut rng, p.m_users(), p.k_bs());
        match midpoint_check(p, &x, &y) {
            MidpointOutcome::Skipped => report.skipped += 1,
            MidpointOutcome::Checked { gap, violated } => {
                report.checks += 1;
                report.worst_gap = report.worst_gap.max(gap);
                if violated {
                    report.violations += 1;
                }
            }
        }
    }
    report
}
