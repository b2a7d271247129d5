use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use super::{KktSolution, ProblemJ};
use crate::error::{invalid, Result};

/// Signed constraint values (feasible when `>= 0`) and KKT residuals of a
/// candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    /// `dL/da[m,k]`, required `<= 0` and `= 0` where `a > 0`.
    pub stationarity: DMatrix<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    /// Largest of: positive stationarity, `|a dL/da|`, constraint
    /// violations, negative `a` or multipliers, and `|multiplier * value|`.
    pub max_norm: f64,
}

struct Values {
    c1: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
}

fn constraint_values(p: &ProblemJ, a: &DMatrix<f64>) -> Values {
    let (m_users, k_bs) = (p.m_users(), p.k_bs());
    let tail = |from: usize, to: usize, k: usize| -> f64 { (from..to).map(|j| a[(j, k)]).sum() };
    let c1 = (0..m_users)
        .map(|m| {
            let th = p.gamma_th_m[m];
            (0..k_bs)
                .map(|k| (a[(m, k)] - th * tail(m + 1, m_users, k)) * p.gamma[(m, k)])
                .sum::<f64>()
                - th
        })
        .collect();
    let c2 = p
        .c2_pairs()
        .into_iter()
        .map(|(l, d)| {
            (0..k_bs)
                .map(|k| (a[(d, k)] - tail(d + 1, l + 1, k)) * p.gamma[(l, k)])
                .sum::<f64>()
                - p.sic_sensitivity
        })
        .collect();
    let c3 = (0..k_bs).map(|k| 1.0 - a.column(k).sum()).collect();
    Values { c1, c2, c3 }
}

/// `L = R + sum eta C1 + sum mu (C2 - P_s) + sum tau (1 - sum a)`.
pub fn lagrangian(p: &ProblemJ, a: &DMatrix<f64>, eta: &[f64], mu: &[f64], tau: &[f64]) -> f64 {
    let v = constraint_values(p, a);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    p.sum_rate(a) + dot(eta, &v.c1) + dot(mu, &v.c2) + dot(tau, &v.c3)
}

/// `dL/da[m,k]` written out term by term.
pub fn lagrangian_gradient(p: &ProblemJ, a: &DMatrix<f64>, eta: &[f64], mu: &[f64], tau: &[f64]) -> DMatrix<f64> {
    let (m_users, k_bs) = (p.m_users(), p.k_bs());
    // 1 + sum_k gamma[u,k] sum_{j>=u} a[j,k]  and the same over j > u.
    let mut inc = vec![1.0; m_users];
    let mut exc = vec![1.0; m_users];
    for u in 0..m_users {
        for k in 0..k_bs {
            let s: f64 = (u..m_users).map(|j| a[(j, k)]).sum();
            inc[u] += p.gamma[(u, k)] * s;
            exc[u] += p.gamma[(u, k)] * (s - a[(u, k)]);
        }
    }
    let pairs = p.c2_pairs();
    DMatrix::from_fn(m_users, k_bs, |m, k| {
        let mut rate = 0.0;
        for u in 0..=m {
            rate += p.gamma[(u, k)] / inc[u];
        }
        for u in 0..m {
            rate -= p.gamma[(u, k)] / exc[u];
        }
        let mut total = rate / LN_2;
        total += eta[m] * p.gamma[(m, k)];
        for u in 0..m {
            total -= eta[u] * p.gamma_th_m[u] * p.gamma[(u, k)];
        }
        for (i, &(l, d)) in pairs.iter().enumerate() {
            if m == d {
                total += mu[i] * p.gamma[(l, k)];
            } else if m > d && m <= l {
                total -= mu[i] * p.gamma[(l, k)];
            }
        }
        total - tau[k]
    })
}

pub fn kkt_residuals(p: &ProblemJ, candidate: &KktSolution) -> Result<KktResiduals> {
    let a = &candidate.a_star;
    if a.shape() != p.gamma.shape()
        || candidate.eta.len() != p.c1_count()
        || candidate.mu.len() != p.c2_count()
        || candidate.tau.len() != p.c3_count()
    {
        return Err(invalid("candidate shapes do not match the problem"));
    }
    let v = constraint_values(p, a);
    let st = lagrangian_gradient(p, a, &candidate.eta, &candidate.mu, &candidate.tau);
    let mut worst = 0.0f64;
    for (x, d) in a.iter().zip(st.iter()) {
        worst = worst.max(d.max(0.0)).max((x * d).abs()).max((-x).max(0.0));
    }
    for (vals, mult) in [(&v.c1, &candidate.eta), (&v.c2, &candidate.mu), (&v.c3, &candidate.tau)] {
        for (c, l) in vals.iter().zip(mult.iter()) {
            worst = worst.max((-c).max(0.0)).max((-l).max(0.0)).max((c * l).abs());
        }
    }
    Ok(KktResiduals {
        stationarity: st,
        c1: v.c1,
        c2: v.c2,
        c3: v.c3,
        max_norm: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_alloc::SolveStatus;

    fn candidate(a: DMatrix<f64>, p: &ProblemJ) -> KktSolution {
        KktSolution {
            objective: p.sum_rate(&a),
            a_star: a,
            eta: vec![0.0; p.c1_count()],
            mu: vec![0.0; p.c2_count()],
            tau: vec![0.0; p.c3_count()],
            status: SolveStatus::Optimal,
            kkt_residual: 0.0,
            duality_gap: 0.0,
            newton_iterations: 0,
        }
    }

    #[test]
    fn zero_allocation_violates_rates() {
        let p = ProblemJ::new(DMatrix::from_element(2, 2, 1.0), vec![0.5, 0.5], 0.0, vec![0, 1]).unwrap();
        let r = kkt_residuals(&p, &candidate(DMatrix::zeros(2, 2), &p)).unwrap();
        assert!(r.c1.iter().all(|&c| c < 0.0));
        assert!(r.max_norm > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let gamma = DMatrix::from_row_slice(3, 2, &[0.8, 1.1, 2.0, 1.5, 3.5, 2.5]);
        let p = ProblemJ::new(gamma, vec![0.3, 0.2, 0.4], 0.1, vec![0, 1, 2]).unwrap();
        let a = DMatrix::from_row_slice(3, 2, &[0.55, 0.6, 0.25, 0.2, 0.1, 0.15]);
        let (eta, mu, tau) = (vec![0.3, 0.7, 0.2], vec![0.4, 0.1, 0.9], vec![0.5, 1.3]);
        let analytic = lagrangian_gradient(&p, &a, &eta, &mu, &tau);
        let h = 1e-6;
        for m in 0..3 {
            for k in 0..2 {
                let mut up = a.clone();
                up[(m, k)] += h;
                let mut dn = a.clone();
                dn[(m, k)] -= h;
                let fd = (lagrangian(&p, &up, &eta, &mu, &tau) - lagrangian(&p, &dn, &eta, &mu, &tau)) / (2.0 * h);
                let rel = (fd - analytic[(m, k)]).abs() / analytic[(m, k)].abs().max(1e-12);
                assert!(rel < 1e-4, "({m},{k}) fd {fd} analytic {}", analytic[(m, k)]);
            }
        }
    }
}
