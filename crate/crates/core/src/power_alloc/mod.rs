//! Sum-rate maximizing power allocation for full-order GCoMP-NOMA.
//!
//! UE `m` (sorted weakest first) sees
//! `1 + SINR_m = (1 + c_m . a) / (1 + d_m . a)` where `c_m . a` collects the
//! power of UEs `j >= m` and `d_m . a` of UEs `j > m`, both weighted by the
//! normalized link SNRs `gamma[m, k] = P_k |h[m,k]|^2 / N_m`. Every
//! constraint is linear in `a`:
//!
//! * C1: `sum_k (a[m,k] - g_m sum_{j>m} a[j,k]) gamma[m,k] >= g_m` with `g_m = 2^{R_m} - 1`
//! * C2: `sum_k (a[d,k] - sum_{i=d+1..l} a[i,k]) gamma[l,k] >= P_s` for `d < l`
//! * C3: `sum_m a[m,k] <= 1`

mod barrier;
mod convexity;
mod eviction;
mod kkt;

pub use barrier::{is_feasible, solve, solve_with, SolverOptions};
pub use convexity::{convexity_probe, midpoint_check, ConvexityReport, MidpointOutcome};
pub use eviction::{evict_weakest, solve_with_eviction, EvictionOutcome};
pub use kkt::{kkt_residuals, lagrangian, lagrangian_gradient, KktResiduals};

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{power_gains, ChannelMatrix};
use crate::clustering::norm_metric;
use crate::error::{invalid, Result};
use crate::params::{rate_to_threshold, SystemParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemJ {
    /// `M x K` normalized link SNRs, rows sorted weakest UE first.
    pub gamma: DMatrix<f64>,
    pub min_rates: Vec<f64>,
    pub gamma_th_m: Vec<f64>,
    pub sic_sensitivity: f64,
    /// Original UE index of each row.
    pub ue_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub a_star: DMatrix<f64>,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub duality_gap: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Regression fixture `{gamma, R, Ps, a_star, multipliers, status}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFixture {
    pub gamma: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(rename = "Ps")]
    pub ps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_star: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Multipliers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = r.first().map_or(0, Vec::len);
    if r.is_empty() || ncols == 0 || r.iter().any(|row| row.len() != ncols) {
        return Err(invalid("matrix rows must be non-empty and of equal length"));
    }
    Ok(DMatrix::from_fn(r.len(), ncols, |i, j| r[i][j]))
}

/// Builds problem J for a full-order cluster. `order` must list UEs weakest
/// first by `sum_k |h[m,k]|^2`.
pub fn build_problem(ch: &ChannelMatrix, params: &SystemParams, order: &[usize]) -> Result<ProblemJ> {
    let (m_users, k_bs) = (ch.num_users(), ch.num_bs());
    if params.num_users() != m_users || params.num_bs() != k_bs {
        return Err(invalid("system parameters do not match the channel"));
    }
    if order.len() != m_users {
        return Err(invalid("order must list every UE once"));
    }
    let mut seen = vec![false; m_users];
    for &m in order {
        if m >= m_users || std::mem::replace(&mut seen[m], true) {
            return Err(invalid("order must be a permutation of the UEs"));
        }
    }
    let metric = norm_metric(&ch.magnitudes());
    if order.windows(2).any(|w| metric[w[0]] > metric[w[1]]) {
        return Err(invalid("UEs must be sorted ascending by channel norm"));
    }
    let g = power_gains(ch);
    let gamma = DMatrix::from_fn(m_users, k_bs, |r, k| {
        let m = order[r];
        params.power_budget[k] * g[(m, k)] / params.noise[m]
    });
    ProblemJ::new(
        gamma,
        order.iter().map(|&m| params.min_rates[m]).collect(),
        params.sic_sensitivity,
        order.to_vec(),
    )
}

impl ProblemJ {
    pub fn new(gamma: DMatrix<f64>, min_rates: Vec<f64>, sic_sensitivity: f64, ue_ids: Vec<usize>) -> Result<Self> {
        let (m_users, k_bs) = gamma.shape();
        if m_users == 0 || k_bs == 0 {
            return Err(invalid("problem needs at least one UE and one BS"));
        }
        if gamma.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(invalid("link SNRs must be finite and non-negative"));
        }
        if min_rates.len() != m_users || ue_ids.len() != m_users {
            return Err(invalid("one rate and one id per UE are required"));
        }
        if min_rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(invalid("minimum rates must be finite and non-negative"));
        }
        if !(sic_sensitivity >= 0.0 && sic_sensitivity.is_finite()) {
            return Err(invalid("SIC sensitivity must be finite and non-negative"));
        }
        Ok(ProblemJ {
            gamma,
            gamma_th_m: min_rates.iter().map(|&r| rate_to_threshold(r)).collect(),
            min_rates,
            sic_sensitivity,
            ue_ids,
        })
    }

    pub fn m_users(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn k_bs(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn num_vars(&self) -> usize {
        self.m_users() * self.k_bs()
    }

    /// Position of `a[m,k]` in the flattened variable vector.
    pub fn idx(&self, m: usize, k: usize) -> usize {
        m * self.k_bs() + k
    }

    pub fn c1_count(&self) -> usize {
        self.m_users()
    }

    pub fn c2_count(&self) -> usize {
        self.m_users() * (self.m_users() - 1) / 2
    }

    pub fn c3_count(&self) -> usize {
        self.k_bs()
    }

    /// `(l, d)` pairs of C2, 0-based, in the order `l = 1..M`, `d = 0..l`.
    pub fn c2_pairs(&self) -> Vec<(usize, usize)> {
        (1..self.m_users()).flat_map(|l| (0..l).map(move |d| (l, d))).collect()
    }

    pub fn flatten(&self, a: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(self.num_vars(), |i, _| a[(i / self.k_bs(), i % self.k_bs())])
    }

    pub fn unflatten(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.m_users(), self.k_bs(), |m, k| x[self.idx(m, k)])
    }

    /// Coefficient vectors `c_m` and `d_m` of the rate of UE `m`.
    fn rate_vectors(&self, m: usize) -> (DVector<f64>, DVector<f64>) {
        let mut c = DVector::zeros(self.num_vars());
        let mut d = DVector::zeros(self.num_vars());
        for j in m..self.m_users() {
            for k in 0..self.k_bs() {
                c[self.idx(j, k)] = self.gamma[(m, k)];
                if j > m {
                    d[self.idx(j, k)] = self.gamma[(m, k)];
                }
            }
        }
        (c, d)
    }

    /// Per-UE rates (bits/s/Hz) at allocation `a`.
    pub fn rates(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let x = self.flatten(a);
        (0..self.m_users())
            .map(|m| {
                let (c, d) = self.rate_vectors(m);
                ((1.0 + c.dot(&x)) / (1.0 + d.dot(&x))).log2()
            })
            .collect()
    }

    pub fn sum_rate(&self, a: &DMatrix<f64>) -> f64 {
        self.rates(a).iter().sum()
    }

    /// Objective, gradient and Hessian in the flattened variables.
    pub fn objective_derivatives(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.num_vars();
        let mut value = 0.0;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for m in 0..self.m_users() {
            let (c, d) = self.rate_vectors(m);
            let (uc, ud) = (1.0 + c.dot(&x), 1.0 + d.dot(&x));
            value += (uc / ud).ln();
            grad.axpy(1.0 / uc, &c, 1.0);
            grad.axpy(-1.0 / ud, &d, 1.0);
            hess.ger(-1.0 / (uc * uc), &c, &c, 1.0);
            hess.ger(1.0 / (ud * ud), &d, &d, 1.0);
        }
        (value / LN_2, grad / LN_2, hess / LN_2)
    }

    /// Linear constraints as `G x <= h`, rows ordered: `a >= 0` (one per
    /// variable), C1, C2, C3.
    pub fn constraints(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (m_users, k_bs, n) = (self.m_users(), self.k_bs(), self.num_vars());
        let rows = n + self.c1_count() + self.c2_count() + self.c3_count();
        let mut g = DMatrix::zeros(rows, n);
        let mut h = DVector::zeros(rows);
        for i in 0..n {
            g[(i, i)] = -1.0;
        }
        let mut r = n;
        for m in 0..m_users {
            let th = self.gamma_th_m[m];
            for k in 0..k_bs {
                g[(r, self.idx(m, k))] = -self.gamma[(m, k)];
                for j in m + 1..m_users {
                    g[(r, self.idx(j, k))] = th * self.gamma[(m, k)];
                }
            }
            h[r] = -th;
            r += 1;
        }
        for (l, d) in self.c2_pairs() {
            for k in 0..k_bs {
                g[(r, self.idx(d, k))] = -self.gamma[(l, k)];
                for i in d + 1..=l {
                    g[(r, self.idx(i, k))] = self.gamma[(l, k)];
                }
            }
            h[r] = -self.sic_sensitivity;
            r += 1;
        }
        for k in 0..k_bs {
            for m in 0..m_users {
                g[(r, self.idx(m, k))] = 1.0;
            }
            h[r] = 1.0;
            r += 1;
        }
        (g, h)
    }

    pub fn to_fixture(&self, solution: Option<&KktSolution>) -> ProblemFixture {
        ProblemFixture {
            gamma: rows(&self.gamma),
            r: self.min_rates.clone(),
            ps: self.sic_sensitivity,
            a_star: solution.map(|s| rows(&s.a_star)),
            multipliers: solution.map(|s| Multipliers {
                eta: s.eta.clone(),
                mu: s.mu.clone(),
                tau: s.tau.clone(),
            }),
            status: solution.map(|s| s.status),
        }
    }

    pub fn from_fixture(fx: &ProblemFixture) -> Result<Self> {
        let gamma = from_rows(&fx.gamma)?;
        let ids = (0..gamma.nrows()).collect();
        Self::new(gamma, fx.r.clone(), fx.ps, ids)
    }

    /// Rebuilds the stored candidate solution of a fixture, if any.
    pub fn fixture_solution(&self, fx: &ProblemFixture) -> Result<Option<KktSolution>> {
        let (Some(a), Some(mult)) = (&fx.a_star, &fx.multipliers) else {
            return Ok(None);
        };
        let a_star = from_rows(a)?;
        if a_star.shape() != self.gamma.shape() {
            return Err(invalid("a_star shape does not match gamma"));
        }
        let mut sol = KktSolution {
            objective: self.sum_rate(&a_star),
            a_star,
            eta: mult.eta.clone(),
            mu: mult.mu.clone(),
            tau: mult.tau.clone(),
            status: fx.status.unwrap_or(SolveStatus::Optimal),
            kkt_residual: 0.0,
            duality_gap: 0.0,
            newton_iterations: 0,
        };
        sol.kkt_residual = kkt_residuals(self, &sol)?.max_norm;
        Ok(Some(sol))
    }
}

/// OMA baseline: each UE uses a `1/M` orthogonal share with every BS's full budget.
pub fn oma_sum_rate(p: &ProblemJ) -> f64 {
    let m = p.m_users() as f64;
    p.gamma.row_iter().map(|r| (1.0 + r.sum()).log2() / m).sum()
}
