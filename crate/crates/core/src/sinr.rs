//! Received SINR under joint NOMA transmission.
//!
//! All functions take the `M x K` power-gain matrix `g = |h|^2` so they can
//! be driven both by [`ChannelMatrix`](crate::ChannelMatrix) instances and by
//! raw Monte-Carlo draws. Residual INI from imperfect ordering is zero.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::clustering::{ClusterAssignment, PowerCoefficients};
use crate::error::{invalid, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, PartialEq)]
pub struct NomaWeights {
    /// `(bs, a P)` for the UE's own signal at each serving BS.
    pub lambda_desired: Vec<(usize, f64)>,
    /// `(bs, P * sum of coefficients ranked above the UE)` per serving BS.
    pub delta_ini: Vec<(usize, f64)>,
    /// `(bs, P * total coefficient)` per non-serving BS.
    pub phi_ici: Vec<(usize, f64)>,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinrBreakdown {
    pub ue: usize,
    pub desired: f64,
    pub ini: f64,
    pub ici: f64,
    pub noise: f64,
    pub sinr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicMargin {
    pub i: usize,
    pub j: usize,
    /// `|N_i - N_j| - P_s` on the normalized scale.
    pub margin: f64,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SicReport {
    pub margins: Vec<SicMargin>,
    pub satisfied: bool,
}

fn check_shapes(
    ue: usize,
    g: &DMatrix<f64>,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<()> {
    let shape = (assign.num_users(), assign.num_bs());
    if g.shape() != shape || coeff.a.shape() != shape {
        return Err(invalid("gain, coefficient and cluster dimensions disagree"));
    }
    if params.num_users() != shape.0 || params.num_bs() != shape.1 {
        return Err(invalid("system parameters do not match the cluster dimensions"));
    }
    if ue >= shape.0 {
        return Err(invalid(format!("UE {ue} out of range")));
    }
    if assign.serving(ue).is_empty() {
        return Err(invalid(format!("UE {ue} is not in any cluster")));
    }
    Ok(())
}

/// Sum of coefficients in cluster `k` for members ranked strictly above `rank`.
fn tail_coeff(k: usize, rank: usize, coeff: &PowerCoefficients, assign: &ClusterAssignment) -> f64 {
    assign
        .members_by_rank(k)
        .iter()
        .skip(rank)
        .map(|&j| coeff.a[(j, k)])
        .sum()
}

/// Coefficient of the rank-`rank` member of cluster `k`, zero if the cluster is smaller.
fn coeff_at_rank(k: usize, rank: usize, coeff: &PowerCoefficients, assign: &ClusterAssignment) -> f64 {
    assign
        .members_by_rank(k)
        .get(rank - 1)
        .map_or(0.0, |&j| coeff.a[(j, k)])
}

/// `Phi_w = P_w sum_m a[m,w]` for every BS.
pub fn phi_weights(coeff: &PowerCoefficients, params: &SystemParams) -> Vec<f64> {
    (0..coeff.a.ncols())
        .map(|w| params.power_budget[w] * coeff.a.column(w).sum())
        .collect()
}

pub fn noma_weights(
    ue: usize,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> NomaWeights {
    let phi = phi_weights(coeff, params);
    let mut lambda_desired = Vec::new();
    let mut delta_ini = Vec::new();
    for &k in assign.serving(ue) {
        let rank = assign.rank(ue, k).expect("serving BS ranks the UE");
        lambda_desired.push((k, coeff.a[(ue, k)] * params.power_budget[k]));
        delta_ini.push((k, params.power_budget[k] * tail_coeff(k, rank, coeff, assign)));
    }
    NomaWeights {
        lambda_desired,
        delta_ini,
        phi_ici: assign.non_serving(ue).iter().map(|&w| (w, phi[w])).collect(),
        theta: 0.0,
    }
}

pub fn sinr_breakdown(
    ue: usize,
    g: &DMatrix<f64>,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<SinrBreakdown> {
    check_shapes(ue, g, coeff, assign, params)?;
    let w = noma_weights(ue, coeff, assign, params);
    let desired: f64 = w.lambda_desired.iter().map(|&(k, l)| l * g[(ue, k)]).sum();
    let ini: f64 = w.delta_ini.iter().map(|&(k, d)| d * g[(ue, k)]).sum();
    let ici: f64 = w.phi_ici.iter().map(|&(k, p)| p * g[(ue, k)]).sum();
    let noise = params.noise[ue];
    Ok(SinrBreakdown {
        ue,
        desired,
        ini,
        ici,
        noise,
        sinr: desired / (ini + ici + noise),
    })
}

/// SINR of the UE's own signal.
pub fn instantaneous_sinr(
    ue: usize,
    g: &DMatrix<f64>,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<f64> {
    Ok(sinr_breakdown(ue, g, coeff, assign, params)?.sinr)
}

/// SINR at `ue` when detecting the rank-`delta` signal of each serving cluster.
pub fn decode_sinr(
    delta: usize,
    ue: usize,
    g: &DMatrix<f64>,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<f64> {
    check_shapes(ue, g, coeff, assign, params)?;
    let m_star = assign.m_star(ue);
    if delta == 0 || delta > m_star {
        return Err(invalid(format!("delta {delta} outside [1, {m_star}]")));
    }
    let mut lambda = 0.0;
    let mut ini = 0.0;
    for &k in assign.serving(ue) {
        let p = params.power_budget[k];
        lambda += coeff_at_rank(k, delta, coeff, assign) * p * g[(ue, k)];
        ini += tail_coeff(k, delta, coeff, assign) * p * g[(ue, k)];
    }
    let ici = instantaneous_ici(ue, g, coeff, assign, params)?;
    Ok(lambda / (ini + ici + params.noise[ue]))
}

pub fn instantaneous_ici(
    ue: usize,
    g: &DMatrix<f64>,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<f64> {
    check_shapes(ue, g, coeff, assign, params)?;
    let phi = phi_weights(coeff, params);
    Ok(assign.non_serving(ue).iter().map(|&w| phi[w] * g[(ue, w)]).sum())
}

/// Mean ICI at a UE whose link power gains are `Exp` with standard deviation
/// `sigma_row[k]` per component, when it is served by its `n` strongest BSs and
/// BS `w` radiates `phi[w]` in total.
///
/// The non-serving set is the `K - n` weakest links. Averaging runs over the
/// label order of those links from the weakest up, using independent
/// exponential spacings; equal rates are handled without special cases.
pub fn average_ici(sigma_row: &[f64], phi: &[f64], n: usize) -> Result<f64> {
    let k_bs = sigma_row.len();
    if phi.len() != k_bs {
        return Err(invalid("one Phi weight per BS is required"));
    }
    if n == 0 || n > k_bs {
        return Err(invalid(format!("order {n} outside [1, {k_bs}]")));
    }
    if sigma_row.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(invalid("sigma must be positive"));
    }
    if k_bs > 8 {
        return Err(crate::Error::CombinatorialBlowup {
            what: "K",
            value: k_bs,
            cap: 8,
        });
    }
    if n == k_bs {
        return Ok(0.0);
    }
    let rates: Vec<f64> = sigma_row.iter().map(|s| 0.5 / (s * s)).collect();
    let depth = k_bs - n;
    let mut used = vec![false; k_bs];
    let mut labels = Vec::with_capacity(depth);
    let total: f64 = rates.iter().sum();
    Ok(ici_recurse(&rates, phi, depth, total, &mut used, &mut labels, &mut Vec::new(), 1.0))
}

#[allow(clippy::too_many_arguments)]
fn ici_recurse(
    rates: &[f64],
    phi: &[f64],
    depth: usize,
    remaining: f64,
    used: &mut [bool],
    labels: &mut Vec<usize>,
    lambdas: &mut Vec<f64>,
    prob: f64,
) -> f64 {
    if labels.len() == depth {
        let mut acc = 0.0;
        for s in 0..depth {
            let tail: f64 = labels[s..].iter().map(|&j| phi[j]).sum();
            acc += tail / lambdas[s];
        }
        return prob * acc;
    }
    let mut sum = 0.0;
    for j in 0..rates.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        labels.push(j);
        lambdas.push(remaining);
        sum += ici_recurse(
            rates,
            phi,
            depth,
            remaining - rates[j],
            used,
            labels,
            lambdas,
            prob * rates[j] / remaining,
        );
        lambdas.pop();
        labels.pop();
        used[j] = false;
    }
    sum
}

/// Pairwise SIC margins at `ue` for the aggregate received weights
/// `N_i = sum_k a[i,k] P_k g[ue,k] / noise[ue]`.
///
/// Pairs among members ranked at or below `ue` are required, since those are
/// the signals `ue` must separate. `rank` is the UE's common rank under
/// full-order clustering.
pub fn sic_separability(
    ue: usize,
    rank: usize,
    g: &DMatrix<f64>,
    coeff: &PowerCoefficients,
    order: &[usize],
    params: &SystemParams,
) -> Result<SicReport> {
    if g.shape() != coeff.a.shape() || ue >= g.nrows() || order.len() != g.nrows() {
        return Err(invalid("inconsistent SIC inputs"));
    }
    let aggregate: Vec<f64> = order
        .iter()
        .map(|&i| {
            (0..g.ncols())
                .map(|k| coeff.a[(i, k)] * params.power_budget[k] * g[(ue, k)])
                .sum::<f64>()
                / params.noise[ue]
        })
        .collect();
    let mut margins = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            margins.push(SicMargin {
                i: order[i],
                j: order[j],
                margin: (aggregate[i] - aggregate[j]).abs() - params.sic_sensitivity,
                required: j < rank,
            });
        }
    }
    let satisfied = margins.iter().filter(|m| m.required).all(|m| m.margin >= 0.0);
    Ok(SicReport { margins, satisfied })
}

pub fn write_breakdown_csv<W: Write>(out: W, rows: &[SinrBreakdown]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
