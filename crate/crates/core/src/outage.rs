//! Closed-form outage probability and epsilon-outage capacity.
//!
//! A UE served by its `n` strongest of `K` links sees the normalized SNR
//! `z = sum of the n largest of K independent exponentials`, with rates
//! `alpha[i] = (I_ici + N) / (2 P sigma_i^2)`. A UE at rank `r` in a cluster
//! of `Omega` members is in outage when at least `r` members have
//! `z <= gamma'`, i.e. the `r`-th order statistic falls below threshold.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::clustering::{ClusterAssignment, PowerCoefficients};
use crate::error::{invalid, Error, Result};
use crate::params::SystemParams;

pub const MAX_OMEGA: usize = 12;
pub const MAX_K: usize = 8;
const DISTINCT_GAP: f64 = 1e-9;
const PARTIAL_FRACTION_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct OutageSpec {
    pub gamma_th_prime: f64,
    /// Row `u` holds the rates of cluster member `u` (any order).
    pub alpha: DMatrix<f64>,
    pub n: usize,
    pub omega: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticSummary {
    pub coding_gain: f64,
    pub diversity_order: usize,
    pub gamma_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    OrderedSum,
    IidClosedForm,
    HighSnr,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub gamma_bar: f64,
    pub value: f64,
    pub provenance: Provenance,
}

fn check_distinct(alphas: &[f64]) -> Result<()> {
    for (i, &a) in alphas.iter().enumerate() {
        for &b in &alphas[i + 1..] {
            if (a - b).abs() <= DISTINCT_GAP * a.abs().max(b.abs()) {
                return Err(Error::DegenerateDistribution(format!(
                    "rates {a} and {b} coincide; use the i.i.d full-order path (outage_full_order_iid)"
                )));
            }
        }
    }
    Ok(())
}

fn clamp_probability(p: f64) -> Result<f64> {
    if (-1e-9..=1.0 + 1e-9).contains(&p) {
        Ok(p.clamp(0.0, 1.0))
    } else {
        Err(Error::NumericInstability(format!("probability evaluated to {p}")))
    }
}

/// CDF at `gamma` of a sum of independent exponentials with the given rates.
fn hypoexponential_cdf(gamma: f64, rho: &[f64]) -> f64 {
    let d = rho.len();
    let separated = rho.iter().enumerate().all(|(i, &a)| {
        rho[i + 1..]
            .iter()
            .all(|&b| (a - b).abs() > PARTIAL_FRACTION_GAP * a.max(b))
    });
    if separated {
        // 1 - sum_t w_t e^{-rho_t gamma}, w_t = prod_{k != t} rho_k / (rho_k - rho_t)
        let mut tail = 0.0;
        let mut cdf = 0.0;
        for t in 0..d {
            let w: f64 = (0..d)
                .filter(|&k| k != t)
                .map(|k| rho[k] / (rho[k] - rho[t]))
                .product();
            tail += w;
            cdf += w * -(-rho[t] * gamma).exp_m1();
        }
        debug_assert!((tail - 1.0).abs() < 1e-6);
        cdf
    } else {
        let mut q = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            q[(i, i)] = -rho[i] * gamma;
            if i + 1 < d {
                q[(i, i + 1)] = rho[i] * gamma;
            }
        }
        let e = q.exp();
        1.0 - e.row(0).sum()
    }
}

/// CDF of the sum of the `n` largest of `K = alphas.len()` independent
/// exponentials with rates `alphas`.
///
/// Sums over the labels `(i_1, .., i_n)` of the top order statistics
/// (largest first) and over subsets `T` of the remaining labels, which come
/// from expanding `prod_j (1 - e^{-alpha_j y_n})`. After the spacing
/// transform each term is a hypoexponential with rates `C_d / d`, where
/// `C_d = sum_{r <= d} alpha_{i_r}` plus `sum_T alpha` at `d = n`.
pub fn ordered_sum_cdf(gamma: f64, alphas: &[f64], n: usize) -> Result<f64> {
    let k = alphas.len();
    if k == 0 || n == 0 || n > k {
        return Err(invalid(format!("order {n} outside [1, {k}]")));
    }
    if k > MAX_K {
        return Err(Error::CombinatorialBlowup {
            what: "K",
            value: k,
            cap: MAX_K,
        });
    }
    if alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(invalid("rates must be finite and > 0"));
    }
    if gamma.is_nan() || gamma < 0.0 {
        return Err(invalid("threshold must be non-negative"));
    }
    check_distinct(alphas)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    if gamma.is_infinite() {
        return Ok(1.0);
    }

    let mut labels = Vec::with_capacity(n);
    let mut used = vec![false; k];
    let mut mass = 0.0;
    let mut cdf = 0.0;
    top_labels(alphas, n, gamma, &mut labels, &mut used, &mut mass, &mut cdf);
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::NumericInstability(format!(
            "partial-fraction residues sum to {mass}, expected 1"
        )));
    }
    clamp_probability(cdf)
}

fn top_labels(
    alphas: &[f64],
    n: usize,
    gamma: f64,
    labels: &mut Vec<usize>,
    used: &mut [bool],
    mass: &mut f64,
    cdf: &mut f64,
) {
    if labels.len() == n {
        let rest: Vec<f64> = (0..alphas.len()).filter(|&j| !used[j]).map(|j| alphas[j]).collect();
        let prod_alpha: f64 = labels.iter().map(|&i| alphas[i]).product();
        let mut prefix = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &i in labels.iter() {
            acc += alphas[i];
            prefix.push(acc);
        }
        for mask in 0u32..(1u32 << rest.len()) {
            let a_t: f64 = (0..rest.len())
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| rest[b])
                .sum();
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let mut c = prefix.clone();
            c[n - 1] += a_t;
            let weight = sign * prod_alpha / c.iter().product::<f64>();
            let rho: Vec<f64> = c.iter().enumerate().map(|(d, &cd)| cd / (d + 1) as f64).collect();
            *mass += weight;
            *cdf += weight * hypoexponential_cdf(gamma, &rho);
        }
        return;
    }
    for i in 0..alphas.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        labels.push(i);
        top_labels(alphas, n, gamma, labels, used, mass, cdf);
        labels.pop();
        used[i] = false;
    }
}

/// Probability that at least `r` of the independent events with
/// probabilities `p` occur.
pub fn at_least(p: &[f64], r: usize) -> f64 {
    // dist[j] = P(exactly j events so far)
    let mut dist = vec![0.0; p.len() + 1];
    dist[0] = 1.0;
    for (seen, &q) in p.iter().enumerate() {
        for j in (0..=seen + 1).rev() {
            let stay = dist[j] * (1.0 - q);
            let up = if j > 0 { dist[j - 1] * q } else { 0.0 };
            dist[j] = stay + up;
        }
    }
    dist[r.min(p.len() + 1)..].iter().sum()
}

/// Outage probability of the member at rank `ue_rank` (1 = weakest) of a
/// cluster with per-member rates `spec.alpha`.
pub fn outage_probability(ue_rank: usize, spec: &OutageSpec) -> Result<f64> {
    let omega = spec.alpha.nrows();
    if omega != spec.omega {
        return Err(invalid("alpha rows must equal omega"));
    }
    if omega > MAX_OMEGA {
        return Err(Error::CombinatorialBlowup {
            what: "Omega",
            value: omega,
            cap: MAX_OMEGA,
        });
    }
    if ue_rank == 0 || ue_rank > omega {
        return Err(invalid(format!("rank {ue_rank} outside [1, {omega}]")));
    }
    if spec.gamma_th_prime.is_nan() || spec.gamma_th_prime < 0.0 {
        return Err(invalid("effective threshold must be non-negative"));
    }
    if spec.gamma_th_prime.is_infinite() {
        return Ok(1.0);
    }
    let mut cdfs = Vec::with_capacity(omega);
    for row in spec.alpha.row_iter() {
        let alphas: Vec<f64> = row.iter().copied().collect();
        cdfs.push(ordered_sum_cdf(spec.gamma_th_prime, &alphas, spec.n)?);
    }
    clamp_probability(at_least(&cdfs, ue_rank))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Full-order, i.i.d. outage of the weakest UE:
/// `sum_{m=1}^{M} C(M,m) F^m (1-F)^{M-m}` with `F` the normalized lower
/// incomplete gamma `P(K, alpha gamma')`.
pub fn outage_full_order_iid(m_users: usize, k_bs: usize, alpha: f64, gamma_th_prime: f64) -> Result<f64> {
    outage_full_order_iid_rank(m_users, k_bs, alpha, gamma_th_prime, 1)
}

/// As [`outage_full_order_iid`] for the UE at rank `rank`.
pub fn outage_full_order_iid_rank(
    m_users: usize,
    k_bs: usize,
    alpha: f64,
    gamma_th_prime: f64,
    rank: usize,
) -> Result<f64> {
    if m_users == 0 || k_bs == 0 {
        return Err(invalid("m_users and k_bs must be at least 1"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be > 0"));
    }
    if rank == 0 || rank > m_users {
        return Err(invalid(format!("rank {rank} outside [1, {m_users}]")));
    }
    if gamma_th_prime.is_nan() || gamma_th_prime < 0.0 {
        return Err(invalid("effective threshold must be non-negative"));
    }
    let x = alpha * gamma_th_prime;
    let f = if x == 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(k_bs as f64, x)
    };
    let p = (rank..=m_users)
        .map(|m| binomial(m_users, m) * f.powi(m as i32) * (1.0 - f).powi((m_users - m) as i32))
        .sum::<f64>();
    Ok(p.min(1.0))
}

/// High-SNR outage `(G_c gamma_bar)^{-K}` with
/// `G_c = (K Gamma(K) / (M gamma'^K))^{1/K}`.
pub fn outage_asymptotic(
    m_users: usize,
    k_bs: usize,
    gamma_bar: f64,
    gamma_th_prime: f64,
) -> Result<(f64, AsymptoticSummary)> {
    if !(gamma_bar > 0.0) {
        return Err(invalid("mean SNR must be > 0"));
    }
    if m_users == 0 || k_bs == 0 || !(gamma_th_prime > 0.0) {
        return Err(invalid("need M, K >= 1 and a positive effective threshold"));
    }
    let k = k_bs as f64;
    let gc = (k * gamma(k) / (m_users as f64 * gamma_th_prime.powf(k))).powf(1.0 / k);
    Ok((
        (gc * gamma_bar).powf(-k),
        AsymptoticSummary {
            coding_gain: gc,
            diversity_order: k_bs,
            gamma_bar,
        },
    ))
}

/// `log2(1 + (eps K Gamma(K) / M)^{1/K} gamma_bar)` in bits/s/Hz.
pub fn epsilon_outage_capacity(m_users: usize, k_bs: usize, gamma_bar: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon must lie in (0, 1]"));
    }
    if !(gamma_bar > 0.0) || m_users == 0 || k_bs == 0 {
        return Err(invalid("need gamma_bar > 0 and M, K >= 1"));
    }
    let k = k_bs as f64;
    Ok((1.0 + (epsilon * k * gamma(k) / m_users as f64).powf(1.0 / k) * gamma_bar).log2())
}

/// Binding effective threshold of `ue`: the largest of
/// `gamma_th P / (Lambda^d - gamma_th Delta^d)` over `d = 1..=m*`, with
/// `Lambda^d`, `Delta^d` averaged over the serving BSs. Infinite when any
/// denominator is non-positive.
pub fn effective_threshold(
    ue: usize,
    coeff: &PowerCoefficients,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<f64> {
    if ue >= assign.num_users() {
        return Err(invalid(format!("UE {ue} out of range")));
    }
    let serving = assign.serving(ue);
    if serving.is_empty() {
        return Err(invalid(format!("UE {ue} is not in any cluster")));
    }
    let p = params
        .equal_budget()
        .unwrap_or_else(|| params.power_budget.iter().sum::<f64>() / params.num_bs() as f64);
    let gamma = params.gamma_th;
    let mut worst = 0.0f64;
    for delta in 1..=assign.m_star(ue) {
        let (mut lambda, mut ini) = (0.0, 0.0);
        for &k in serving {
            let members = assign.members_by_rank(k);
            let pk = params.power_budget[k];
            lambda += members.get(delta - 1).map_or(0.0, |&j| coeff.a[(j, k)]) * pk;
            ini += members.iter().skip(delta).map(|&j| coeff.a[(j, k)]).sum::<f64>() * pk;
        }
        let s = serving.len() as f64;
        let den = lambda / s - gamma * ini / s;
        if den <= 0.0 {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(gamma * p / den);
    }
    Ok(worst)
}

/// `alpha[m,i] = (I_ici[m] + N[m]) / (2 P sigma[m,i]^2)`.
pub fn rate_parameters(sigma: &DMatrix<f64>, mean_ici: &[f64], noise: &[f64], p: f64) -> Result<DMatrix<f64>> {
    if mean_ici.len() != sigma.nrows() || noise.len() != sigma.nrows() {
        return Err(invalid("one ICI and noise value per UE is required"));
    }
    if !(p > 0.0) {
        return Err(invalid("power must be > 0"));
    }
    Ok(DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |m, i| {
        (mean_ici[m] + noise[m]) / (2.0 * p * sigma[(m, i)].powi(2))
    }))
}

pub fn write_curve_csv<W: Write>(out: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{constant_power_coefficients, ClusterAssignment};

    #[test]
    fn single_exponential() {
        for g in [0.1, 1.0, 3.0] {
            let got = ordered_sum_cdf(g, &[2.0], 1).unwrap();
            assert!((got - (1.0 - (-2.0 * g).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn cdf_limits() {
        let a = [0.5, 1.0, 2.0];
        assert_eq!(ordered_sum_cdf(0.0, &a, 2).unwrap(), 0.0);
        assert_eq!(ordered_sum_cdf(f64::INFINITY, &a, 2).unwrap(), 1.0);
        assert!((ordered_sum_cdf(200.0, &a, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_of_two_matches_product_form() {
        let (a, b) = (0.7f64, 1.9f64);
        for g in [0.2, 1.0, 2.5] {
            let want = (1.0 - (-a * g).exp()) * (1.0 - (-b * g).exp());
            assert!((ordered_sum_cdf(g, &[a, b], 1).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn full_sum_of_two_is_hypoexponential() {
        let (a, b) = (0.7f64, 1.9f64);
        for g in [0.2, 1.0, 2.5] {
            let want = 1.0 - (b * (-a * g).exp() - a * (-b * g).exp()) / (b - a);
            assert!((ordered_sum_cdf(g, &[a, b], 2).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn repeated_rates_rejected() {
        assert!(matches!(
            ordered_sum_cdf(1.0, &[1.0, 1.0, 2.0], 2),
            Err(Error::DegenerateDistribution(_))
        ));
    }

    #[test]
    fn at_least_counts() {
        let p = [0.2, 0.5, 0.9];
        assert!((at_least(&p, 0) - 1.0).abs() < 1e-15);
        assert!((at_least(&p, 1) - (1.0 - 0.8 * 0.5 * 0.1)).abs() < 1e-15);
        assert!((at_least(&p, 3) - 0.2 * 0.5 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn omega_one_reduces_to_cdf() {
        let spec = OutageSpec {
            gamma_th_prime: 1.3,
            alpha: DMatrix::from_row_slice(1, 3, &[0.5, 1.0, 1.7]),
            n: 2,
            omega: 1,
        };
        assert_eq!(
            outage_probability(1, &spec).unwrap(),
            ordered_sum_cdf(1.3, &[0.5, 1.0, 1.7], 2).unwrap()
        );
        let blocked = OutageSpec {
            gamma_th_prime: f64::INFINITY,
            ..spec
        };
        assert_eq!(outage_probability(1, &blocked).unwrap(), 1.0);
    }

    #[test]
    fn omega_cap() {
        let spec = OutageSpec {
            gamma_th_prime: 1.0,
            alpha: DMatrix::from_element(13, 1, 1.0),
            n: 1,
            omega: 13,
        };
        assert!(matches!(
            outage_probability(1, &spec),
            Err(Error::CombinatorialBlowup { .. })
        ));
    }

    #[test]
    fn iid_closed_form_limits() {
        let p = outage_full_order_iid(1, 1, 1.0, 0.7).unwrap();
        assert!((p - (1.0 - (-0.7f64).exp())).abs() < 1e-12);
        assert_eq!(outage_full_order_iid(3, 2, 1.0, 0.0).unwrap(), 0.0);
        assert!((outage_full_order_iid(3, 2, 1.0, 1e6).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(outage_full_order_iid(3, 2, 1.0, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn asymptote_single_link() {
        let (p, s) = outage_asymptotic(1, 1, 1e4, 1.0).unwrap();
        assert!((s.coding_gain - 1.0).abs() < 1e-12);
        assert_eq!(s.diversity_order, 1);
        assert!((p - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn asymptote_slope() {
        for k in 1..=4 {
            let (p1, _) = outage_asymptotic(3, k, 1e3, 2.0).unwrap();
            let (p2, _) = outage_asymptotic(3, k, 1e5, 2.0).unwrap();
            let slope = (p2.log10() - p1.log10()) / 2.0;
            assert!((slope + k as f64).abs() < 0.05);
        }
    }

    #[test]
    fn capacity_forms() {
        let c = epsilon_outage_capacity(1, 1, 100.0, 1.0).unwrap();
        assert!((c - 101f64.log2()).abs() < 1e-12);
        let c1 = epsilon_outage_capacity(4, 2, 1e6, 1e-3).unwrap();
        let c2 = epsilon_outage_capacity(4, 2, 2e6, 1e-3).unwrap();
        assert!((c2 - c1 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn threshold_single_user() {
        let a = ClusterAssignment::full_order(&[0], 2).unwrap();
        let c = constant_power_coefficients(&a);
        let p = SystemParams::uniform(1, 2, 2.0, 1.0, 3.0).unwrap();
        assert!((effective_threshold(0, &c, &a, &p).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_two_users() {
        let a = ClusterAssignment::full_order(&[0, 1], 1).unwrap();
        let c = constant_power_coefficients(&a);
        let mut p = SystemParams::uniform(2, 1, 2.0, 1.0, 0.5).unwrap();
        let g = effective_threshold(0, &c, &a, &p).unwrap();
        assert!((g - 0.5 / (0.5 - 0.25)).abs() < 1e-12);
        p.gamma_th = 1.0;
        assert_eq!(effective_threshold(0, &c, &a, &p).unwrap(), f64::INFINITY);
        p.gamma_th = 3.0;
        assert_eq!(effective_threshold(1, &c, &a, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn curve_csv_names_provenance() {
        let mut buf = Vec::new();
        write_curve_csv(
            &mut buf,
            &[CurvePoint {
                gamma_bar: 10.0,
                value: 0.5,
                provenance: Provenance::IidClosedForm,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "gamma_bar,value,provenance\n10.0,0.5,iid-closed-form\n");
    }
}
