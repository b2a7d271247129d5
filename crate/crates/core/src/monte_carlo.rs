//! Monte-Carlo estimators for outage, spectral efficiency and mean ICI.
//!
//! Trials run in fixed batches of [`BATCH`]; batch `b` draws from ChaCha
//! stream `b + 1` of the configured seed and batch statistics are merged in
//! batch order, so estimates do not depend on how many workers ran them.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{check_sigma, sample_power_gains, stream_rng};
use crate::clustering::{
    constant_power_coefficients, full_order_from_power_gains, nth_order_clusters, ClusterAssignment,
};
use crate::error::{invalid, Result};
use crate::params::SystemParams;
use crate::sinr::{decode_sinr, instantaneous_sinr};

pub const BATCH: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    GcompNoma,
    GcompOma,
    CompNoma,
    CompOma,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::GcompNoma,
        Scenario::GcompOma,
        Scenario::CompNoma,
        Scenario::CompOma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::GcompNoma => "gcomp-noma",
            Scenario::GcompOma => "gcomp-oma",
            Scenario::CompNoma => "comp-noma",
            Scenario::CompOma => "comp-oma",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub partitions: usize,
    pub scenario: Scenario,
    /// Fraction of its budget a non-cooperating BS leaks into CoMP UEs.
    pub interference_factor: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 2_000_000,
            seed: 1,
            partitions: 1,
            scenario: Scenario::GcompNoma,
            interference_factor: 1e-3,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.partitions == 0 {
            return Err(invalid("partitions must be at least 1"));
        }
        if !(self.interference_factor >= 0.0 && self.interference_factor.is_finite()) {
            return Err(invalid("interference_factor must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials_used: usize,
}

/// Which UE an outage estimate follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeSelector {
    /// A fixed UE index.
    Index(usize),
    /// Whichever UE holds this 1-based position in the ascending norm order.
    NormRank(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEfficiency {
    pub per_ue: Vec<McEstimate>,
    pub sum: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRecord {
    pub scenario: String,
    #[serde(rename = "P_dBm")]
    pub p_dbm: f64,
    pub n: usize,
    #[serde(rename = "M")]
    pub m_users: usize,
    #[serde(rename = "K")]
    pub k_bs: usize,
    pub metric: String,
    pub value: f64,
    pub std_error: f64,
    pub trials: usize,
}

pub fn write_records_csv<W: Write>(out: W, rows: &[McRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `trials` evaluations of `trial`, each writing `dim` samples, and
/// returns per-dimension estimates.
pub fn run_trials<F>(cfg: &McConfig, dim: usize, trial: F) -> Result<Vec<McEstimate>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    cfg.validate()?;
    let batches = cfg.trials.div_ceil(BATCH);
    let run_batch = |b: usize| -> Result<Vec<(f64, f64)>> {
        let mut rng = stream_rng(cfg.seed, b as u64 + 1);
        let count = BATCH.min(cfg.trials - b * BATCH);
        let mut acc = vec![(0.0, 0.0); dim];
        let mut out = vec![0.0; dim];
        for _ in 0..count {
            trial(&mut rng, &mut out)?;
            for (a, &x) in acc.iter_mut().zip(&out) {
                a.0 += x;
                a.1 += x * x;
            }
        }
        Ok(acc)
    };
    let per_batch: Vec<Result<Vec<(f64, f64)>>> = if cfg.partitions == 1 {
        (0..batches).map(run_batch).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.partitions)
            .build()
            .map_err(|e| invalid(format!("worker pool: {e}")))?;
        pool.install(|| (0..batches).into_par_iter().map(run_batch).collect())
    };
    let mut total = vec![(0.0, 0.0); dim];
    for batch in per_batch {
        for (t, b) in total.iter_mut().zip(batch?) {
            t.0 += b.0;
            t.1 += b.1;
        }
    }
    let n = cfg.trials as f64;
    Ok(total
        .into_iter()
        .map(|(s, s2)| {
            let mean = s / n;
            let var = if cfg.trials > 1 {
                ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            McEstimate {
                mean,
                std_error: (var / n).sqrt(),
                trials_used: cfg.trials,
            }
        })
        .collect())
}

fn check_inputs(params: &SystemParams, sigma: &DMatrix<f64>) -> Result<()> {
    check_sigma(sigma)?;
    params.validate()?;
    if params.num_users() != sigma.nrows() || params.num_bs() != sigma.ncols() {
        return Err(invalid("sigma must be M x K to match the system parameters"));
    }
    Ok(())
}

/// Clusters one channel draw: shared norm ordering for `n = K`, greedy
/// n-th order clusters ranked by ICI-normalized gain otherwise.
pub fn cluster_draw(g: &DMatrix<f64>, n: usize, params: &SystemParams) -> Result<(ClusterAssignment, Vec<usize>)> {
    let order = full_order_from_power_gains(g);
    let assign = if n == g.ncols() {
        ClusterAssignment::full_order(&order, g.ncols())?
    } else {
        let mut a = nth_order_clusters(g, n)?;
        a.rank_by_ici_normalized_gain(g, &params.power_budget)?;
        a
    };
    Ok((assign, order))
}

/// Whether `ue` fails to decode its own signal or any weaker-ranked signal
/// it has to cancel first.
pub fn outage_event(
    ue: usize,
    g: &DMatrix<f64>,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> Result<bool> {
    let coeff = constant_power_coefficients(assign);
    let gamma = params.gamma_th;
    if instantaneous_sinr(ue, g, &coeff, assign, params)? < gamma {
        return Ok(true);
    }
    for delta in 1..assign.m_star(ue) {
        if decode_sinr(delta, ue, g, &coeff, assign, params)? < gamma {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Outage frequency of the selected UE under halving power shares.
pub fn estimate_outage(
    cfg: &McConfig,
    params: &SystemParams,
    sigma: &DMatrix<f64>,
    n: usize,
    ue: UeSelector,
) -> Result<McEstimate> {
    check_inputs(params, sigma)?;
    let (m_users, k_bs) = sigma.shape();
    if n == 0 || n > k_bs {
        return Err(invalid(format!("order {n} outside [1, {k_bs}]")));
    }
    match ue {
        UeSelector::Index(i) if i >= m_users => return Err(invalid(format!("UE {i} out of range"))),
        UeSelector::NormRank(r) if r == 0 || r > m_users => {
            return Err(invalid(format!("norm rank {r} outside [1, {m_users}]")))
        }
        _ => {}
    }
    let est = run_trials(cfg, 1, |rng, out| {
        let g = sample_power_gains(rng, sigma);
        let (assign, order) = cluster_draw(&g, n, params)?;
        let target = match ue {
            UeSelector::Index(i) => i,
            UeSelector::NormRank(r) => order[r - 1],
        };
        out[0] = if outage_event(target, &g, &assign, params)? { 1.0 } else { 0.0 };
        Ok(())
    })?;
    Ok(est[0])
}

/// Frequency of the order-statistic outage event: among `alpha.nrows()`
/// members, at least `rank` have `z <= gamma_th_prime`, where each `z` is the
/// sum of the `n` largest of `K` exponential link SNRs with rates `alpha`.
pub fn estimate_order_statistic_outage(
    cfg: &McConfig,
    alpha: &DMatrix<f64>,
    n: usize,
    rank: usize,
    gamma_th_prime: f64,
) -> Result<McEstimate> {
    let (omega, k_bs) = alpha.shape();
    if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(invalid("rates must be finite and > 0"));
    }
    if n == 0 || n > k_bs || rank == 0 || rank > omega {
        return Err(invalid("order or rank out of range"));
    }
    let sigma = alpha.map(|a| (0.5 / a).sqrt());
    let est = run_trials(cfg, 1, |rng, out| {
        let z = sample_power_gains(rng, &sigma);
        let mut below = 0;
        let mut row = vec![0.0; k_bs];
        for u in 0..omega {
            row.iter_mut().enumerate().for_each(|(i, x)| *x = z[(u, i)]);
            row.sort_by(|a, b| b.total_cmp(a));
            if row[..n].iter().sum::<f64>() <= gamma_th_prime {
                below += 1;
            }
        }
        out[0] = if below >= rank { 1.0 } else { 0.0 };
        Ok(())
    })?;
    Ok(est[0])
}

/// Mean ICI at a UE with link deviations `sigma_row` that is served by its
/// `n` strongest BSs while BS `w` radiates `phi[w]`.
pub fn estimate_average_ici(cfg: &McConfig, sigma_row: &[f64], phi: &[f64], n: usize) -> Result<McEstimate> {
    let k_bs = sigma_row.len();
    if phi.len() != k_bs || n == 0 || n > k_bs {
        return Err(invalid("inconsistent ICI inputs"));
    }
    let sigma = DMatrix::from_row_slice(1, k_bs, sigma_row);
    check_sigma(&sigma)?;
    let est = run_trials(cfg, 1, |rng, out| {
        let g = sample_power_gains(rng, &sigma);
        let mut idx: Vec<usize> = (0..k_bs).collect();
        idx.sort_by(|&a, &b| g[(0, a)].total_cmp(&g[(0, b)]));
        out[0] = idx[..k_bs - n].iter().map(|&w| phi[w] * g[(0, w)]).sum();
        Ok(())
    })?;
    Ok(est[0])
}

/// Per-UE and sum spectral efficiency (bits/s/Hz) under `cfg.scenario`.
pub fn estimate_spectral_efficiency(
    cfg: &McConfig,
    params: &SystemParams,
    sigma: &DMatrix<f64>,
) -> Result<SpectralEfficiency> {
    check_inputs(params, sigma)?;
    let m_users = sigma.nrows();
    let est = run_trials(cfg, m_users + 1, |rng, out| {
        let g = sample_power_gains(rng, sigma);
        let rates = scenario_rates(cfg.scenario, &g, params, cfg.interference_factor)?;
        out[..m_users].copy_from_slice(&rates);
        out[m_users] = rates.iter().sum();
        Ok(())
    })?;
    Ok(SpectralEfficiency {
        per_ue: est[..m_users].to_vec(),
        sum: est[m_users],
    })
}

/// Instantaneous per-UE rates of one channel draw.
pub fn scenario_rates(
    scenario: Scenario,
    g: &DMatrix<f64>,
    params: &SystemParams,
    interference_factor: f64,
) -> Result<Vec<f64>> {
    let (m_users, k_bs) = g.shape();
    match scenario {
        Scenario::GcompNoma => {
            let order = full_order_from_power_gains(g);
            let assign = ClusterAssignment::full_order(&order, k_bs)?;
            let coeff = constant_power_coefficients(&assign);
            (0..m_users)
                .map(|m| Ok((1.0 + instantaneous_sinr(m, g, &coeff, &assign, params)?).log2()))
                .collect()
        }
        Scenario::GcompOma => Ok((0..m_users)
            .map(|m| {
                let snr: f64 = (0..k_bs).map(|k| params.power_budget[k] * g[(m, k)]).sum::<f64>() / params.noise[m];
                (1.0 + snr).log2() / m_users as f64
            })
            .collect()),
        Scenario::CompNoma | Scenario::CompOma => {
            let serving = comp_serving_sets(g);
            let leak = |m: usize| -> f64 {
                (0..k_bs)
                    .filter(|k| !serving[m].contains(k))
                    .map(|k| interference_factor * params.power_budget[k] * g[(m, k)])
                    .sum()
            };
            if scenario == Scenario::CompOma {
                return Ok((0..m_users)
                    .map(|m| {
                        let s: f64 = serving[m].iter().map(|&k| params.power_budget[k] * g[(m, k)]).sum();
                        (1.0 + s / (params.noise[m] + leak(m))).log2() / m_users as f64
                    })
                    .collect());
            }
            // Halving shares inside each BS cluster, weakest member first.
            let mut a = DMatrix::<f64>::zeros(m_users, k_bs);
            let mut tail = DMatrix::<f64>::zeros(m_users, k_bs);
            for k in 0..k_bs {
                let mut members: Vec<usize> = (0..m_users).filter(|&m| serving[m].contains(&k)).collect();
                members.sort_by(|&x, &y| g[(x, k)].total_cmp(&g[(y, k)]).then(x.cmp(&y)));
                let l = members.len();
                for (pos, &m) in members.iter().enumerate() {
                    let rank = pos + 1;
                    a[(m, k)] = if l == 1 {
                        1.0
                    } else if rank < l {
                        0.5f64.powi(rank as i32)
                    } else {
                        0.5f64.powi(l as i32 - 1)
                    };
                }
                for (pos, &m) in members.iter().enumerate() {
                    tail[(m, k)] = members[pos + 1..].iter().map(|&j| a[(j, k)]).sum();
                }
            }
            Ok((0..m_users)
                .map(|m| {
                    let (mut desired, mut ini) = (0.0, 0.0);
                    for &k in &serving[m] {
                        let pg = params.power_budget[k] * g[(m, k)];
                        desired += a[(m, k)] * pg;
                        ini += tail[(m, k)] * pg;
                    }
                    (1.0 + desired / (ini + leak(m) + params.noise[m])).log2()
                })
                .collect())
        }
    }
}

/// CoMP baseline serving sets: the best BS, plus the runner-up when it is
/// within 3 dB of the best (a cell-edge UE).
pub fn comp_serving_sets(g: &DMatrix<f64>) -> Vec<Vec<usize>> {
    (0..g.nrows())
        .map(|m| {
            let mut idx: Vec<usize> = (0..g.ncols()).collect();
            idx.sort_by(|&a, &b| g[(m, b)].total_cmp(&g[(m, a)]).then(a.cmp(&b)));
            if idx.len() > 1 && g[(m, idx[1])] >= 0.5 * g[(m, idx[0])] {
                vec![idx[0], idx[1]]
            } else {
                vec![idx[0]]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(trials: usize) -> McConfig {
        McConfig {
            trials,
            seed: 7,
            partitions: 1,
            ..McConfig::default()
        }
    }

    #[test]
    fn threshold_extremes() {
        let sigma = DMatrix::from_element(2, 2, 1.0);
        let mut p = SystemParams::uniform(2, 2, 1.0, 1.0, 0.0).unwrap();
        let e = estimate_outage(&cfg(2000), &p, &sigma, 2, UeSelector::NormRank(1)).unwrap();
        assert_eq!(e.mean, 0.0);
        p.gamma_th = 1e12;
        let e = estimate_outage(&cfg(2000), &p, &sigma, 2, UeSelector::Index(1)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn worker_count_does_not_change_estimates() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.8, 1.2]);
        let p = SystemParams::uniform(2, 2, 1.0, 1.0, 0.3).unwrap();
        let mut c = cfg(35_000);
        let a = estimate_outage(&c, &p, &sigma, 1, UeSelector::Index(0)).unwrap();
        c.partitions = 3;
        let b = estimate_outage(&c, &p, &sigma, 1, UeSelector::Index(0)).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn single_user_access_schemes_coincide() {
        let sigma = DMatrix::from_element(1, 1, 1.0);
        let p = SystemParams::uniform(1, 1, 2.0, 1.0, 1.0).unwrap();
        let mut c = cfg(20_000);
        let mut means = Vec::new();
        for s in Scenario::ALL {
            c.scenario = s;
            means.push(estimate_spectral_efficiency(&c, &p, &sigma).unwrap().sum.mean);
        }
        assert!(means.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{means:?}");
    }

    #[test]
    fn ici_single_term_mean() {
        // The one interferer of K=2, n=1 is the weaker link; its gain is
        // Exp with rate r1 + r2.
        let sigma = [1.0, 0.6];
        let rate: f64 = sigma.iter().map(|s: &f64| 0.5 / (s * s)).sum();
        let e = estimate_average_ici(&cfg(400_000), &sigma, &[1.0, 1.0], 1).unwrap();
        assert!((e.mean - 1.0 / rate).abs() < 4.0 * e.std_error);
        assert_eq!(estimate_average_ici(&cfg(10), &sigma, &[1.0, 1.0], 2).unwrap().mean, 0.0);
    }

    #[test]
    fn scenario_parsing() {
        for s in Scenario::ALL {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert!("noma".parse::<Scenario>().is_err());
    }

    #[test]
    fn comp_serving_rule() {
        let g = DMatrix::from_row_slice(2, 3, &[1.0, 0.6, 0.1, 1.0, 0.4, 0.1]);
        let s = comp_serving_sets(&g);
        assert_eq!(s[0], vec![0, 1]);
        assert_eq!(s[1], vec![0]);
    }
}
