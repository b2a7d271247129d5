//! Parameter sweeps producing the CSV data behind the outage, capacity,
//! spectral-efficiency and power-allocation curves.
//!
//! Powers are in dBm, the noise PSD in dBm/Hz and thresholds in dB. The SINR
//! threshold default of 15 is read as dB, and so is the SIC sensitivity
//! default of 1 (applied on the normalized-SNR scale of problem J).

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channels, ChannelMatrix};
use crate::clustering::{constant_power_coefficients, full_order_norm_cluster, ClusterAssignment};
use crate::error::{invalid, Result};
use crate::monte_carlo::{
    estimate_outage, estimate_spectral_efficiency, McConfig, McRecord, Scenario, UeSelector,
};
use crate::outage::{
    effective_threshold, epsilon_outage_capacity, outage_full_order_iid_rank, outage_probability, OutageSpec,
    Provenance,
};
use crate::params::{db_to_linear, dbm_to_watts, noise_power_watts, SystemParams};
use crate::power_alloc::{build_problem, oma_sum_rate, solve, SolveStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p_dbm: Vec<f64>,
    pub n: Vec<usize>,
    pub m_users: Vec<usize>,
    pub k_bs: Vec<usize>,
    pub scenarios: Vec<Scenario>,
    pub trials: usize,
    pub seed: u64,
    pub partitions: usize,
    pub out: Option<String>,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub gamma_th_db: f64,
    pub sic_sensitivity_db: f64,
    pub epsilon: f64,
    /// Per-UE minimum rate for power allocation (bits/s/Hz).
    pub min_rate: f64,
    /// Per-component variance `sigma^2` of every link.
    pub link_variance: f64,
    /// Ratio between the largest and smallest link variance; 1 gives i.i.d. links.
    pub variance_spread: f64,
    /// 1-based norm rank of the UE whose outage is reported.
    pub ue_rank: usize,
    pub interference_factor: f64,
    /// Channel realizations per power-allocation point.
    pub instances: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p_dbm: vec![-10.0, 0.0, 10.0, 20.0, 30.0, 40.0],
            n: vec![3],
            m_users: vec![3],
            k_bs: vec![3],
            scenarios: Scenario::ALL.to_vec(),
            trials: 100_000,
            seed: 1,
            partitions: 1,
            out: None,
            bandwidth_hz: 1e6,
            noise_psd_dbm_hz: -169.0,
            gamma_th_db: 15.0,
            sic_sensitivity_db: 1.0,
            epsilon: 1e-5,
            min_rate: 0.5,
            link_variance: 0.5e-10,
            variance_spread: 1.0,
            ue_rank: 1,
            interference_factor: 1e-3,
            instances: 200,
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub p_dbm: f64,
    pub n: usize,
    pub m_users: usize,
    pub k_bs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageRow {
    pub p_dbm: f64,
    pub n: usize,
    pub m_users: usize,
    pub k_bs: usize,
    pub ue_rank: usize,
    pub p_out_closed_form: Option<f64>,
    pub closed_form_provenance: Option<Provenance>,
    pub p_out_mc: f64,
    pub std_error: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRow {
    pub p_dbm: f64,
    pub k_bs: usize,
    pub m_users: usize,
    pub gamma_bar: f64,
    pub epsilon: f64,
    pub c_epsilon: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocRow {
    pub p_dbm: f64,
    pub m_users: usize,
    pub k_bs: usize,
    pub instances: usize,
    pub feasible: usize,
    /// `None` when no realization was feasible.
    pub sum_rate_noma: Option<f64>,
    pub sum_rate_oma: Option<f64>,
    /// Mean rate by norm position, weakest first.
    pub ue_rates: Option<Vec<f64>>,
}

impl PowerAllocRow {
    pub fn feasible_fraction(&self) -> f64 {
        self.feasible as f64 / self.instances as f64
    }
}

/// Rows produced by a sweep plus one message per point that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput<T> {
    pub rows: Vec<T>,
    pub failures: Vec<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("p_dbm", self.p_dbm.len()),
            ("n", self.n.len()),
            ("m_users", self.m_users.len()),
            ("k_bs", self.k_bs.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, len)| *len == 0) {
            return Err(invalid(format!("{name} must not be empty")));
        }
        let swept: Vec<&str> = lists.iter().filter(|(_, len)| *len > 1).map(|(n, _)| *n).collect();
        if swept.len() > 1 {
            return Err(invalid(format!("exactly one sweep variable allowed, got {}", swept.join(", "))));
        }
        if self.trials == 0 || self.partitions == 0 || self.instances == 0 {
            return Err(invalid("trials, partitions and instances must be at least 1"));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.link_variance > 0.0) || !(self.variance_spread >= 1.0) {
            return Err(invalid("bandwidth and link variance must be > 0, variance_spread >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon must lie in (0, 1)"));
        }
        if self.ue_rank == 0 {
            return Err(invalid("ue_rank is 1-based"));
        }
        Ok(())
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        let mut pts = Vec::new();
        for &p_dbm in &self.p_dbm {
            for &n in &self.n {
                for &m_users in &self.m_users {
                    for &k_bs in &self.k_bs {
                        pts.push(SweepPoint { p_dbm, n, m_users, k_bs });
                    }
                }
            }
        }
        Ok(pts)
    }

    pub fn noise_watts(&self) -> f64 {
        noise_power_watts(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }

    /// Per-component standard deviations, spread geometrically over the links.
    pub fn sigma(&self, m_users: usize, k_bs: usize) -> DMatrix<f64> {
        let links = (m_users * k_bs).max(2) - 1;
        DMatrix::from_fn(m_users, k_bs, |m, k| {
            let j = (m * k_bs + k) as f64 / links as f64;
            (self.link_variance * self.variance_spread.powf(j)).sqrt()
        })
    }

    pub fn params(&self, pt: &SweepPoint) -> Result<SystemParams> {
        SystemParams::new(
            vec![dbm_to_watts(pt.p_dbm); pt.k_bs],
            vec![self.noise_watts(); pt.m_users],
            db_to_linear(self.gamma_th_db),
            db_to_linear(self.sic_sensitivity_db),
            vec![self.min_rate; pt.m_users],
            self.epsilon,
        )
    }

    fn mc(&self, scenario: Scenario) -> McConfig {
        McConfig {
            trials: self.trials,
            seed: self.seed,
            partitions: 1,
            scenario,
            interference_factor: self.interference_factor,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.partitions)
            .build()
            .map_err(|e| invalid(format!("worker pool: {e}")))
    }
}

fn collect<T>(results: Vec<(SweepPoint, Result<T>)>) -> SweepOutput<T> {
    let mut out = SweepOutput {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (pt, r) in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(e) => out.failures.push(format!(
                "P={} dBm n={} M={} K={}: {e}",
                pt.p_dbm, pt.n, pt.m_users, pt.k_bs
            )),
        }
    }
    out
}

fn closed_form_outage(cfg: &ExperimentConfig, pt: &SweepPoint, params: &SystemParams) -> Result<Option<(f64, Provenance)>> {
    if pt.n != pt.k_bs {
        return Ok(None);
    }
    let order: Vec<usize> = (0..pt.m_users).collect();
    let assign = ClusterAssignment::full_order(&order, pt.k_bs)?;
    let coeff = constant_power_coefficients(&assign);
    let ue = order[cfg.ue_rank - 1];
    let gp = effective_threshold(ue, &coeff, &assign, params)?;
    let p = params.power_budget[0];
    let noise = params.noise[0];
    let sigma = cfg.sigma(pt.m_users, pt.k_bs);
    if cfg.variance_spread == 1.0 {
        let alpha = noise / (2.0 * p * cfg.link_variance);
        let v = outage_full_order_iid_rank(pt.m_users, pt.k_bs, alpha, gp, cfg.ue_rank)?;
        return Ok(Some((v, Provenance::IidClosedForm)));
    }
    let alpha = sigma.map(|s| noise / (2.0 * p * s * s));
    let spec = OutageSpec {
        gamma_th_prime: gp,
        alpha,
        n: pt.n,
        omega: pt.m_users,
    };
    Ok(Some((outage_probability(cfg.ue_rank, &spec)?, Provenance::OrderedSum)))
}

pub fn run_outage_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput<OutageRow>> {
    let pts = cfg.points()?;
    let eval = |pt: &SweepPoint| -> Result<OutageRow> {
        if pt.n == 0 || pt.n > pt.k_bs {
            return Err(invalid(format!("order {} outside [1, {}]", pt.n, pt.k_bs)));
        }
        if cfg.ue_rank > pt.m_users {
            return Err(invalid(format!("ue_rank {} exceeds M = {}", cfg.ue_rank, pt.m_users)));
        }
        let params = cfg.params(pt)?;
        let sigma = cfg.sigma(pt.m_users, pt.k_bs);
        let mc = estimate_outage(
            &cfg.mc(Scenario::GcompNoma),
            &params,
            &sigma,
            pt.n,
            UeSelector::NormRank(cfg.ue_rank),
        )?;
        let cf = closed_form_outage(cfg, pt, &params)?;
        Ok(OutageRow {
            p_dbm: pt.p_dbm,
            n: pt.n,
            m_users: pt.m_users,
            k_bs: pt.k_bs,
            ue_rank: cfg.ue_rank,
            p_out_closed_form: cf.map(|c| c.0),
            closed_form_provenance: cf.map(|c| c.1),
            p_out_mc: mc.mean,
            std_error: mc.std_error,
            trials: mc.trials_used,
        })
    };
    let results = cfg.pool()?.install(|| pts.par_iter().map(|pt| (*pt, eval(pt))).collect());
    Ok(collect(results))
}

pub fn run_capacity_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput<CapacityRow>> {
    let pts = cfg.points()?;
    let results = pts
        .iter()
        .map(|pt| {
            let r = (|| {
                let gamma_bar = 2.0 * dbm_to_watts(pt.p_dbm) * cfg.link_variance / cfg.noise_watts();
                Ok(CapacityRow {
                    p_dbm: pt.p_dbm,
                    k_bs: pt.k_bs,
                    m_users: pt.m_users,
                    gamma_bar,
                    epsilon: cfg.epsilon,
                    c_epsilon: epsilon_outage_capacity(pt.m_users, pt.k_bs, gamma_bar, cfg.epsilon)?,
                    provenance: Provenance::HighSnr,
                })
            })();
            (*pt, r)
        })
        .collect();
    Ok(collect(results))
}

pub fn run_spectral_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput<McRecord>> {
    let pts = cfg.points()?;
    let jobs: Vec<(SweepPoint, Scenario)> = pts
        .iter()
        .flat_map(|pt| cfg.scenarios.iter().map(move |s| (*pt, *s)))
        .collect();
    let eval = |pt: &SweepPoint, sc: Scenario| -> Result<Vec<McRecord>> {
        let params = cfg.params(pt)?;
        let se = estimate_spectral_efficiency(&cfg.mc(sc), &params, &cfg.sigma(pt.m_users, pt.k_bs))?;
        let rec = |metric: String, e: &crate::monte_carlo::McEstimate| McRecord {
            scenario: sc.to_string(),
            p_dbm: pt.p_dbm,
            n: pt.k_bs,
            m_users: pt.m_users,
            k_bs: pt.k_bs,
            metric,
            value: e.mean,
            std_error: e.std_error,
            trials: e.trials_used,
        };
        let mut rows = vec![rec("sum_rate".into(), &se.sum)];
        rows.extend(se.per_ue.iter().enumerate().map(|(i, e)| rec(format!("rate_ue{}", i + 1), e)));
        Ok(rows)
    };
    let results: Vec<(SweepPoint, Result<Vec<McRecord>>)> =
        cfg.pool()?.install(|| jobs.par_iter().map(|(pt, sc)| (*pt, eval(pt, *sc))).collect());
    let nested = collect(results);
    Ok(SweepOutput {
        rows: nested.rows.into_iter().flatten().collect(),
        failures: nested.failures,
    })
}

/// Optimal allocation over `instances` channel draws per point, averaging
/// only over draws whose problem is feasible without eviction.
pub fn run_power_alloc_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput<PowerAllocRow>> {
    let pts = cfg.points()?;
    let eval = |pt: &SweepPoint| -> Result<PowerAllocRow> {
        let params = cfg.params(pt)?;
        params.validate()?;
        let sigma = cfg.sigma(pt.m_users, pt.k_bs);
        let mut feasible = 0;
        let (mut noma, mut oma) = (0.0, 0.0);
        let mut rates = vec![0.0; pt.m_users];
        for i in 0..cfg.instances {
            let ch: ChannelMatrix = generate_channels(pt.m_users, pt.k_bs, &sigma, cfg.seed.wrapping_add(i as u64))?;
            let order = full_order_norm_cluster(&ch.magnitudes())?;
            let problem = build_problem(&ch, &params, &order)?;
            let sol = solve(&problem)?;
            if sol.status != SolveStatus::Optimal {
                continue;
            }
            feasible += 1;
            noma += sol.objective;
            oma += oma_sum_rate(&problem);
            for (acc, r) in rates.iter_mut().zip(problem.rates(&sol.a_star)) {
                *acc += r;
            }
        }
        let f = feasible as f64;
        Ok(PowerAllocRow {
            p_dbm: pt.p_dbm,
            m_users: pt.m_users,
            k_bs: pt.k_bs,
            instances: cfg.instances,
            feasible,
            sum_rate_noma: (feasible > 0).then(|| noma / f),
            sum_rate_oma: (feasible > 0).then(|| oma / f),
            ue_rates: (feasible > 0).then(|| rates.iter().map(|r| r / f).collect()),
        })
    };
    let results = cfg.pool()?.install(|| pts.par_iter().map(|pt| (*pt, eval(pt))).collect());
    Ok(collect(results))
}

pub fn write_outage_csv<W: Write>(out: W, rows: &[OutageRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_capacity_csv<W: Write>(out: W, rows: &[CapacityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `p_dbm, m_users, k_bs, instances, feasible_fraction, status,
/// sum_rate_noma, sum_rate_oma, rate_ue1..rate_ueM, provenance`. Rows
/// without any feasible draw carry status `no-feasible-realization` and
/// empty rate fields.
pub fn write_power_alloc_csv<W: Write>(out: W, rows: &[PowerAllocRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let max_m = rows.iter().map(|r| r.m_users).max().unwrap_or(0);
    let mut header: Vec<String> = [
        "p_dbm",
        "m_users",
        "k_bs",
        "instances",
        "feasible_fraction",
        "status",
        "sum_rate_noma",
        "sum_rate_oma",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=max_m).map(|i| format!("rate_ue{i}")));
    header.push("provenance".into());
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let mut rec = vec![
            r.p_dbm.to_string(),
            r.m_users.to_string(),
            r.k_bs.to_string(),
            r.instances.to_string(),
            r.feasible_fraction().to_string(),
            if r.feasible > 0 { "ok" } else { "no-feasible-realization" }.to_string(),
            opt(r.sum_rate_noma),
            opt(r.sum_rate_oma),
        ];
        for i in 0..max_m {
            rec.push(opt(r.ue_rates.as_ref().and_then(|v| v.get(i).copied())));
        }
        rec.push("mc".into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters() {
        let c = ExperimentConfig::default();
        assert_eq!(c.noise_psd_dbm_hz, -169.0);
        assert_eq!(c.gamma_th_db, 15.0);
        assert_eq!(c.sic_sensitivity_db, 1.0);
        assert_eq!(c.epsilon, 1e-5);
        assert!((c.noise_watts() - 10f64.powf(-13.9)).abs() / c.noise_watts() < 1e-12);
    }

    #[test]
    fn two_sweep_variables_rejected() {
        let c = ExperimentConfig {
            n: vec![1, 2],
            ..ExperimentConfig::default()
        };
        assert!(c.points().is_err());
        let c = ExperimentConfig {
            p_dbm: vec![],
            ..ExperimentConfig::default()
        };
        assert!(c.points().is_err());
    }

    #[test]
    fn single_point_outage_csv() {
        let c = ExperimentConfig {
            p_dbm: vec![20.0],
            trials: 2000,
            ..ExperimentConfig::default()
        };
        let out = run_outage_sweep(&c).unwrap();
        assert!(out.failures.is_empty());
        let mut buf = Vec::new();
        write_outage_csv(&mut buf, &out.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "p_dbm,n,m_users,k_bs,ue_rank,p_out_closed_form,closed_form_provenance,p_out_mc,std_error,trials"
        );
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn sweep_rows_keep_point_order() {
        let c = ExperimentConfig {
            trials: 500,
            partitions: 3,
            ..ExperimentConfig::default()
        };
        let out = run_outage_sweep(&c).unwrap();
        let p: Vec<f64> = out.rows.iter().map(|r| r.p_dbm).collect();
        assert_eq!(p, c.p_dbm);
    }

    #[test]
    fn bad_point_reported_not_fatal() {
        let c = ExperimentConfig {
            p_dbm: vec![10.0],
            n: vec![4],
            trials: 100,
            ..ExperimentConfig::default()
        };
        let out = run_outage_sweep(&c).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.failures.len(), 1);
    }

    #[test]
    fn empty_feasible_set_is_marked() {
        let c = ExperimentConfig {
            p_dbm: vec![-60.0],
            m_users: vec![2],
            k_bs: vec![1],
            n: vec![1],
            instances: 3,
            ..ExperimentConfig::default()
        };
        let out = run_power_alloc_sweep(&c).unwrap();
        assert_eq!(out.rows[0].feasible, 0);
        let mut buf = Vec::new();
        write_power_alloc_csv(&mut buf, &out.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("no-feasible-realization"));
        assert!(!text.contains("NaN"));
    }
}
