//! n-th order clustering, the low-complexity full-order norm clustering, and
//! the constant NOMA power rule.
//!
//! UE and BS indices are 0-based in the API. Ranks inside a cluster are
//! 1-based and ascending in channel quality: rank 1 is the weakest member,
//! which receives the largest power fraction and is decoded first by SIC.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    order_n: usize,
    /// `clusters[k]`: UEs served by BS `k`, in join order.
    clusters: Vec<Vec<usize>>,
    /// `by_rank[k]`: the same members sorted by ascending rank.
    by_rank: Vec<Vec<usize>>,
    /// `ue_rank[m][k]`: rank of UE `m` in cluster `k`, if served.
    ue_rank: Vec<Vec<Option<usize>>>,
    serving: Vec<Vec<usize>>,
    non_serving: Vec<Vec<usize>>,
}

/// JSON fixture form: `{"n": .., "clusters": [[ue, ..], ..]}` with 1-based UE labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterFixture {
    pub n: usize,
    pub clusters: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCoefficients {
    /// `a[(m, k)]`: fraction of `P_k` granted to UE `m` by BS `k`.
    pub a: DMatrix<f64>,
}

fn check_gains(gains: &DMatrix<f64>) -> Result<()> {
    if gains.nrows() == 0 || gains.ncols() == 0 {
        return Err(invalid("gain matrix must be non-empty"));
    }
    if gains.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
        return Err(invalid("gains must be finite and non-negative"));
    }
    Ok(())
}

/// Greedy n-round clustering. In each round every UE, in index order, joins
/// its best BS among those it has not joined yet. Ties go to the lowest BS
/// index. Members are ranked by `gains` inside each cluster.
pub fn nth_order_clusters(gains: &DMatrix<f64>, n: usize) -> Result<ClusterAssignment> {
    check_gains(gains)?;
    let (m_users, k_bs) = gains.shape();
    if n == 0 || n > k_bs {
        return Err(invalid(format!("clustering order {n} outside [1, {k_bs}]")));
    }
    let mut consumed = vec![vec![false; k_bs]; m_users];
    let mut clusters = vec![Vec::new(); k_bs];
    let mut serving = vec![Vec::with_capacity(n); m_users];
    for _round in 0..n {
        for m in 0..m_users {
            let mut best: Option<usize> = None;
            for k in 0..k_bs {
                if consumed[m][k] {
                    continue;
                }
                if best.map_or(true, |b| gains[(m, k)] > gains[(m, b)]) {
                    best = Some(k);
                }
            }
            let k = best.expect("n <= K leaves an unconsumed BS every round");
            consumed[m][k] = true;
            clusters[k].push(m);
            serving[m].push(k);
        }
    }
    ClusterAssignment::from_parts(n, clusters, gains)
}

/// UEs sorted ascending by `sum_k |H(m,k)|^2`, ties broken by UE index.
///
/// `magnitudes` holds `|H(m,k)|`; the metric squares them.
pub fn full_order_norm_cluster(magnitudes: &DMatrix<f64>) -> Result<Vec<usize>> {
    check_gains(magnitudes)?;
    let metric = norm_metric(magnitudes);
    let mut order: Vec<usize> = (0..magnitudes.nrows()).collect();
    order.sort_by(|&a, &b| metric[a].total_cmp(&metric[b]).then(a.cmp(&b)));
    Ok(order)
}

/// [`full_order_norm_cluster`] for a matrix that already holds `|H|^2`.
pub fn full_order_from_power_gains(power: &DMatrix<f64>) -> Vec<usize> {
    let metric: Vec<f64> = power.row_iter().map(|r| r.sum()).collect();
    let mut order: Vec<usize> = (0..power.nrows()).collect();
    order.sort_by(|&a, &b| metric[a].total_cmp(&metric[b]).then(a.cmp(&b)));
    order
}

pub fn norm_metric(magnitudes: &DMatrix<f64>) -> Vec<f64> {
    magnitudes
        .row_iter()
        .map(|r| r.iter().map(|x| x * x).sum())
        .collect()
}

/// Rank-`i` member (weakest first) gets `2^-i` for `i < L`; the strongest
/// member repeats the `2^-(L-1)` share, so each non-empty column sums to one.
/// A lone member gets the full budget.
pub fn constant_power_coefficients(assign: &ClusterAssignment) -> PowerCoefficients {
    let mut a = DMatrix::zeros(assign.num_users(), assign.num_bs());
    for (k, members) in assign.by_rank.iter().enumerate() {
        let size = members.len();
        for (pos, &m) in members.iter().enumerate() {
            let rank = pos + 1;
            let share = if size == 1 {
                1.0
            } else if rank < size {
                0.5f64.powi(rank as i32)
            } else {
                0.5f64.powi(size as i32 - 1)
            };
            a[(m, k)] = share;
        }
    }
    PowerCoefficients { a }
}

impl ClusterAssignment {
    fn from_parts(order_n: usize, clusters: Vec<Vec<usize>>, keys: &DMatrix<f64>) -> Result<Self> {
        let (m_users, k_bs) = keys.shape();
        if clusters.len() != k_bs {
            return Err(invalid("one cluster per BS is required"));
        }
        let mut serving = vec![Vec::new(); m_users];
        // Serving sets in join order: replay round-robin by cluster position.
        let mut joined: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m_users];
        for (k, members) in clusters.iter().enumerate() {
            for (pos, &m) in members.iter().enumerate() {
                if m >= m_users {
                    return Err(invalid(format!("UE index {m} out of range")));
                }
                joined[m].push((pos, k));
            }
        }
        for (m, list) in joined.iter_mut().enumerate() {
            // Join order is by descending key, which equals the greedy round order.
            list.sort_by(|a, b| keys[(m, b.1)].total_cmp(&keys[(m, a.1)]).then(a.1.cmp(&b.1)));
            serving[m] = list.iter().map(|&(_, k)| k).collect();
            if serving[m].len() != order_n {
                return Err(invalid(format!(
                    "UE {m} belongs to {} clusters, expected {order_n}",
                    serving[m].len()
                )));
            }
            let mut dedup = serving[m].clone();
            dedup.sort_unstable();
            dedup.dedup();
            if dedup.len() != order_n {
                return Err(invalid(format!("UE {m} joins the same BS twice")));
            }
        }
        let non_serving = serving
            .iter()
            .map(|s| (0..k_bs).filter(|k| !s.contains(k)).collect())
            .collect();
        let mut out = ClusterAssignment {
            order_n,
            clusters,
            by_rank: Vec::new(),
            ue_rank: Vec::new(),
            serving,
            non_serving,
        };
        out.rank_members(keys)?;
        Ok(out)
    }

    /// Full-order assignment where every BS serves every UE with the shared
    /// ranking given by `order` (weakest first), as produced by
    /// [`full_order_norm_cluster`].
    pub fn full_order(order: &[usize], k_bs: usize) -> Result<Self> {
        let m_users = order.len();
        let mut seen = vec![false; m_users];
        for &m in order {
            if m >= m_users || seen[m] {
                return Err(invalid("order must be a permutation of 0..M"));
            }
            seen[m] = true;
        }
        if k_bs == 0 || m_users == 0 {
            return Err(invalid("need at least one UE and one BS"));
        }
        let mut ue_rank = vec![vec![None; k_bs]; m_users];
        for (pos, &m) in order.iter().enumerate() {
            ue_rank[m].iter_mut().for_each(|r| *r = Some(pos + 1));
        }
        Ok(ClusterAssignment {
            order_n: k_bs,
            clusters: vec![order.to_vec(); k_bs],
            by_rank: vec![order.to_vec(); k_bs],
            ue_rank,
            serving: vec![(0..k_bs).collect(); m_users],
            non_serving: vec![Vec::new(); m_users],
        })
    }

    /// Re-ranks members of every cluster ascending by `keys[(m, k)]`
    /// (ties by UE index). Join order in [`clusters`](Self::clusters) is kept.
    pub fn rank_members(&mut self, keys: &DMatrix<f64>) -> Result<()> {
        if keys.shape() != (self.num_users(), self.num_bs()) {
            return Err(invalid("rank keys must be M x K"));
        }
        let mut ue_rank = vec![vec![None; self.num_bs()]; self.num_users()];
        let mut by_rank = Vec::with_capacity(self.num_bs());
        for (k, members) in self.clusters.iter().enumerate() {
            let mut sorted = members.clone();
            sorted.sort_by(|&a, &b| keys[(a, k)].total_cmp(&keys[(b, k)]).then(a.cmp(&b)));
            for (pos, &m) in sorted.iter().enumerate() {
                ue_rank[m][k] = Some(pos + 1);
            }
            by_rank.push(sorted);
        }
        self.ue_rank = ue_rank;
        self.by_rank = by_rank;
        Ok(())
    }

    /// Ranks by `g[m,k] / I_ICI(m)` where `I_ICI(m) = sum_{w not serving m} P_w g[m,w]`.
    /// Falls back to the plain gain when a UE has no interferers.
    pub fn rank_by_ici_normalized_gain(&mut self, gains: &DMatrix<f64>, power: &[f64]) -> Result<()> {
        if power.len() != self.num_bs() {
            return Err(invalid("one power budget per BS is required"));
        }
        let keys = DMatrix::from_fn(self.num_users(), self.num_bs(), |m, k| {
            let ici: f64 = self.non_serving[m].iter().map(|&w| power[w] * gains[(m, w)]).sum();
            if ici > 0.0 {
                gains[(m, k)] / ici
            } else {
                gains[(m, k)]
            }
        });
        self.rank_members(&keys)
    }

    pub fn order_n(&self) -> usize {
        self.order_n
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    pub fn num_bs(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Members of cluster `k` sorted weakest first.
    pub fn members_by_rank(&self, k: usize) -> &[usize] {
        &self.by_rank[k]
    }

    pub fn rank(&self, ue: usize, bs: usize) -> Option<usize> {
        self.ue_rank[ue][bs]
    }

    pub fn serving(&self, ue: usize) -> &[usize] {
        &self.serving[ue]
    }

    pub fn non_serving(&self, ue: usize) -> &[usize] {
        &self.non_serving[ue]
    }

    pub fn cluster_size(&self, k: usize) -> usize {
        self.clusters[k].len()
    }

    /// `m* = max_k m_k` over the clusters serving `ue`.
    pub fn m_star(&self, ue: usize) -> usize {
        self.serving[ue]
            .iter()
            .filter_map(|&k| self.ue_rank[ue][k])
            .max()
            .unwrap_or(0)
    }

    /// Largest cluster containing `ue`.
    pub fn omega(&self, ue: usize) -> usize {
        self.serving[ue].iter().map(|&k| self.clusters[k].len()).max().unwrap_or(0)
    }

    /// Largest cluster overall.
    pub fn max_cluster_size(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn fixture(&self) -> ClusterFixture {
        ClusterFixture {
            n: self.order_n,
            clusters: self
                .clusters
                .iter()
                .map(|c| c.iter().map(|m| m + 1).collect())
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.fixture())?)
    }

    /// Rebuilds an assignment from a fixture, ranking members by `gains`.
    pub fn from_fixture(fx: &ClusterFixture, gains: &DMatrix<f64>) -> Result<Self> {
        check_gains(gains)?;
        let clusters = fx
            .clusters
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&label| label.checked_sub(1).ok_or_else(|| invalid("UE labels are 1-based")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(fx.n, clusters, gains)
    }
}

impl PowerCoefficients {
    /// Checks the per-BS budget and that only serving BSs allocate power.
    pub fn validate(&self, assign: &ClusterAssignment) -> Result<()> {
        if self.a.shape() != (assign.num_users(), assign.num_bs()) {
            return Err(invalid("coefficient matrix must be M x K"));
        }
        for k in 0..assign.num_bs() {
            let col: f64 = self.a.column(k).sum();
            if col > 1.0 + 1e-12 {
                return Err(invalid(format!("BS {k} allocates {col} > 1")));
            }
        }
        for m in 0..assign.num_users() {
            for &k in assign.non_serving(m) {
                if self.a[(m, k)] != 0.0 {
                    return Err(invalid(format!("BS {k} does not serve UE {m} but allocates power")));
                }
            }
        }
        if self.a.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(invalid("coefficients must be finite and non-negative"));
        }
        Ok(())
    }
}
