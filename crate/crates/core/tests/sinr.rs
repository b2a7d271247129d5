use gcomp_core::channel::{sample_power_gains, stream_rng};
use gcomp_core::clustering::{constant_power_coefficients, nth_order_clusters, ClusterAssignment, PowerCoefficients};
use gcomp_core::sinr::{decode_sinr, instantaneous_ici, instantaneous_sinr, sinr_breakdown};
use gcomp_core::SystemParams;
use nalgebra::DMatrix;
use rand::Rng;

/// Classifies every transmitted component at `ue` from scratch.
fn brute_force_sinr(
    ue: usize,
    g: &DMatrix<f64>,
    a: &DMatrix<f64>,
    assign: &ClusterAssignment,
    params: &SystemParams,
) -> f64 {
    let (m_users, k_bs) = g.shape();
    let (mut desired, mut ini, mut ici) = (0.0, 0.0, 0.0);
    for k in 0..k_bs {
        let serves_ue = assign.clusters()[k].contains(&ue);
        for j in 0..m_users {
            if !assign.clusters()[k].contains(&j) {
                continue;
            }
            let power = a[(j, k)] * params.power_budget[k] * g[(ue, k)];
            if !serves_ue {
                ici += power;
            } else if j == ue {
                desired += power;
            } else if assign.rank(j, k) > assign.rank(ue, k) {
                ini += power;
            }
        }
    }
    desired / (ini + ici + params.noise[ue])
}

#[test]
fn matches_term_by_term_oracle() {
    let mut rng = stream_rng(5, 0);
    for _ in 0..500 {
        let (m_users, k_bs) = (rng.random_range(1..6), rng.random_range(1..5));
        let n = rng.random_range(1..=k_bs);
        let sigma = DMatrix::from_fn(m_users, k_bs, |_, _| rng.random_range(0.3..1.5));
        let g = sample_power_gains(&mut rng, &sigma);
        let mut assign = nth_order_clusters(&g, n).unwrap();
        let keys = DMatrix::from_fn(m_users, k_bs, |_, _| rng.random::<f64>());
        assign.rank_members(&keys).unwrap();
        let coeff = constant_power_coefficients(&assign);
        let powers: Vec<f64> = (0..k_bs).map(|_| rng.random_range(0.5..4.0)).collect();
        let params = SystemParams::new(powers, vec![0.3; m_users], 1.0, 0.0, vec![0.0; m_users], 1e-5).unwrap();
        for ue in 0..m_users {
            let got = instantaneous_sinr(ue, &g, &coeff, &assign, &params).unwrap();
            let want = brute_force_sinr(ue, &g, &coeff.a, &assign, &params);
            assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn two_user_textbook_values() {
    let g = DMatrix::from_column_slice(2, 1, &[0.4, 2.0]);
    let assign = ClusterAssignment::full_order(&[0, 1], 1).unwrap();
    let coeff = constant_power_coefficients(&assign);
    let params = SystemParams::uniform(2, 1, 3.0, 0.5, 1.0).unwrap();
    let weak = instantaneous_sinr(0, &g, &coeff, &assign, &params).unwrap();
    assert!((weak - (0.5 * 3.0 * 0.4) / (0.5 * 3.0 * 0.4 + 0.5)).abs() < 1e-15);
    let strong_decodes_weak = decode_sinr(1, 1, &g, &coeff, &assign, &params).unwrap();
    assert!((strong_decodes_weak - (0.5 * 3.0 * 2.0) / (0.5 * 3.0 * 2.0 + 0.5)).abs() < 1e-15);
    let own = decode_sinr(2, 1, &g, &coeff, &assign, &params).unwrap();
    assert_eq!(own, instantaneous_sinr(1, &g, &coeff, &assign, &params).unwrap());
}

#[test]
fn full_order_has_no_ici() {
    let g = DMatrix::from_row_slice(2, 2, &[0.3, 0.9, 1.1, 0.2]);
    let assign = ClusterAssignment::full_order(&[0, 1], 2).unwrap();
    let coeff = constant_power_coefficients(&assign);
    let params = SystemParams::uniform(2, 2, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(instantaneous_ici(0, &g, &coeff, &assign, &params).unwrap(), 0.0);
    let b = sinr_breakdown(0, &g, &coeff, &assign, &params).unwrap();
    assert_eq!(b.ici, 0.0);
}

#[test]
fn single_serving_bs_ici_is_one_term() {
    let g = DMatrix::from_row_slice(1, 2, &[0.9, 0.4]);
    let assign = nth_order_clusters(&g, 1).unwrap();
    let coeff = constant_power_coefficients(&assign);
    let params = SystemParams::new(vec![2.0, 3.0], vec![1.0], 1.0, 0.0, vec![0.0], 1e-5).unwrap();
    // BS 1 has no members, so it radiates nothing.
    assert_eq!(instantaneous_ici(0, &g, &coeff, &assign, &params).unwrap(), 0.0);
    let coeff = PowerCoefficients { a: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]) };
    assert_eq!(instantaneous_ici(0, &g, &coeff, &assign, &params).unwrap(), 0.0);
}

/// Shares that grow with rank: each stronger member gets at least as much.
fn increasing_coefficients<R: Rng>(rng: &mut R, m_users: usize) -> PowerCoefficients {
    let mut shares: Vec<f64> = (0..m_users).map(|_| rng.random::<f64>()).collect();
    shares.sort_by(f64::total_cmp);
    let total: f64 = shares.iter().sum();
    PowerCoefficients {
        a: DMatrix::from_fn(m_users, 1, |m, _| shares[m] / total),
    }
}

#[test]
fn decode_sinr_rises_with_delta_for_increasing_shares() {
    let mut rng = stream_rng(9, 0);
    for _ in 0..10_000 {
        let m_users = rng.random_range(2..6);
        let g = DMatrix::from_fn(m_users, 1, |_, _| rng.random_range(0.1..3.0));
        let order: Vec<usize> = (0..m_users).collect();
        let assign = ClusterAssignment::full_order(&order, 1).unwrap();
        let coeff = increasing_coefficients(&mut rng, m_users);
        let params = SystemParams::uniform(m_users, 1, 2.0, 0.2, 1.0).unwrap();
        let ue = m_users - 1;
        let s: Vec<f64> = (1..=m_users)
            .map(|d| decode_sinr(d, ue, &g, &coeff, &assign, &params).unwrap())
            .collect();
        for w in s.windows(2) {
            assert!(w[0] <= w[1] * (1.0 + 1e-12));
        }
    }
}

#[test]
fn halving_shares_make_decode_sinr_fall() {
    let g = DMatrix::from_element(4, 1, 1.0);
    let assign = ClusterAssignment::full_order(&[0, 1, 2, 3], 1).unwrap();
    let coeff = constant_power_coefficients(&assign);
    let params = SystemParams::uniform(4, 1, 1.0, 1.0, 1.0).unwrap();
    let s1 = decode_sinr(1, 3, &g, &coeff, &assign, &params).unwrap();
    let s2 = decode_sinr(2, 3, &g, &coeff, &assign, &params).unwrap();
    assert!(s1 > s2, "{s1} {s2}");
}
