use gcomp_core::monte_carlo::{estimate_order_statistic_outage, McConfig};
use gcomp_core::outage::{
    at_least, epsilon_outage_capacity, ordered_sum_cdf, outage_asymptotic, outage_full_order_iid,
    outage_full_order_iid_rank, outage_probability, OutageSpec,
};
use gcomp_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn cfg(trials: usize, seed: u64) -> McConfig {
    McConfig {
        trials,
        seed,
        ..McConfig::default()
    }
}

#[test]
fn ordered_sum_cdf_matches_sampling() {
    for (alphas, n, gamma) in [
        (vec![0.7, 1.3, 2.1], 2, 1.5),
        (vec![0.7, 1.3, 2.1], 1, 0.8),
        (vec![0.5, 0.9, 1.4, 2.2], 3, 2.0),
        (vec![1.2, 3.0], 2, 0.6),
    ] {
        let k = alphas.len();
        let cf = ordered_sum_cdf(gamma, &alphas, n).unwrap();
        let alpha = DMatrix::from_row_slice(1, k, &alphas);
        let est = estimate_order_statistic_outage(&cfg(400_000, 3), &alpha, n, 1, gamma).unwrap();
        assert!((cf - est.mean).abs() <= 4.0 * est.std_error + 1e-4, "{cf} vs {}", est.mean);
    }
}

#[test]
fn full_sum_is_hypoexponential() {
    let (a, b) = (0.8f64, 1.9f64);
    let x = 1.3;
    let want = 1.0 - (b * (-a * x).exp() - a * (-b * x).exp()) / (b - a);
    assert!((ordered_sum_cdf(x, &[a, b], 2).unwrap() - want).abs() < 1e-13);
}

#[test]
fn largest_of_k_is_product_of_cdfs() {
    let alphas = [0.6, 1.1, 1.7];
    let x = 0.9;
    let want: f64 = alphas.iter().map(|a: &f64| 1.0 - (-a * x).exp()).product();
    assert!((ordered_sum_cdf(x, &alphas, 1).unwrap() - want).abs() < 1e-13);
}

#[test]
fn repeated_rates_are_degenerate() {
    assert!(matches!(ordered_sum_cdf(1.0, &[1.0, 1.0, 2.0], 2), Err(Error::DegenerateDistribution(_))));
}

#[test]
fn near_iid_rates_approach_the_gamma_closed_form() {
    let k = 3;
    let base = 1.0;
    let alpha = DMatrix::from_fn(2, k, |m, i| base * (1.0 + 1e-4 * (i + 1) as f64 + 3e-5 * m as f64));
    let gp = 1.7;
    for rank in 1..=2 {
        let spec = OutageSpec {
            gamma_th_prime: gp,
            alpha: alpha.clone(),
            n: k,
            omega: 2,
        };
        let general = outage_probability(rank, &spec).unwrap();
        let iid = outage_full_order_iid_rank(2, k, base, gp, rank).unwrap();
        assert!((general - iid).abs() / iid < 2e-3, "rank {rank}: {general} vs {iid}");
    }
}

#[test]
fn single_user_single_link_is_exponential() {
    let p = outage_full_order_iid(1, 1, 0.5, 2.0).unwrap();
    assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
}

#[test]
fn epsilon_one_capacity() {
    let c = epsilon_outage_capacity(1, 1, 10.0, 1.0).unwrap();
    assert!((c - 11f64.log2()).abs() < 1e-14);
    assert!(epsilon_outage_capacity(1, 1, 10.0, 0.0).is_err());
}

#[test]
fn doubling_k_raises_capacity_at_small_epsilon() {
    let c2 = epsilon_outage_capacity(2, 2, 100.0, 1e-5).unwrap();
    let c4 = epsilon_outage_capacity(2, 4, 100.0, 1e-5).unwrap();
    assert!(c4 > c2);
}

#[test]
fn at_least_counts_successes() {
    let p = [0.2, 0.5, 0.9];
    let all = 0.2 * 0.5 * 0.9;
    assert!((at_least(&p, 3) - all).abs() < 1e-15);
    assert!((at_least(&p, 1) - (1.0 - 0.8 * 0.5 * 0.1)).abs() < 1e-15);
    assert_eq!(at_least(&p, 0), 1.0);
}

proptest! {
    #[test]
    fn cdf_is_a_probability_and_monotone(
        rates in proptest::collection::btree_set(1u32..400, 2..6),
        n_frac in 0.0f64..1.0,
        x in 0.01f64..20.0,
    ) {
        let alphas: Vec<f64> = rates.iter().map(|&r| r as f64 / 100.0).collect();
        let k = alphas.len();
        let n = 1 + ((k - 1) as f64 * n_frac) as usize;
        let lo = ordered_sum_cdf(x, &alphas, n).unwrap();
        let hi = ordered_sum_cdf(x * 1.5, &alphas, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi + 1e-12 >= lo);
        if n < k {
            let more = ordered_sum_cdf(x, &alphas, n + 1).unwrap();
            prop_assert!(more <= lo + 1e-9);
        }
    }

    #[test]
    fn higher_rank_outage_is_not_lower(m in 1usize..7, k in 1usize..5, a in 0.05f64..5.0, g in 0.0f64..5.0) {
        for r in 1..m {
            let lo = outage_full_order_iid_rank(m, k, a, g, r).unwrap();
            let hi = outage_full_order_iid_rank(m, k, a, g, r + 1).unwrap();
            prop_assert!(hi <= lo + 1e-14);
        }
    }

    #[test]
    fn asymptote_has_slope_minus_k(m in 1usize..9, k in 1usize..5, g in 0.1f64..3.0) {
        let (p1, s) = outage_asymptotic(m, k, 1e3, g).unwrap();
        let (p2, _) = outage_asymptotic(m, k, 1e4, g).unwrap();
        prop_assert_eq!(s.diversity_order, k);
        prop_assert!(((p2 / p1).log10() + k as f64).abs() < 1e-9);
    }
}
