use gcomp_core::monte_carlo::{
    comp_serving_sets, estimate_outage, estimate_spectral_efficiency, run_trials, scenario_rates, McConfig, Scenario,
    UeSelector,
};
use gcomp_core::SystemParams;
use nalgebra::DMatrix;
use rand::Rng;

fn cfg(trials: usize, partitions: usize) -> McConfig {
    McConfig {
        trials,
        seed: 17,
        partitions,
        ..McConfig::default()
    }
}

#[test]
fn lone_link_outage_is_exponential() {
    let sigma = DMatrix::from_element(1, 1, 0.5f64.sqrt());
    let params = SystemParams::uniform(1, 1, 2.0, 1.0, 1.5).unwrap();
    let est = estimate_outage(&cfg(200_000, 1), &params, &sigma, 1, UeSelector::Index(0)).unwrap();
    let want = 1.0 - (-1.5f64 / 2.0).exp();
    assert!((est.mean - want).abs() < 4.0 * est.std_error, "{} vs {want}", est.mean);
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let sigma = DMatrix::from_row_slice(3, 2, &[0.6, 1.0, 0.9, 0.7, 1.2, 0.5]);
    let params = SystemParams::uniform(3, 2, 3.0, 1.0, 0.4).unwrap();
    let one = estimate_outage(&cfg(35_000, 1), &params, &sigma, 1, UeSelector::NormRank(2)).unwrap();
    for p in [2, 5] {
        let many = estimate_outage(&cfg(35_000, p), &params, &sigma, 1, UeSelector::NormRank(2)).unwrap();
        assert_eq!(one.mean.to_bits(), many.mean.to_bits());
        assert_eq!(one.std_error.to_bits(), many.std_error.to_bits());
    }
}

#[test]
fn partial_last_batch_counts_every_trial() {
    let est = run_trials(&cfg(12_345, 3), 1, |_, out| {
        out[0] = 1.0;
        Ok(())
    })
    .unwrap();
    assert_eq!(est[0].mean, 1.0);
    assert_eq!(est[0].trials_used, 12_345);
}

#[test]
fn uniform_draws_have_the_right_mean() {
    let est = run_trials(&cfg(100_000, 2), 1, |rng, out| {
        out[0] = rng.random::<f64>();
        Ok(())
    })
    .unwrap();
    assert!((est[0].mean - 0.5).abs() < 4.0 * est[0].std_error);
    assert!((est[0].std_error - (1.0f64 / 12.0 / 1e5).sqrt()).abs() < 1e-5);
}

#[test]
fn oma_rate_by_hand() {
    let g = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.5, 0.5]);
    let params = SystemParams::uniform(2, 2, 2.0, 1.0, 1.0).unwrap();
    let r = scenario_rates(Scenario::GcompOma, &g, &params, 0.0).unwrap();
    assert!((r[0] - 9f64.log2() / 2.0).abs() < 1e-15);
    assert!((r[1] - 3f64.log2() / 2.0).abs() < 1e-15);
}

#[test]
fn comp_serving_adds_runner_up_within_3_db() {
    let g = DMatrix::from_row_slice(2, 3, &[1.0, 0.6, 0.1, 1.0, 0.4, 0.2]);
    assert_eq!(comp_serving_sets(&g), vec![vec![0, 1], vec![0]]);
}

#[test]
fn noma_beats_oma_on_average() {
    let sigma = DMatrix::from_element(3, 3, 0.5f64.sqrt());
    let params = SystemParams::uniform(3, 3, 100.0, 1.0, 1.0).unwrap();
    let noma = estimate_spectral_efficiency(&cfg(20_000, 1), &params, &sigma).unwrap();
    let oma = estimate_spectral_efficiency(
        &McConfig {
            scenario: Scenario::GcompOma,
            ..cfg(20_000, 1)
        },
        &params,
        &sigma,
    )
    .unwrap();
    assert!(noma.sum.mean > oma.sum.mean, "{} vs {}", noma.sum.mean, oma.sum.mean);
}
