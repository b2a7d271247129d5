use gcomp_core::experiments::{
    run_capacity_sweep, run_outage_sweep, run_power_alloc_sweep, write_capacity_csv, ExperimentConfig,
};

#[test]
fn full_order_outage_falls_with_power() {
    let cfg = ExperimentConfig {
        p_dbm: (0..6).map(|i| -10.0 + 10.0 * i as f64).collect(),
        gamma_th_db: -3.0,
        trials: 20_000,
        ..ExperimentConfig::default()
    };
    let out = run_outage_sweep(&cfg).unwrap();
    assert!(out.failures.is_empty());
    for w in out.rows.windows(2) {
        assert!(w[1].p_out_mc <= w[0].p_out_mc);
        assert!(w[1].p_out_closed_form.unwrap() <= w[0].p_out_closed_form.unwrap());
    }
}

#[test]
fn distinct_variances_use_the_ordered_sum_formula() {
    let cfg = ExperimentConfig {
        p_dbm: vec![0.0],
        m_users: vec![2],
        k_bs: vec![2],
        n: vec![2],
        gamma_th_db: -3.0,
        variance_spread: 3.0,
        trials: 200_000,
        ..ExperimentConfig::default()
    };
    let row = &run_outage_sweep(&cfg).unwrap().rows[0];
    let cf = row.p_out_closed_form.unwrap();
    assert_eq!(serde_json::to_string(&row.closed_form_provenance).unwrap(), "\"ordered-sum\"");
    assert!((cf - row.p_out_mc).abs() <= (0.05 * cf).max(4.0 * row.std_error), "{cf} vs {}", row.p_out_mc);
}

#[test]
fn partial_order_has_no_closed_form() {
    let cfg = ExperimentConfig {
        p_dbm: vec![10.0],
        n: vec![1],
        trials: 1000,
        ..ExperimentConfig::default()
    };
    let row = &run_outage_sweep(&cfg).unwrap().rows[0];
    assert!(row.p_out_closed_form.is_none() && row.closed_form_provenance.is_none());
}

#[test]
fn capacity_rises_with_power() {
    let cfg = ExperimentConfig::default();
    let out = run_capacity_sweep(&cfg).unwrap();
    for w in out.rows.windows(2) {
        assert!(w[1].c_epsilon > w[0].c_epsilon);
    }
    let mut buf = Vec::new();
    write_capacity_csv(&mut buf, &out.rows).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("p_dbm,k_bs,m_users,gamma_bar,epsilon,c_epsilon,provenance\n"));
}

#[test]
fn feasible_fraction_grows_with_power_and_noma_leads() {
    let cfg = ExperimentConfig {
        p_dbm: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
        m_users: vec![3],
        k_bs: vec![2],
        n: vec![2],
        instances: 40,
        ..ExperimentConfig::default()
    };
    let out = run_power_alloc_sweep(&cfg).unwrap();
    assert!(out.failures.is_empty());
    for w in out.rows.windows(2) {
        assert!(w[1].feasible_fraction() >= w[0].feasible_fraction());
    }
    for r in out.rows.iter().filter(|r| r.feasible > 0) {
        assert!(r.sum_rate_noma.unwrap() >= r.sum_rate_oma.unwrap());
    }
}
