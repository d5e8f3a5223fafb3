use ldp_numeric::bench::{
    binomial_upper_tail, run, run_discretize_sweep, run_erm, run_mean_estimation,
    run_variance_table, sign_test, ExperimentConfig, Task,
};
use ldp_numeric::fedsgd::LossKind;
use ldp_numeric::params::worst_case_variance;
use ldp_numeric::{MechanismKind, PrivacyBudget};

fn table(epsilons: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        epsilons,
        ..ExperimentConfig::new(Task::VarianceTable)
    }
}

#[test]
fn variance_table_rows() {
    let eps = vec![0.5, 1.0, 2.0, 2.3, 3.0, 4.0, 6.0];
    let report = run_variance_table(&table(eps.clone())).unwrap();
    assert_eq!(report.records.len(), MechanismKind::ALL.len() * eps.len());
    let at = |m: &str, e: f64| report.metrics(m, Some(e), None)[0];
    assert!((at("duchi", 0.5) - at("three-outputs", 0.5)).abs() < 1e-12 * at("duchi", 0.5));
    for &e in &eps {
        let hm_tp = at("hm-tp", e);
        // HM and PM-OPT are compared separately below.
        let others = MechanismKind::ALL
            .into_iter()
            .filter(|k| !matches!(k, MechanismKind::Hm | MechanismKind::PmOpt));
        for kind in others {
            assert!(
                hm_tp <= at(kind.name(), e) * (1.0 + 1e-12),
                "ε={e}: hm-tp vs {kind}"
            );
        }
    }
    // Laplace overtakes Duchi close to 2.3.
    assert!(at("laplace", 2.0) > at("duchi", 2.0));
    assert!(at("laplace", 3.0) < at("duchi", 3.0));
    assert!((at("laplace", 2.3) / at("duchi", 2.3) - 1.0).abs() < 0.05);
}

fn mean_config(
    mechanisms: Vec<MechanismKind>,
    epsilons: Vec<f64>,
    d: usize,
    reps: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        mechanisms,
        epsilons,
        d,
        repetitions: reps,
        ..ExperimentConfig::new(Task::MeanEstimation)
    }
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn mean_estimation_at_large_budget() {
    let report =
        run_mean_estimation(&mean_config(vec![MechanismKind::PmSub], vec![16.0], 4, 5)).unwrap();
    let mse = report.metrics("pm-sub", Some(16.0), None);
    assert!(mean_of(&mse) < 1e-3, "{mse:?}");
    assert!(report.records.iter().all(|r| r.mse.unwrap() >= 0.0));
}

#[test]
fn three_outputs_wins_at_small_budget() {
    let report = run_mean_estimation(&mean_config(
        vec![MechanismKind::ThreeOutputs, MechanismKind::PmSub],
        vec![0.5],
        16,
        20,
    ))
    .unwrap();
    let three = mean_of(&report.metrics("three-outputs", Some(0.5), None));
    let sub = mean_of(&report.metrics("pm-sub", Some(0.5), None));
    assert!(three <= sub, "{three} vs {sub}");
}

#[test]
fn pm_sub_beats_pm_at_four() {
    let report = run_mean_estimation(&mean_config(
        vec![MechanismKind::Pm, MechanismKind::PmSub],
        vec![4.0],
        16,
        100,
    ))
    .unwrap();
    let pm = mean_of(&report.metrics("pm", Some(4.0), None));
    let sub = mean_of(&report.metrics("pm-sub", Some(4.0), None));
    assert!(sub < pm, "{sub} vs {pm}");
}

#[test]
fn discretize_sweep_rows() {
    let config = ExperimentConfig {
        mechanisms: vec![MechanismKind::PmSub],
        epsilons: vec![1.0],
        n_users: 20_000,
        d: 4,
        repetitions: 10,
        grid_sweep: vec![1, 2000],
        ..ExperimentConfig::new(Task::DiscretizeSweep)
    };
    let report = run_discretize_sweep(&config).unwrap();
    assert_eq!(report.records.len(), 20);
    let coarse = report.select("pm-sub", Some(1.0), Some(1));
    let fine = report.select("pm-sub", Some(1.0), Some(2000));
    assert!(fine.iter().all(|r| r.bits_per_sample == Some(12)));
    assert!(coarse.iter().all(|r| r.bits_per_sample == Some(2)));
    let coarse_mse = mean_of(&coarse.iter().map(|r| r.mse.unwrap()).collect::<Vec<_>>());
    let base = mean_of(
        &coarse
            .iter()
            .map(|r| r.continuous_mse.unwrap())
            .collect::<Vec<_>>(),
    );
    assert!(coarse_mse > base, "{coarse_mse} vs {base}");

    let bad = ExperimentConfig {
        mechanisms: vec![MechanismKind::Laplace],
        ..config
    };
    assert!(run_discretize_sweep(&bad).is_err());
}

#[test]
fn identical_configs_give_identical_files() {
    let config = ExperimentConfig {
        n_users: 2_000,
        d: 3,
        repetitions: 4,
        seed: 42,
        ..ExperimentConfig::new(Task::MeanEstimation)
    };
    let render = || {
        let report = run(&config, None).unwrap();
        let mut csv = Vec::new();
        let mut json = Vec::new();
        report.write_csv(&mut csv).unwrap();
        report.write_json(&mut json).unwrap();
        (csv, json)
    };
    assert_eq!(render(), render());
    let other = run(
        &ExperimentConfig {
            seed: 43,
            ..config.clone()
        },
        None,
    )
    .unwrap();
    let mut csv = Vec::new();
    other.write_csv(&mut csv).unwrap();
    assert_ne!(csv, render().0);
}

#[test]
fn erm_reports_control_and_bounded_metrics() {
    let config = ExperimentConfig {
        mechanisms: vec![MechanismKind::HmTp, MechanismKind::Duchi],
        epsilons: vec![1.0, 4.0],
        n_users: 3_000,
        d: 2,
        repetitions: 3,
        ..ExperimentConfig::new(Task::Erm)
    };
    let mut classification = config.clone();
    classification.erm.loss = LossKind::Hinge;
    classification.erm.record_trace = true;
    let report = run_erm(&classification, None).unwrap();
    assert_eq!(report.records.len(), 3 * (1 + 4));
    assert!(report
        .records
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.misclassification.unwrap())));
    assert_eq!(report.traces.len(), report.records.len());
    let mut out = Vec::new();
    report.write_traces_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("iteration,loss,metric,mechanism,epsilon,seed\n"));

    let report = run_erm(&config, None).unwrap();
    assert!(report.traces.is_empty());
    assert_eq!(report.select("non-private", None, None).len(), 3);
}

#[test]
fn sign_test_counts() {
    let t = sign_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 2.0, 4.0, 1.0]);
    assert_eq!((t.wins, t.losses, t.ties), (2, 1, 1));
    assert!((t.p_value - 0.5).abs() < 1e-15);
    // P[Bin(20, 1/2) ≥ 15] = 21700 / 2^20.
    assert!((binomial_upper_tail(20, 15) - 21_700.0 / 1_048_576.0).abs() < 1e-14);
}

/// `worst(other) − worst(HM-TP)`.
fn gap(other: MechanismKind, eps: f64) -> f64 {
    let b = PrivacyBudget::new(eps).unwrap();
    worst_case_variance(other, b).unwrap() - worst_case_variance(MechanismKind::HmTp, b).unwrap()
}

/// Sign change of `f` on `[lo, hi]`, negative side first.
fn crossing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn duchi_pm_mixture_beats_hm_tp_on_a_band() {
    let hm = |e| gap(MechanismKind::Hm, e);
    assert!(hm(1.0) < 0.0 && hm(1.4) < 0.0);
    assert!(hm(1.7) > 0.0 && hm(4.0) > 0.0);
    let upper = crossing(hm, 1.4, 1.7);
    assert!((1.55..1.65).contains(&upper), "{upper}");
    // Both are Duchi below about 0.61; HM leaves Duchi first.
    assert!(hm(0.5).abs() < 1e-9 && hm(0.605).abs() < 1e-9);
    assert!(hm(0.61) < 0.0);
}

#[test]
fn pm_opt_overtakes_hm_tp_at_large_budget() {
    let opt = |e| gap(MechanismKind::PmOpt, e);
    for e in [0.5, 1.0, 2.0, 3.0, 4.0, 5.0] {
        assert!(opt(e) > 0.0, "ε={e}");
    }
    for e in [6.0, 8.0, 10.0] {
        assert!(opt(e) < 0.0, "ε={e}");
    }
    let cross = crossing(|e| -opt(e), 5.0, 6.0);
    assert!((5.0..5.6).contains(&cross), "{cross}");
}
