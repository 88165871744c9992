use super::*;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().to_string())
        .collect()
}

#[test]
fn required_events_and_auto_eta() {
    assert_eq!(required_events(4, 0.2, 0.2, 1), 50_752);
    assert_eq!(auto_eta(0.2, 1), 0.2 / 80.0);
    assert_eq!(auto_eta(0.2, 4), 0.2 / 320.0);
}

#[test]
fn digest_is_stable() {
    assert_eq!(outcome_digest(&[]), "e3b0c44298fc1c14");
    assert_eq!(outcome_digest(&[0, 1]).len(), 16);
}

#[test]
fn single_forecaster_is_always_eps_optimal() {
    let c = config(
        r#"{"experiment": "complexity",
            "distribution": {"family": "independent", "marginals": [0.3, 0.7]},
            "m_sweep": [10, 40], "n": 1, "epsilon": 0.2, "delta": 0.2, "trials": 50}"#,
    );
    let out = run(&c, RunOptions::default()).unwrap();
    assert_eq!(column(&out.summary, "hits"), vec!["50", "50"]);
    assert_eq!(
        column(&out.summary, "eta"),
        vec![format!("{:.16e}", 0.2 / 80.0); 2]
    );
}

#[test]
fn complexity_marks_eps_bad_forecasters() {
    let c = config(
        r#"{"experiment": "complexity",
            "distribution": {"family": "independent", "marginals": [0.5]},
            "m": 200, "n": 3,
            "beliefs": [{"kind": "truth"}, {"kind": "shift", "amount": 0.1}, {"kind": "constant", "value": 1.0}],
            "epsilon": 0.2, "delta": 0.2, "eta": 1.0, "trials": 20}"#,
    );
    let out = run(
        &c,
        RunOptions {
            emit_trials: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(column(&out.summary, "eps_bad"), vec!["3"]);
    let trials = out.trials.unwrap();
    assert_eq!(trials.lines().count(), 21);
    for w in column(&trials, "winner") {
        let w: usize = w.parse().unwrap();
        assert!((1..=3).contains(&w));
    }
}

#[test]
fn scale_caps_need_force() {
    let c = config(
        r#"{"experiment": "complexity",
            "distribution": {"family": "independent", "marginals": [0.5]},
            "m": 3000000, "n": 2, "epsilon": 0.2, "trials": 1}"#,
    );
    assert!(matches!(
        run(&c, RunOptions::default()),
        Err(ArenaError::Infeasible(_))
    ));
    let c = config(
        r#"{"experiment": "complexity",
            "distribution": {"family": "independent", "marginals": [0.5]},
            "m": 100, "n": 2, "epsilon": 0.2, "trials": 1, "strategy": "best_response"}"#,
    );
    assert!(matches!(
        run(&c, RunOptions::default()),
        Err(ArenaError::Infeasible(_))
    ));
}

#[test]
fn best_response_strategy_runs_on_small_fixtures() {
    let c = config(
        r#"{"experiment": "complexity",
            "distribution": {"family": "hidden_coin_groups", "b": 2, "c": 0.1},
            "m": 4, "n": 2,
            "beliefs": [{"kind": "truth"}, {"kind": "shift", "amount": 0.2}],
            "epsilon": 0.2, "delta": 0.2, "trials": 20, "strategy": "best_response"}"#,
    );
    let out = run(&c, RunOptions::default()).unwrap();
    let gap: f64 = column(&out.summary, "max_report_gap")[0].parse().unwrap();
    let b = 2.0;
    let eta = 0.2 / 160.0;
    let c_decl: f64 = column(&out.summary, "c")[0].parse().unwrap();
    assert!(gap <= 4.0 * b * eta + c_decl + 1e-8);
}

#[test]
fn huge_eta_selects_the_argmax() {
    let c = config(
        r#"{"experiment": "selection",
            "distribution": {"family": "independent", "marginals": [0.4, 0.6]},
            "m": 30, "n": 3,
            "beliefs": [{"kind": "truth"}, {"kind": "shift", "amount": 0.2}, {"kind": "constant", "value": 0.1}],
            "eta": 1000.0, "delta": 0.1, "trials": 500}"#,
    );
    let out = run(&c, RunOptions::default()).unwrap();
    assert_eq!(column(&out.summary, "argmax_hits"), vec!["500"]);
    assert_eq!(column(&out.summary, "pass"), vec!["true"]);
}

#[test]
fn independent_coins_stay_far_below_the_threshold() {
    let c = config(
        r#"{"experiment": "concentration",
            "distribution": {"family": "independent", "marginals": [0.5]},
            "m": 100, "delta": 0.05, "trials": 2000, "seed": 3}"#,
    );
    let out = run(&c, RunOptions::default()).unwrap();
    let q: f64 = column(&out.summary, "quantile")[0].parse().unwrap();
    let t: f64 = column(&out.summary, "threshold")[0].parse().unwrap();
    assert!(q < t / 2.0);
    assert_eq!(column(&out.summary, "hits"), vec!["0"]);
}

#[test]
fn truthfulness_sweep_passes_on_a_small_grid() {
    let c = config(r#"{"experiment": "truthfulness", "eta_grid": [0.02]}"#);
    let out = run(&c, RunOptions::default()).unwrap();
    let pass = column(&out.summary, "pass");
    assert_eq!(pass.len(), 2 * FIXTURE_FAMILIES.len());
    assert!(pass.iter().all(|p| p == "true"), "{}", out.summary);
}

#[test]
fn runs_are_byte_identical_across_pool_sizes() {
    let c = config(
        r#"{"experiment": "selection",
            "distribution": {"family": "hidden_coin_groups", "b": 2, "c": 0.1},
            "m": 20, "n": 3, "eta": 0.5, "delta": 0.1, "trials": 300, "seed": 9,
            "beliefs": [{"kind": "truth"}, {"kind": "jitter", "amplitude": 0.2, "seed": 1}, {"kind": "shift", "amount": -0.1}]}"#,
    );
    let opts = RunOptions {
        emit_trials: true,
        ..Default::default()
    };
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| run(&c, opts)).unwrap();
    let b = four.install(|| run(&c, opts)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tightness_rejects_other_families() {
    let c = config(
        r#"{"experiment": "tightness", "distribution": {"family": "independent", "marginals": [0.5]}, "m": 8}"#,
    );
    assert!(matches!(
        run(&c, RunOptions::default()),
        Err(ArenaError::Config(_))
    ));
}
