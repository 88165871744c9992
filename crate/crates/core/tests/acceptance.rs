//! Acceptance checks: one `PASS`/`FAIL` line per criterion, non-zero exit if
//! any fails. Every check runs even when an earlier one fails.

use std::time::{Duration, Instant};

use arena_core::concentration::{verify_chain, ChainVariant, ChainVerifyOptions};
use arena_core::experiments::{
    run, truthfulness_fixtures, ExperimentConfig, ExperimentOutput, RunOptions,
};
use arena_core::mechanism::{
    ftrl_select, mw_select, random_probes, verify_curvature, ConjugateKind, LogSumExp,
    MechanismConfig,
};
use arena_core::oracle::exact_accuracy_and_scores;
use arena_core::rng::stream_rng;
use arena_core::scoring::{accuracy_profile, c_theta};
use arena_core::{BeliefMatrix, EventDistribution, OutcomeVector, ReportMatrix};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: &str, title: &str, budget: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let in_time = elapsed < budget;
    let pass = outcome.pass && in_time;
    println!(
        "{} [{id}] {title}: {}; {:.2} s (budget {} s)",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).expect("acceptance config parses")
}

fn run_ok(text: &str) -> ExperimentOutput {
    run(&config(text), RunOptions::default()).expect("experiment runs")
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().to_string())
        .collect()
}

fn floats(csv: &str, name: &str) -> Vec<f64> {
    column(csv, name)
        .iter()
        .map(|v| v.parse().unwrap())
        .collect()
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn accuracy_cases() -> Vec<(EventDistribution, BeliefMatrix)> {
    let mut cases: Vec<(EventDistribution, BeliefMatrix)> = Vec::new();
    let mut rng = stream_rng(11, 0);
    for fixture in truthfulness_fixtures().unwrap() {
        let truth = fixture.forecasters[0].belief.clone();
        let mut rows: Vec<Vec<f64>> = fixture
            .forecasters
            .iter()
            .map(|f| f.marginals().to_vec())
            .collect();
        rows.push(
            (0..truth.m())
                .map(|_| rng.random_range(0.0..=1.0))
                .collect(),
        );
        cases.push((truth, BeliefMatrix::from_rows(rows).unwrap()));
    }
    for k in 0..8u64 {
        let m = 3 + (k as usize % 4);
        let raw: Vec<f64> = (0..1u64 << m).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let table: Vec<(u64, f64)> = raw
            .iter()
            .enumerate()
            .map(|(i, w)| (i as u64, w / total))
            .collect();
        let truth = EventDistribution::explicit_table(m, &table).unwrap();
        let rows = (0..4)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..=1.0)).collect())
            .collect();
        cases.push((truth, BeliefMatrix::from_rows(rows).unwrap()));
    }
    cases
}

fn accuracy_identity(cases: &[(EventDistribution, BeliefMatrix)]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (truth, beliefs) in cases {
        let exact = exact_accuracy_and_scores(beliefs, beliefs, truth).unwrap();
        let theta = truth.marginals();
        let profile = accuracy_profile(beliefs, theta).unwrap();
        let m = truth.m() as f64;
        for (a, s) in profile.accuracy.iter().zip(&exact.belief_scores) {
            worst = worst.max((a - (s / m + c_theta(theta))).abs());
        }
    }
    Outcome {
        pass: cases.len() >= 20 && worst <= 1e-12,
        detail: format!(
            "{} fixtures, max error {worst:.3e} (tolerance 1e-12)",
            cases.len()
        ),
    }
}

fn mw_equals_ftrl() -> Outcome {
    let lse = MechanismConfig::with_conjugate(1.0, ConjugateKind::LogSumExp).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let mut rng = stream_rng(21, k);
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=12);
        let eta = rng.random_range(0.01..5.0);
        let rows = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..=1.0)).collect())
            .collect();
        let reports = ReportMatrix::from_rows(rows).unwrap();
        let y = OutcomeVector::new((0..m).map(|_| rng.random_range(0..=1u8)).collect()).unwrap();
        let config = MechanismConfig::with_conjugate(eta, lse.conjugate().clone()).unwrap();
        let a = mw_select(&reports, &y, eta).unwrap();
        let b = ftrl_select(&reports, &y, &config).unwrap();
        worst = worst.max(a.max_abs_diff(&b));
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("100 instances, max difference {worst:.3e} (tolerance 1e-12)"),
    }
}

fn curvature_probes() -> Vec<Vec<Vec<f64>>> {
    (2..=5)
        .map(|n| random_probes(n, 2500, 10.0, 31 + n as u64))
        .collect()
}

fn curvature_check(alpha: f64, beta: f64) -> Outcome {
    let mut pass = true;
    let mut margin = f64::INFINITY;
    let mut lipschitz: f64 = 0.0;
    let mut witness = Vec::new();
    let mut probes = 0;
    for set in curvature_probes() {
        let r = verify_curvature(&LogSumExp, &set, alpha, beta, 1e-5);
        pass &= r.passed();
        probes += r.probes;
        if r.curvature_margin < margin {
            margin = r.curvature_margin;
            witness = r.curvature_witness.clone();
        }
        lipschitz = lipschitz.max(r.log_curvature_lipschitz);
    }
    let mut detail = format!(
        "alpha = {alpha}, beta = {beta}, {probes} probes in [-10, 10]^n (2 <= n <= 5): \
         min curvature margin {margin:.3e}, log-curvature Lipschitz {lipschitz:.4}"
    );
    if margin < 0.0 {
        detail.push_str(&format!(
            ", second partial falls below alpha times the third partial at {witness:.3?}"
        ));
    }
    Outcome { pass, detail }
}

fn truthfulness_grid() -> (Outcome, Outcome) {
    let out =
        run_ok(r#"{"experiment": "truthfulness", "eta_grid": [0.005, 0.01, 0.02], "seed": 5}"#);
    let s = &out.summary;
    let gap = floats(s, "max_gap");
    let bound = floats(s, "bound");
    let block_gap = floats(s, "max_block_gap");
    let band = floats(s, "block_band");
    let b = floats(s, "b");
    let eta = floats(s, "eta");
    let regime = b.iter().zip(&eta).all(|(b, e)| *e < 1.0 / (4.0 * b));
    let cells: usize = column(s, "cells")
        .iter()
        .map(|v| v.parse::<usize>().unwrap())
        .sum();
    let block_cells: usize = column(s, "block_cells")
        .iter()
        .map(|v| v.parse::<usize>().unwrap())
        .sum();
    let slack = |g: &[f64], bd: &[f64]| {
        g.iter()
            .zip(bd)
            .map(|(g, b)| b + 1e-8 - g)
            .fold(f64::INFINITY, f64::min)
    };
    let full = slack(&gap, &bound);
    let block = slack(&block_gap, &band);
    (
        Outcome {
            pass: regime && full >= 0.0,
            detail: format!(
                "{} fixture/eta rows, {cells} cells, smallest slack to 4b*eta + c + 1e-8 is {full:.3e}",
                gap.len()
            ),
        },
        Outcome {
            pass: regime && block >= 0.0,
            detail: format!(
                "{} fixture/eta rows, {block_cells} conditioned cells, smallest slack to the block band + 1e-8 is {block:.3e}",
                gap.len()
            ),
        },
    )
}

fn near_max_selection() -> Outcome {
    let out = run_ok(
        r#"{"experiment": "selection",
            "distribution": {"family": "hidden_coin_groups", "b": 2, "c": 0.1},
            "m": 40, "n": 5,
            "beliefs": [{"kind": "truth"}, {"kind": "shift", "amount": 0.1},
                        {"kind": "shift", "amount": -0.2}, {"kind": "constant", "value": 0.5},
                        {"kind": "jitter", "amplitude": 0.3, "seed": 2}],
            "eta": 0.1, "delta": 0.1, "trials": 100000, "seed": 7}"#,
    );
    let freq = floats(&out.summary, "freq")[0];
    let threshold = floats(&out.summary, "threshold")[0];
    Outcome {
        pass: freq >= threshold,
        detail: format!(
            "frequency {freq:.5} vs 1 - delta/2 - 3 SE = {threshold:.5}, 100000 trials"
        ),
    }
}

fn dependent_tails() -> Outcome {
    let fixtures = [
        r#"{"family": "independent", "marginals": [0.5]}, "m": 100"#,
        r#"{"family": "hidden_coin_groups", "b": 6, "c": 0.1}, "m": 120"#,
        r#"{"family": "random_bias", "biases": [0.3, 0.7], "weights": [0.5, 0.5]}, "m": 12"#,
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, f) in fixtures.iter().enumerate() {
        let out = run_ok(&format!(
            r#"{{"experiment": "concentration", "distribution": {f}, "delta": 0.05, "trials": 100000, "seed": {k}}}"#
        ));
        let hi = floats(&out.summary, "wilson_hi")[0];
        let family = column(&out.summary, "family")[0].clone();
        pass &= hi <= 0.05;
        parts.push(format!("{family} upper {hi:.4}"));
    }
    Outcome {
        pass,
        detail: format!("{} (limit 0.05, 100000 trials each)", parts.join(", ")),
    }
}

fn chain_properties() -> Outcome {
    let fixtures = [
        r#"{"family": "hidden_coin_groups", "b": 2, "c": 0.1}, "m": 6"#,
        r#"{"family": "election", "state_size": 2, "base_marginals": [0.4, 0.6], "shift": 0.1, "coupling": 0.5}, "m": 4"#,
        r#"{"family": "random_bias", "biases": [0.3, 0.7], "weights": [0.5, 0.5]}, "m": 5"#,
    ];
    let mut pass = true;
    let mut failures = Vec::new();
    for (k, f) in fixtures.iter().enumerate() {
        let out = run_ok(&format!(
            r#"{{"experiment": "chain-check", "distribution": {f}, "delta": 0.05, "trials": 100000, "seed": {k}}}"#
        ));
        for (check, ok) in column(&out.summary, "check")
            .iter()
            .zip(column(&out.summary, "pass"))
        {
            if ok != "true" {
                pass = false;
                failures.push(format!("fixture {k} {check}"));
            }
        }
    }
    let mutant = EventDistribution::hidden_coin_groups(6, 2, 0.1).unwrap();
    let mut options = ChainVerifyOptions::new("hidden_coin_groups", 100_000, 99);
    options.variant = ChainVariant::SkipMeanSubtraction;
    let report = verify_chain(&mutant, &options).unwrap();
    let caught = !report.get("x_mean").map(|c| c.pass).unwrap_or(true);
    pass &= caught;
    Outcome {
        pass,
        detail: format!(
            "3 fixtures, 100000 paths each, failing checks: [{}]; mutant without mean subtraction {}",
            failures.join(", "),
            if caught { "fails the mean check" } else { "is not caught" }
        ),
    }
}

fn event_complexity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for strategy in ["truthful", "band_adversary"] {
        let out = run_ok(&format!(
            r#"{{"experiment": "complexity",
                "distribution": {{"family": "hidden_coin_groups", "b": 1, "c": 0.01}},
                "m": "auto", "n": 4,
                "beliefs": [{{"kind": "truth"}}, {{"kind": "shift", "amount": 0.1}},
                            {{"kind": "shift", "amount": -0.45}}, {{"kind": "constant", "value": 0.0}}],
                "eta": "auto", "epsilon": 0.2, "delta": 0.2,
                "strategy": "{strategy}", "trials": 1000, "seed": 17}}"#
        ));
        let s = &out.summary;
        let m: usize = column(s, "m")[0].parse().unwrap();
        let m_star: usize = column(s, "m_star")[0].parse().unwrap();
        let eta = floats(s, "eta")[0];
        let c = floats(s, "c")[0];
        let lo = floats(s, "wilson_lo")[0];
        if eta != 0.2 / 80.0 {
            parts.push(format!("{strategy}: eta = {eta:e} is not epsilon/80"));
        }
        let ok = m == 50_752 && m == m_star && eta == 0.2 / 80.0 && c <= 0.01 + 1e-12 && lo >= 0.8;
        pass &= ok;
        parts.push(format!(
            "{strategy}: m = {m}, c = {c:.5}, eps-bad {{{}}}, lower bound {lo:.4}",
            column(s, "eps_bad")[0]
        ));
    }
    Outcome {
        pass,
        detail: format!("{} (need >= 0.8, 1000 trials)", parts.join("; ")),
    }
}

fn tightness() -> Outcome {
    let out = run_ok(
        r#"{"experiment": "tightness", "m": 512, "delta": 0.05, "trials": 100000, "seed": 23}"#,
    );
    let q_slope = floats(&out.summary, "quantile_slope")[0];
    let t_slope = floats(&out.summary, "threshold_slope")[0];
    Outcome {
        pass: (0.35..=0.65).contains(&q_slope) && (0.9..=1.1).contains(&t_slope),
        detail: format!(
            "b in {{1, 2, 4, 8}} at m = 512: quantile slope {q_slope:.4} (need [0.35, 0.65]), \
             threshold slope {t_slope:.4} (need [0.9, 1.1])"
        ),
    }
}

fn reproducibility() -> Outcome {
    let configs = [
        r#"{"experiment": "complexity", "distribution": {"family": "election", "state_size": 3, "base_marginals": [0.3, 0.6], "shift": 0.1, "coupling": 0.5},
            "m": 300, "n": 3, "beliefs": [{"kind": "truth"}, {"kind": "jitter", "amplitude": 0.2, "seed": 4}, {"kind": "shift", "amount": 0.2}],
            "epsilon": 0.2, "delta": 0.2, "strategy": "band_adversary", "trials": 500, "seed": 1}"#,
        r#"{"experiment": "selection", "distribution": {"family": "random_bias", "biases": [0.2, 0.5, 0.9], "weights": [1, 1, 2]},
            "m": 30, "n": 4, "eta": 0.3, "delta": 0.1, "trials": 2000, "seed": 2}"#,
        r#"{"experiment": "concentration", "distribution": {"family": "hidden_coin_groups", "b": 4, "c": 0.2}, "m_sweep": [40, 80], "trials": 2000, "seed": 3}"#,
        r#"{"experiment": "chain-check", "distribution": {"family": "hidden_coin_groups", "b": 2, "c": 0.1}, "m": 4, "trials": 2000, "seed": 4}"#,
        r#"{"experiment": "tightness", "m": 64, "b_values": [1, 2, 4], "trials": 2000, "seed": 5}"#,
        r#"{"experiment": "truthfulness", "eta_grid": [0.01], "seed": 6}"#,
    ];
    let options = RunOptions {
        force: false,
        emit_trials: true,
    };
    let mut identical = 0;
    for text in configs {
        let c = config(text);
        let outputs: Vec<ExperimentOutput> = [1, 3, 8]
            .iter()
            .map(|&threads| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap()
                    .install(|| run(&c, options).unwrap())
            })
            .collect();
        if outputs.windows(2).all(|w| w[0] == w[1]) {
            identical += 1;
        }
    }
    Outcome {
        pass: identical == configs.len(),
        detail: format!(
            "{identical}/{} experiments byte-identical at 1, 3 and 8 worker threads",
            configs.len()
        ),
    }
}

fn main() {
    let mut all = true;
    let cases = accuracy_cases();
    all &= check(
        "1",
        "accuracy equals mean expected score plus C_theta",
        secs(1),
        || accuracy_identity(&cases),
    );
    all &= check(
        "2a",
        "multiplicative weights equals log-sum-exp FTRL",
        secs(5),
        mw_equals_ftrl,
    );
    all &= check(
        "2b",
        "log-sum-exp regularity at alpha = 2, beta = 3",
        secs(5),
        || curvature_check(2.0, 3.0),
    );
    all &= check(
        "2c",
        "log-sum-exp regularity at alpha = 1, beta = 3",
        secs(5),
        || curvature_check(1.0, 3.0),
    );
    let mut block = None;
    all &= check("3", "best responses within 4b*eta + c", secs(60), || {
        let (band, per_block) = truthfulness_grid();
        block = Some(per_block);
        band
    });
    // same run as [3]; its time is counted there
    all &= check(
        "4",
        "per-block best responses within the block band",
        secs(60),
        || block.take().expect("grid ran"),
    );
    all &= check(
        "5",
        "sampled winner scores near the maximum",
        secs(30),
        near_max_selection,
    );
    all &= check(
        "6",
        "dependent-sum tails below delta",
        secs(60),
        dependent_tails,
    );
    all &= check(
        "7",
        "resampling chain properties",
        secs(300),
        chain_properties,
    );
    all &= check(
        "8",
        "epsilon-optimal winner at the required event count",
        secs(300),
        event_complexity,
    );
    all &= check(
        "9",
        "tail quantile grows like sqrt(b), threshold like b",
        secs(300),
        tightness,
    );
    all &= check(
        "10",
        "byte-identical reruns at any worker count",
        secs(300),
        reproducibility,
    );
    if !all {
        std::process::exit(1);
    }
}
