//! Config-driven experiment runners producing CSV summaries.
//!
//! Every run is a pure function of its config: trial `k` of sweep point `j`
//! draws from stream `k` of `derive_seed(seed, j)`, trials are collected in
//! order and aggregated sequentially, so the output bytes do not depend on
//! the number of worker threads.

mod config;
mod fixtures;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    Auto, AutoOr, BeliefSpec, DistributionSpec, ExperimentConfig, ExperimentKind, StrategyModel,
};
pub use fixtures::{
    evaluate_truthfulness, truthfulness_fixtures, TruthfulnessFixture, TruthfulnessRow,
    BAND_TOLERANCE, FIXTURE_FAMILIES,
};

use crate::agents::{
    band_adversary_reports, iterated_best_response, BandParams, Forecaster, Strategy,
};
use crate::concentration::{
    empirical_tail, verify_chain, ChainVerifyOptions, TailBoundSpec, TailStatistic,
    EXACT_CHAIN_MAX_M,
};
use crate::distributions::EventDistribution;
use crate::error::{ArenaError, Result};
use crate::mechanism::{mw_from_scores, near_max_slack, sample_winner, MechanismConfig};
use crate::mechanism::{LOG_SUM_EXP_ALPHA, LOG_SUM_EXP_BETA};
use crate::rng::{derive_seed, stream_rng};
use crate::scoring::{accuracy_profile, expected_score_totals, score_totals_unchecked};
use crate::stats::{log_log_slope, quantile, Proportion};
use crate::types::{BeliefMatrix, ReportMatrix};

/// Largest `m` a complexity or selection run accepts without `force`.
pub const MAX_EVENTS: usize = 2_000_000;
/// Largest `m` for the best-response strategy model without `force`.
pub const BEST_RESPONSE_MAX_M: usize = 64;
pub const BEST_RESPONSE_SWEEPS: usize = 20;
pub const BEST_RESPONSE_TOL: f64 = 1e-9;
pub const DEFAULT_TIGHTNESS_M: usize = 512;
pub const DEFAULT_TIGHTNESS_C: f64 = 0.1;
pub const DEFAULT_TIGHTNESS_B: [usize; 4] = [1, 2, 4, 8];
/// Score totals this close count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_ETA_GRID: [f64; 3] = [0.005, 0.01, 0.02];

/// `η = ε / (80b)`.
pub fn auto_eta(epsilon: f64, b: usize) -> f64 {
    epsilon / (80.0 * b as f64)
}

/// `m* = ⌈400 b² ln(8n/δ) / ε²⌉`.
pub fn required_events(n: usize, epsilon: f64, delta: f64, b: usize) -> usize {
    let b = b as f64;
    (400.0 * b * b * (8.0 * n as f64 / delta).ln() / (epsilon * epsilon)).ceil() as usize
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Allow runs beyond the feasibility caps.
    pub force: bool,
    pub emit_trials: bool,
}

/// Two-column `x y` series for external plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &(x, y) in &self.points {
            let _ = writeln!(s, "{} {}", fmt(x), fmt(y));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: String,
    pub trials: Option<String>,
    pub plotdata: Vec<PlotSeries>,
}

/// One competition of a complexity or selection run. `winner` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub y_digest: String,
    pub q: Vec<f64>,
    pub winner: usize,
    pub eps_optimal: bool,
    /// `q_w ≥ max_i q_i − ln(2n/δ)/η`.
    pub near_max: bool,
    /// Winner attains the top score up to `TIE_TOLERANCE`.
    pub argmax: bool,
    /// Every `|q_i − E q_i|` within the union-bound threshold.
    pub scores_concentrated: bool,
}

/// Floats with 17 significant digits.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// First 16 hex digits of the SHA-256 of the outcome bytes.
pub fn outcome_digest(y: &[u8]) -> String {
    Sha256::digest(y)
        .iter()
        .take(8)
        .fold(String::with_capacity(16), |mut s, byte| {
            let _ = write!(s, "{byte:02x}");
            s
        })
}

fn csv_line(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

pub fn run(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Complexity => run_complexity(config, options),
        ExperimentKind::Selection => run_selection(config, options),
        ExperimentKind::Truthfulness => run_truthfulness(config),
        ExperimentKind::Concentration => run_concentration(config, options),
        ExperimentKind::ChainCheck => run_chain_check(config),
        ExperimentKind::Tightness => run_tightness(config),
    }
}

fn distribution_spec(config: &ExperimentConfig) -> Result<&DistributionSpec> {
    config
        .distribution
        .as_ref()
        .ok_or_else(|| ArenaError::Config("a distribution is required".into()))
}

fn forecaster_count(config: &ExperimentConfig) -> usize {
    config.n.unwrap_or(config.beliefs.len().max(1))
}

/// Block bound used for `m = "auto"` and `η = "auto"`.
fn declared_b(config: &ExperimentConfig) -> Result<usize> {
    let spec = distribution_spec(config)?;
    match spec.block_bound() {
        Some(b) => Ok(b),
        None => Ok(spec.build(None, &config.base_dir)?.blocks().b()),
    }
}

/// Event counts to run: the sweep, or the single `m` (resolving "auto").
fn event_counts(config: &ExperimentConfig) -> Result<Vec<usize>> {
    if !config.m_sweep.is_empty() {
        return Ok(config.m_sweep.clone());
    }
    match config.m {
        Some(AutoOr::Value(m)) => Ok(vec![m]),
        Some(AutoOr::Auto(_)) => {
            let (eps, n) = (config.epsilon.unwrap_or(1.0), forecaster_count(config));
            Ok(vec![required_events(
                n,
                eps,
                config.delta,
                declared_b(config)?,
            )])
        }
        None => match distribution_spec(config)? {
            DistributionSpec::ExplicitTable { .. } => Ok(vec![distribution_spec(config)?
                .build(None, &config.base_dir)?
                .m()]),
            _ => Err(ArenaError::Config("m or m_sweep is required".into())),
        },
    }
}

fn resolve_eta(config: &ExperimentConfig, b: usize) -> Result<f64> {
    match (config.eta, config.epsilon) {
        (Some(AutoOr::Value(eta)), _) => Ok(eta),
        (Some(AutoOr::Auto(_)) | None, Some(eps)) => Ok(auto_eta(eps, b)),
        (_, None) => Err(ArenaError::Config("eta or epsilon is required".into())),
    }
}

/// Belief marginals and joint beliefs for the panel, all declaring the
/// truth's `(b, c)` or looser.
fn panel_beliefs(
    config: &ExperimentConfig,
    truth: &EventDistribution,
) -> Result<(BeliefMatrix, Vec<EventDistribution>)> {
    let n = forecaster_count(config);
    let theta = truth.marginals();
    let specs: Vec<BeliefSpec> = if config.beliefs.is_empty() {
        vec![BeliefSpec::Truth; n]
    } else {
        config.beliefs.clone()
    };
    let mut rows = Vec::with_capacity(n);
    let mut joints = Vec::with_capacity(n);
    for (i, spec) in specs.iter().enumerate() {
        let clip = |x: f64| x.clamp(0.0, 1.0);
        let (row, joint): (Vec<f64>, Option<EventDistribution>) = match spec {
            BeliefSpec::Truth => (theta.to_vec(), Some(truth.clone())),
            BeliefSpec::Shift { amount } => {
                (theta.iter().map(|&th| clip(th + amount)).collect(), None)
            }
            BeliefSpec::Constant { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(ArenaError::Config(format!(
                        "constant belief {value} is outside [0, 1]"
                    )));
                }
                (vec![*value; theta.len()], None)
            }
            BeliefSpec::Jitter { amplitude, seed } => {
                use rand::Rng;
                let mut rng = stream_rng(*seed, i as u64);
                let row = theta
                    .iter()
                    .map(|&th| clip(th + rng.random_range(-amplitude.abs()..=amplitude.abs())))
                    .collect();
                (row, None)
            }
            BeliefSpec::Distribution { distribution } => {
                let d = distribution.build(Some(truth.m()), &config.base_dir)?;
                (d.marginals().to_vec(), Some(d))
            }
        };
        let joint = match joint {
            Some(d) => d,
            None => EventDistribution::independent(&row)?,
        };
        rows.push(row);
        joints.push(joint);
    }
    let b = joints
        .iter()
        .map(|d| d.blocks().b())
        .max()
        .unwrap_or(1)
        .max(truth.blocks().b());
    let c = joints
        .iter()
        .map(|d| d.blocks().c())
        .fold(truth.blocks().c(), f64::max);
    let joints = joints
        .into_iter()
        .map(|d| d.with_declared_bounds(b, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((BeliefMatrix::from_rows(rows)?, joints))
}

fn strategy_reports(
    strategy: StrategyModel,
    beliefs: &BeliefMatrix,
    joints: &[EventDistribution],
    truth: &EventDistribution,
    eta: f64,
    seed: u64,
    options: RunOptions,
) -> Result<ReportMatrix> {
    match strategy {
        StrategyModel::Truthful => Ok(beliefs.clone()),
        StrategyModel::BandAdversary => {
            let b = joints[0].blocks().b();
            let c = joints[0].blocks().c();
            let gamma = BandParams::log_sum_exp(b, c, eta).mw_bound();
            band_adversary_reports(beliefs, truth.marginals(), gamma)
        }
        StrategyModel::BestResponse => {
            if truth.m() > BEST_RESPONSE_MAX_M && !options.force {
                return Err(ArenaError::Infeasible(format!(
                    "best responses at m = {} exceed the cap {BEST_RESPONSE_MAX_M}; pass --force to run anyway",
                    truth.m()
                )));
            }
            let forecasters: Vec<Forecaster> = joints
                .iter()
                .map(|d| Forecaster::new(d.clone(), Strategy::BestResponse))
                .collect();
            Ok(iterated_best_response(
                &forecasters,
                eta,
                BEST_RESPONSE_SWEEPS,
                BEST_RESPONSE_TOL,
                seed,
            )?
            .reports)
        }
    }
}

fn check_scale(m: usize, options: RunOptions) -> Result<()> {
    if m > MAX_EVENTS && !options.force {
        return Err(ArenaError::Infeasible(format!(
            "m = {m} exceeds the cap {MAX_EVENTS}; pass --force to run anyway"
        )));
    }
    Ok(())
}

struct Competition {
    eta: f64,
    slack: f64,
    expected: Vec<f64>,
    concentration: f64,
    eps_optimal: Vec<bool>,
}

fn compete(
    dist: &EventDistribution,
    reports: &ReportMatrix,
    setup: &Competition,
    trials: u64,
    seed: u64,
) -> Vec<TrialRecord> {
    (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0u8; dist.m()],
            |y, k| {
                let mut rng = stream_rng(seed, k);
                dist.sample_into(&mut rng, y);
                let q = score_totals_unchecked(reports, y).0;
                let pi = mw_from_scores(&q, setup.eta);
                let w = sample_winner(&pi, &mut rng);
                let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                TrialRecord {
                    trial: k + 1,
                    y_digest: outcome_digest(y),
                    winner: w + 1,
                    eps_optimal: setup.eps_optimal[w],
                    near_max: q[w] >= top - setup.slack,
                    argmax: q[w] >= top - TIE_TOLERANCE,
                    scores_concentrated: q
                        .iter()
                        .zip(&setup.expected)
                        .all(|(qi, ei)| (qi - ei).abs() <= setup.concentration),
                    q,
                }
            },
        )
        .collect()
}

fn trial_header(n: usize) -> String {
    let mut fields: Vec<String> = [
        "m",
        "trial",
        "y_digest",
        "winner",
        "eps_optimal",
        "near_max",
        "argmax",
        "scores_concentrated",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    fields.extend((1..=n).map(|i| format!("q_{i}")));
    csv_line(&fields)
}

fn trial_lines(m: usize, records: &[TrialRecord], out: &mut String) {
    for r in records {
        let mut fields = vec![
            m.to_string(),
            r.trial.to_string(),
            r.y_digest.clone(),
            r.winner.to_string(),
            r.eps_optimal.to_string(),
            r.near_max.to_string(),
            r.argmax.to_string(),
            r.scores_concentrated.to_string(),
        ];
        fields.extend(r.q.iter().map(|&x| fmt(x)));
        out.push_str(&csv_line(&fields));
    }
}

/// Columns: `m,m_star,n,b,c,eta,epsilon,delta,strategy,trials,hits,freq,wilson_lo,wilson_hi,failure_upper,concentrated_freq,max_report_gap,eps_bad,pass`.
/// `eps_bad` lists the 1-based forecasters that are not ε-optimal, `;`-separated.
pub fn run_complexity(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    let spec = distribution_spec(config)?;
    let epsilon = config
        .epsilon
        .ok_or_else(|| ArenaError::Config("complexity runs need epsilon".into()))?;
    let strategy = config.strategy.unwrap_or(StrategyModel::Truthful);
    let n = forecaster_count(config);
    let counts = event_counts(config)?;
    for &m in &counts {
        check_scale(m, options)?;
    }
    let mut summary = csv_line(
        &[
            "m",
            "m_star",
            "n",
            "b",
            "c",
            "eta",
            "epsilon",
            "delta",
            "strategy",
            "trials",
            "hits",
            "freq",
            "wilson_lo",
            "wilson_hi",
            "failure_upper",
            "concentrated_freq",
            "max_report_gap",
            "eps_bad",
            "pass",
        ]
        .map(String::from),
    );
    let mut trials_csv = options.emit_trials.then(|| trial_header(n));
    let mut freq_series = Vec::new();
    let mut lo_series = Vec::new();
    for (j, &m) in counts.iter().enumerate() {
        let truth = spec.build(Some(m), &config.base_dir)?;
        let (b, c) = (truth.blocks().b(), truth.blocks().c());
        let eta = resolve_eta(config, b)?;
        MechanismConfig::new(eta)?.truthful_regime_warning(LOG_SUM_EXP_ALPHA, LOG_SUM_EXP_BETA, b);
        let m_star = required_events(n, epsilon, config.delta, b);
        let (beliefs, joints) = panel_beliefs(config, &truth)?;
        let seed = derive_seed(config.seed, j as u64);
        let reports = strategy_reports(strategy, &beliefs, &joints, &truth, eta, seed, options)?;
        let theta = truth.marginals();
        let profile = accuracy_profile(&beliefs, theta)?;
        let eps_optimal: Vec<bool> = (0..n).map(|i| profile.is_eps_optimal(i, epsilon)).collect();
        let concentration = if n > 1 {
            TailBoundSpec::new(m, b, c, config.delta)?
                .with_forecasters(n)?
                .score_union()?
        } else {
            f64::INFINITY
        };
        let setup = Competition {
            eta,
            slack: near_max_slack(n, config.delta, eta),
            expected: expected_score_totals(&reports, theta)?,
            concentration,
            eps_optimal: eps_optimal.clone(),
        };
        let records = compete(&truth, &reports, &setup, config.trials, seed);
        let hits = records.iter().filter(|r| r.eps_optimal).count() as u64;
        let concentrated = records.iter().filter(|r| r.scores_concentrated).count() as u64;
        let p = Proportion::wilson(hits, config.trials);
        let gap = reports
            .rows()
            .zip(beliefs.rows())
            .flat_map(|(r, q)| r.iter().zip(q).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let eps_bad: Vec<String> = (0..n)
            .filter(|&i| !eps_optimal[i])
            .map(|i| (i + 1).to_string())
            .collect();
        summary.push_str(&csv_line(&[
            m.to_string(),
            m_star.to_string(),
            n.to_string(),
            b.to_string(),
            fmt(c),
            fmt(eta),
            fmt(epsilon),
            fmt(config.delta),
            strategy.name().to_string(),
            config.trials.to_string(),
            hits.to_string(),
            fmt(p.freq),
            fmt(p.lo),
            fmt(p.hi),
            fmt(1.0 - p.lo),
            fmt(concentrated as f64 / config.trials as f64),
            fmt(gap),
            eps_bad.join(";"),
            (p.lo >= 1.0 - config.delta).to_string(),
        ]));
        if let Some(out) = trials_csv.as_mut() {
            trial_lines(m, &records, out);
        }
        freq_series.push((m as f64, p.freq));
        lo_series.push((m as f64, p.lo));
    }
    Ok(ExperimentOutput {
        summary,
        trials: trials_csv,
        plotdata: vec![
            PlotSeries {
                name: "eps_optimal_freq".into(),
                points: freq_series,
            },
            PlotSeries {
                name: "eps_optimal_lower".into(),
                points: lo_series,
            },
        ],
    })
}

/// Columns: `m,n,eta,delta,slack,strategy,trials,hits,freq,wilson_lo,wilson_hi,std_err,threshold,argmax_hits,argmax_freq,argmax_lo,argmax_hi,pass`.
/// `threshold` is `1 − δ/2 − 3·SE` with SE taken at `1 − δ/2`.
pub fn run_selection(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutput> {
    let spec = distribution_spec(config)?;
    let strategy = config.strategy.unwrap_or(StrategyModel::Truthful);
    let n = forecaster_count(config);
    let counts = event_counts(config)?;
    for &m in &counts {
        check_scale(m, options)?;
    }
    let mut summary = csv_line(
        &[
            "m",
            "n",
            "eta",
            "delta",
            "slack",
            "strategy",
            "trials",
            "hits",
            "freq",
            "wilson_lo",
            "wilson_hi",
            "std_err",
            "threshold",
            "argmax_hits",
            "argmax_freq",
            "argmax_lo",
            "argmax_hi",
            "pass",
        ]
        .map(String::from),
    );
    let mut trials_csv = options.emit_trials.then(|| trial_header(n));
    let mut series = Vec::new();
    for (j, &m) in counts.iter().enumerate() {
        let truth = spec.build(Some(m), &config.base_dir)?;
        let eta = resolve_eta(config, truth.blocks().b())?;
        let (beliefs, joints) = panel_beliefs(config, &truth)?;
        let seed = derive_seed(config.seed, j as u64);
        let reports = strategy_reports(strategy, &beliefs, &joints, &truth, eta, seed, options)?;
        let profile = accuracy_profile(&beliefs, truth.marginals())?;
        let setup = Competition {
            eta,
            slack: near_max_slack(n, config.delta, eta),
            expected: expected_score_totals(&reports, truth.marginals())?,
            concentration: f64::INFINITY,
            eps_optimal: (0..n)
                .map(|i| profile.is_eps_optimal(i, config.epsilon.unwrap_or(0.0)))
                .collect(),
        };
        let records = compete(&truth, &reports, &setup, config.trials, seed);
        let hits = records.iter().filter(|r| r.near_max).count() as u64;
        let argmax_hits = records.iter().filter(|r| r.argmax).count() as u64;
        let p = Proportion::wilson(hits, config.trials);
        let a = Proportion::wilson(argmax_hits, config.trials);
        let target = 1.0 - config.delta / 2.0;
        let se = p.std_err_at(target);
        let threshold = target - 3.0 * se;
        summary.push_str(&csv_line(&[
            m.to_string(),
            n.to_string(),
            fmt(eta),
            fmt(config.delta),
            fmt(setup.slack),
            strategy.name().to_string(),
            config.trials.to_string(),
            hits.to_string(),
            fmt(p.freq),
            fmt(p.lo),
            fmt(p.hi),
            fmt(se),
            fmt(threshold),
            argmax_hits.to_string(),
            fmt(a.freq),
            fmt(a.lo),
            fmt(a.hi),
            (p.freq >= threshold).to_string(),
        ]));
        if let Some(out) = trials_csv.as_mut() {
            trial_lines(m, &records, out);
        }
        series.push((m as f64, p.freq));
    }
    Ok(ExperimentOutput {
        summary,
        trials: trials_csv,
        plotdata: vec![PlotSeries {
            name: "near_max_freq".into(),
            points: series,
        }],
    })
}

/// Columns: `fixture,n,m,b,c,eta,cells,max_gap,bound,block_cells,max_block_gap,block_band,pass`.
pub fn run_truthfulness(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let grid: Vec<f64> = if config.eta_grid.is_empty() {
        DEFAULT_ETA_GRID.to_vec()
    } else {
        config.eta_grid.clone()
    };
    let fixtures = truthfulness_fixtures()?;
    let jobs: Vec<(&TruthfulnessFixture, f64)> = fixtures
        .iter()
        .flat_map(|f| grid.iter().map(move |&eta| (f, eta)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(f, eta)| evaluate_truthfulness(f, eta, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = csv_line(
        &[
            "fixture",
            "n",
            "m",
            "b",
            "c",
            "eta",
            "cells",
            "max_gap",
            "bound",
            "block_cells",
            "max_block_gap",
            "block_band",
            "pass",
        ]
        .map(String::from),
    );
    let mut series = Vec::new();
    for r in &rows {
        summary.push_str(&csv_line(&[
            r.fixture.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.b.to_string(),
            fmt(r.c),
            fmt(r.eta),
            r.cells.to_string(),
            fmt(r.max_gap),
            fmt(r.bound),
            r.block_cells.to_string(),
            fmt(r.max_block_gap),
            fmt(r.block_band),
            (r.pass_band && r.pass_block).to_string(),
        ]));
        series.push((r.bound, r.max_gap));
    }
    Ok(ExperimentOutput {
        summary,
        trials: None,
        plotdata: vec![PlotSeries {
            name: "gap_vs_bound".into(),
            points: series,
        }],
    })
}

/// Columns: `family,m,b,c,delta,trials,threshold,azuma,hits,freq,wilson_lo,wilson_hi,quantile,pass`.
/// `quantile` is the empirical `1 − δ` quantile of `|S − E[S]|`.
pub fn run_concentration(
    config: &ExperimentConfig,
    options: RunOptions,
) -> Result<ExperimentOutput> {
    let spec = distribution_spec(config)?;
    let counts = event_counts(config)?;
    for &m in &counts {
        check_scale(m, options)?;
    }
    let mut summary = csv_line(
        &[
            "family",
            "m",
            "b",
            "c",
            "delta",
            "trials",
            "threshold",
            "azuma",
            "hits",
            "freq",
            "wilson_lo",
            "wilson_hi",
            "quantile",
            "pass",
        ]
        .map(String::from),
    );
    let mut trials_csv = options
        .emit_trials
        .then(|| "m,trial,deviation\n".to_string());
    let mut quantiles = Vec::new();
    let mut thresholds = Vec::new();
    for (j, &m) in counts.iter().enumerate() {
        let dist = spec.build(Some(m), &config.base_dir)?;
        let bounds = TailBoundSpec::for_blocks(dist.blocks(), config.delta)?;
        let threshold = bounds.block_tail();
        let tail = empirical_tail(
            &dist,
            &TailStatistic::SumOfOutcomes,
            threshold,
            config.trials,
            derive_seed(config.seed, j as u64),
        )?;
        let q = quantile(&tail.deviations, 1.0 - config.delta);
        summary.push_str(&csv_line(&[
            dist.family().name().to_string(),
            m.to_string(),
            dist.blocks().b().to_string(),
            fmt(dist.blocks().c()),
            fmt(config.delta),
            config.trials.to_string(),
            fmt(threshold),
            fmt(bounds.azuma()),
            tail.exceed.hits.to_string(),
            fmt(tail.exceed.freq),
            fmt(tail.exceed.lo),
            fmt(tail.exceed.hi),
            fmt(q),
            (tail.exceed.hi <= config.delta).to_string(),
        ]));
        if let Some(out) = trials_csv.as_mut() {
            for (k, d) in tail.deviations.iter().enumerate() {
                let _ = writeln!(out, "{m},{},{}", k + 1, fmt(*d));
            }
        }
        quantiles.push((m as f64, q));
        thresholds.push((m as f64, threshold));
    }
    Ok(ExperimentOutput {
        summary,
        trials: trials_csv,
        plotdata: vec![
            PlotSeries {
                name: "deviation_quantile".into(),
                points: quantiles,
            },
            PlotSeries {
                name: "tail_threshold".into(),
                points: thresholds,
            },
        ],
    })
}

/// Columns: `check,fixture,paths,statistic,threshold,pass`.
pub fn run_chain_check(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let spec = distribution_spec(config)?;
    let m = match config.m {
        Some(AutoOr::Value(m)) => Some(m),
        Some(AutoOr::Auto(_)) => {
            return Err(ArenaError::Config("chain checks need an explicit m".into()))
        }
        None => None,
    };
    let dist = spec.build(m, &config.base_dir)?;
    if dist.m() > EXACT_CHAIN_MAX_M {
        log::warn!(
            "m = {} exceeds {EXACT_CHAIN_MAX_M}; exact-enumeration checks are skipped",
            dist.m()
        );
    }
    let mut options = ChainVerifyOptions::new(dist.family().name(), config.trials, config.seed);
    options.delta = config.delta;
    let report = verify_chain(&dist, &options)?;
    let mut summary = csv_line(
        &[
            "check",
            "fixture",
            "paths",
            "statistic",
            "threshold",
            "pass",
        ]
        .map(String::from),
    );
    for c in &report.checks {
        summary.push_str(&csv_line(&[
            c.check.to_string(),
            c.fixture.clone(),
            config.trials.to_string(),
            fmt(c.statistic),
            fmt(c.threshold),
            c.pass.to_string(),
        ]));
    }
    Ok(ExperimentOutput {
        summary,
        trials: None,
        plotdata: Vec::new(),
    })
}

/// Order-statistic confidence interval for the `level` quantile of `values`.
fn quantile_interval(values: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let half = crate::stats::Z95 * (n * level * (1.0 - level)).sqrt();
    let rank = |r: f64| sorted[(r.round() as usize).clamp(1, sorted.len()) - 1];
    (rank(n * level - half), rank(n * level + half + 1.0))
}

/// Columns: `b,m,c,delta,trials,quantile,quantile_lo,quantile_hi,threshold,exceed_freq,exceed_lo,exceed_hi,quantile_slope,threshold_slope,pass`.
/// `quantile` is the empirical `1 − δ` quantile of `|S − E[S]| − mc` and
/// `threshold` is the matching part of the tail bound, `2b√(2m ln(4/δ))`;
/// `exceed_*` count deviations beyond the full bound. Both slopes are log-log
/// fits against `b` over all rows.
pub fn run_tightness(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let c = match &config.distribution {
        None => DEFAULT_TIGHTNESS_C,
        Some(DistributionSpec::HiddenCoinGroups { c, .. }) => *c,
        Some(_) => {
            return Err(ArenaError::Config(
                "the tightness probe runs on hidden_coin_groups only".into(),
            ))
        }
    };
    let m = match config.m {
        Some(AutoOr::Value(m)) => m,
        None => DEFAULT_TIGHTNESS_M,
        Some(AutoOr::Auto(_)) => {
            return Err(ArenaError::Config(
                "the tightness probe needs a fixed m".into(),
            ))
        }
    };
    let b_values: Vec<usize> = if config.b_values.is_empty() {
        DEFAULT_TIGHTNESS_B.to_vec()
    } else {
        config.b_values.clone()
    };
    if b_values.len() < 2 {
        return Err(ArenaError::Config(
            "the tightness probe needs at least two b values".into(),
        ));
    }
    if let Some(b) = b_values.iter().find(|&&b| m % b != 0) {
        return Err(ArenaError::Config(format!(
            "b = {b} does not divide m = {m}"
        )));
    }
    let level = 1.0 - config.delta;
    struct Point {
        b: usize,
        c: f64,
        q: f64,
        lo: f64,
        hi: f64,
        threshold: f64,
        exceed: Proportion,
    }
    let mut points = Vec::new();
    for &b in &b_values {
        let dist = EventDistribution::hidden_coin_groups(m, b, c)?;
        let declared = dist.blocks().c();
        let full = TailBoundSpec::for_blocks(dist.blocks(), config.delta)?.block_tail();
        let threshold = 2.0 * b as f64 * (2.0 * m as f64 * (4.0 / config.delta).ln()).sqrt();
        let tail = empirical_tail(
            &dist,
            &TailStatistic::SumOfOutcomes,
            full,
            config.trials,
            derive_seed(config.seed, b as u64),
        )?;
        let excess: Vec<f64> = tail
            .deviations
            .iter()
            .map(|d| d - m as f64 * declared)
            .collect();
        let (lo, hi) = quantile_interval(&excess, level);
        points.push(Point {
            b,
            c: declared,
            q: quantile(&excess, level),
            lo,
            hi,
            threshold,
            exceed: tail.exceed,
        });
    }
    let bs: Vec<f64> = points.iter().map(|p| p.b as f64).collect();
    let qs: Vec<f64> = points.iter().map(|p| p.q).collect();
    let ts: Vec<f64> = points.iter().map(|p| p.threshold).collect();
    let q_slope = if qs.iter().all(|&q| q > 0.0) {
        log_log_slope(&bs, &qs)
    } else {
        f64::NAN
    };
    let t_slope = log_log_slope(&bs, &ts);
    let pass = (0.35..=0.65).contains(&q_slope) && (0.9..=1.1).contains(&t_slope);
    let mut summary = csv_line(
        &[
            "b",
            "m",
            "c",
            "delta",
            "trials",
            "quantile",
            "quantile_lo",
            "quantile_hi",
            "threshold",
            "exceed_freq",
            "exceed_lo",
            "exceed_hi",
            "quantile_slope",
            "threshold_slope",
            "pass",
        ]
        .map(String::from),
    );
    for p in &points {
        summary.push_str(&csv_line(&[
            p.b.to_string(),
            m.to_string(),
            fmt(p.c),
            fmt(config.delta),
            config.trials.to_string(),
            fmt(p.q),
            fmt(p.lo),
            fmt(p.hi),
            fmt(p.threshold),
            fmt(p.exceed.freq),
            fmt(p.exceed.lo),
            fmt(p.exceed.hi),
            fmt(q_slope),
            fmt(t_slope),
            pass.to_string(),
        ]));
    }
    Ok(ExperimentOutput {
        summary,
        trials: None,
        plotdata: vec![
            PlotSeries {
                name: "excess_quantile".into(),
                points: bs.iter().copied().zip(qs).collect(),
            },
            PlotSeries {
                name: "tail_threshold".into(),
                points: bs.iter().copied().zip(ts).collect(),
            },
        ],
    })
}

#[cfg(test)]
mod tests;
