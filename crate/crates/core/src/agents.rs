//! Strategic forecasters: exact best responses, iterated best response,
//! worst-case band reports, and the distance of reports from beliefs.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::EventDistribution;
use crate::error::{check_len, ArenaError, Result};
use crate::mechanism::{MechanismConfig, LOG_SUM_EXP_ALPHA, LOG_SUM_EXP_BETA};
use crate::numeric::{log_sum_exp, sigmoid};
use crate::rng::stream_rng;
use crate::scoring::{accuracy_profile, score};
use crate::types::{BeliefMatrix, OutcomeVector, ReportMatrix};

/// Absolute tolerance of the golden-section search.
pub const REPORT_TOLERANCE: f64 = 1e-10;
/// Grid size of the concavity pre-check.
pub const CONCAVITY_GRID: usize = 101;
/// Allowed three-point concavity violation on the grid.
pub const CONCAVITY_SLACK: f64 = 1e-12;
/// Conditioning outcomes sampled when they cannot all be enumerated.
pub const PANEL_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandDirection {
    Up,
    Down,
    TowardTruth,
    AwayFromTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Truthful,
    BestResponse,
    BandAdversary {
        gamma: f64,
        direction: BandDirection,
    },
}

#[derive(Debug, Clone)]
pub struct Forecaster {
    pub belief: EventDistribution,
    pub strategy: Strategy,
}

impl Forecaster {
    pub fn new(belief: EventDistribution, strategy: Strategy) -> Self {
        Self { belief, strategy }
    }

    pub fn marginals(&self) -> &[f64] {
        self.belief.marginals()
    }
}

/// Checks that a panel shares `m` and the declared `(b, c)`.
pub fn check_panel(forecasters: &[Forecaster]) -> Result<(usize, usize, f64)> {
    let first = forecasters
        .first()
        .ok_or_else(|| ArenaError::InvalidParameter("no forecasters".into()))?;
    let (m, b, c) = (
        first.belief.m(),
        first.belief.blocks().b(),
        first.belief.blocks().c(),
    );
    for f in forecasters {
        check_len("belief event count", m, f.belief.m())?;
        if f.belief.blocks().b() != b || f.belief.blocks().c() != c {
            return Err(ArenaError::InvalidParameter(format!(
                "beliefs must declare one shared (b, c); found ({b}, {c}) and ({}, {})",
                f.belief.blocks().b(),
                f.belief.blocks().c()
            )));
        }
    }
    Ok((m, b, c))
}

pub fn belief_matrix(forecasters: &[Forecaster]) -> Result<BeliefMatrix> {
    BeliefMatrix::from_rows(forecasters.iter().map(|f| f.marginals().to_vec()).collect())
}

/// Band widths for learning rate `eta` and declared `(b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandParams {
    pub b: usize,
    pub c: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BandParams {
    /// Constants of the log-sum-exp conjugate.
    pub fn log_sum_exp(b: usize, c: f64, eta: f64) -> Self {
        Self {
            b,
            c,
            eta,
            alpha: LOG_SUM_EXP_ALPHA,
            beta: LOG_SUM_EXP_BETA,
        }
    }

    /// `(βb + 1)η + c`.
    pub fn general_bound(&self) -> f64 {
        (self.beta * self.b as f64 + 1.0) * self.eta + self.c
    }

    /// `4bη + c`.
    pub fn mw_bound(&self) -> f64 {
        4.0 * self.b as f64 * self.eta + self.c
    }

    /// `βηb + (βηb)²`, the distance of a best response from the conditional belief mean.
    pub fn block_band(&self) -> f64 {
        let x = self.beta * self.eta * self.b as f64;
        x + x * x
    }

    pub fn in_regime(&self) -> bool {
        self.eta < (self.alpha / 2.0).min(1.0 / (self.beta * self.b as f64))
    }
}

/// Expected selection probability of forecaster `i` as a function of its
/// report on one event, with everything else held fixed.
///
/// Each outcome contributes `w · σ(z₀ + η S(r, y_t))`, where `z₀` collects
/// forecaster `i`'s other scores against the log-sum-exp of its opponents.
#[derive(Debug, Clone)]
pub struct ReportObjective {
    eta: f64,
    /// `(weight, z₀, y_t)`.
    terms: Vec<(f64, f64, u8)>,
}

impl ReportObjective {
    fn new(
        reports: &ReportMatrix,
        i: usize,
        t: usize,
        eta: f64,
        outcomes: impl IntoIterator<Item = (f64, Vec<u8>)>,
    ) -> Self {
        let terms = outcomes
            .into_iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, y)| {
                let q: Vec<f64> = reports
                    .rows()
                    .map(|row| row.iter().zip(&y).map(|(&r, &v)| score(r, v)).sum())
                    .collect();
                let own = q[i] - score(reports.get(i, t), y[t]);
                let others: Vec<f64> = q
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| eta * v)
                    .collect();
                (w, eta * own - log_sum_exp(&others), y[t])
            })
            .collect();
        Self { eta, terms }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(w, z0, yt)| w * sigmoid(z0 + self.eta * score(r, yt)))
            .sum()
    }

    /// `value(a) − value(b)` without cancellation, so points closer than the
    /// resolution of `value` can still be ranked.
    pub fn difference(&self, a: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(w, z0, yt)| {
                let za = z0 + self.eta * score(a, yt);
                let y = yt as f64;
                // z_b − z_a = η (a − b)(a + b − 2y)
                let gap = self.eta * (a - b) * (a + b - 2.0 * y);
                -w * sigmoid(za) * sigmoid(-(za + gap)) * gap.exp_m1()
            })
            .sum()
    }

    /// Unique maximizer on `[0, 1]`, after checking concavity on a grid.
    pub fn maximize(&self) -> Result<f64> {
        let grid: Vec<f64> = (0..CONCAVITY_GRID)
            .map(|k| self.value(k as f64 / (CONCAVITY_GRID - 1) as f64))
            .collect();
        for k in 1..grid.len() - 1 {
            let violation = (grid[k - 1] + grid[k + 1]) / 2.0 - grid[k];
            if violation > CONCAVITY_SLACK {
                return Err(ArenaError::NonConcave {
                    violation,
                    at: k as f64 / (CONCAVITY_GRID - 1) as f64,
                });
            }
        }
        Ok(golden_section_max_by(
            |a, b| self.difference(a, b),
            0.0,
            1.0,
            REPORT_TOLERANCE,
        ))
    }
}

/// Maximizer of a unimodal function on `[lo, hi]` to absolute tolerance `tol`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    golden_section_max_by(|a, b| f(a) - f(b), lo, hi, tol)
}

/// Golden-section search driven by `diff(a, b) = f(a) − f(b)`.
pub fn golden_section_max_by(
    diff: impl Fn(f64, f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    while hi - lo > tol {
        if diff(a, b) < 0.0 {
            lo = a;
            a = b;
            b = lo + inv_phi * (hi - lo);
        } else {
            hi = b;
            b = a;
            a = hi - inv_phi * (hi - lo);
        }
    }
    (lo + hi) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub report: f64,
    /// `E[Y_t | conditioning]` under the forecaster's belief.
    pub conditional_mean: f64,
    /// Set when `n = 1`: every report wins with certainty.
    pub degenerate: bool,
}

/// Best report of forecaster `i` on event `t` given the outcomes of every
/// event outside `t`'s block. The block's outcomes are averaged exactly.
pub fn best_response_event(
    reports: &ReportMatrix,
    i: usize,
    t: usize,
    belief: &EventDistribution,
    conditioning: &[(usize, u8)],
    eta: f64,
) -> Result<BestResponse> {
    check_len("belief event count", reports.m(), belief.m())?;
    let config = MechanismConfig::new(eta)?;
    let blocks = belief.blocks();
    config.truthful_regime_warning(LOG_SUM_EXP_ALPHA, LOG_SUM_EXP_BETA, blocks.b());
    let outside: BTreeSet<usize> = blocks.complement(t).into_iter().collect();
    let given: BTreeSet<usize> = conditioning.iter().map(|&(j, _)| j).collect();
    if given != outside || given.len() != conditioning.len() {
        return Err(ArenaError::InvalidParameter(format!(
            "conditioning must fix exactly the events outside the block of event {t}"
        )));
    }
    let query = crate::distributions::ConditionalQuery::new(t, conditioning.to_vec())?;
    let conditional_mean = belief.conditional_mean(&query)?;
    if reports.n() == 1 {
        return Ok(BestResponse {
            report: belief.marginals()[t],
            conditional_mean,
            degenerate: true,
        });
    }
    let outcomes = block_outcomes(belief, t, conditioning)?;
    let objective = ReportObjective::new(reports, i, t, eta, outcomes);
    Ok(BestResponse {
        report: objective.maximize()?,
        conditional_mean,
        degenerate: false,
    })
}

/// The objective maximized by [`best_response_event`], for cross-checks.
pub fn block_objective(
    reports: &ReportMatrix,
    i: usize,
    t: usize,
    belief: &EventDistribution,
    conditioning: &[(usize, u8)],
    eta: f64,
) -> Result<ReportObjective> {
    let outcomes = block_outcomes(belief, t, conditioning)?;
    Ok(ReportObjective::new(reports, i, t, eta, outcomes))
}

/// Every assignment of `t`'s block with its conditional probability, each
/// completed by `conditioning` to a full outcome vector.
fn block_outcomes(
    belief: &EventDistribution,
    t: usize,
    conditioning: &[(usize, u8)],
) -> Result<Vec<(f64, Vec<u8>)>> {
    let block = belief.blocks().block(t);
    let mut base = vec![0u8; belief.m()];
    for &(j, v) in conditioning {
        base[j] = v;
    }
    let mut outcomes = Vec::with_capacity(1 << block.len());
    for mask in 0u64..(1u64 << block.len()) {
        let target: Vec<(usize, u8)> = block
            .iter()
            .enumerate()
            .map(|(k, &j)| (j, ((mask >> k) & 1) as u8))
            .collect();
        let p = belief.conditional_probability(&target, conditioning)?;
        let mut y = base.clone();
        for &(j, v) in &target {
            y[j] = v;
        }
        outcomes.push((p, y));
    }
    Ok(outcomes)
}

/// Fixed outcomes `(event, value)` for a set of events.
pub type Assignment = Vec<(usize, u8)>;

/// Outcomes of the events outside `t`'s block to condition on: every
/// realizable one when the belief is enumerable, else `PANEL_SIZE` samples.
/// The flag is `true` for the exhaustive panel.
pub fn conditioning_panel(
    belief: &EventDistribution,
    t: usize,
    seed: u64,
) -> Result<(Vec<Assignment>, bool)> {
    let outside = belief.blocks().complement(t);
    let project = |y: &[u8]| outside.iter().map(|&j| (j, y[j])).collect::<Vec<_>>();
    if belief.m() <= belief.enumeration_cap() {
        let mut seen = BTreeSet::new();
        for point in belief.enumerate()? {
            seen.insert(project(point.outcome.as_slice()));
        }
        return Ok((seen.into_iter().collect(), true));
    }
    let mut rng = stream_rng(seed, t as u64);
    let mut panel = BTreeSet::new();
    for _ in 0..PANEL_SIZE {
        panel.insert(project(belief.sample(&mut rng).as_slice()));
    }
    Ok((panel.into_iter().collect(), false))
}

/// Full expected win probability of forecaster `i` as a function of its
/// report on `t`, averaged over its belief: exactly when enumerable, else over
/// `PANEL_SIZE` sampled outcomes outside `t`'s block with the block itself
/// averaged exactly given each sample.
pub fn expected_utility_objective(
    reports: &ReportMatrix,
    i: usize,
    t: usize,
    belief: &EventDistribution,
    eta: f64,
    seed: u64,
) -> Result<ReportObjective> {
    let outcomes: Vec<(f64, Vec<u8>)> = if belief.m() <= belief.enumeration_cap() {
        belief
            .enumerate()?
            .into_iter()
            .map(|p| (p.prob, p.outcome.as_slice().to_vec()))
            .collect()
    } else {
        let mut rng = stream_rng(seed, (i * reports.m() + t) as u64);
        let outside = belief.blocks().complement(t);
        let w = 1.0 / PANEL_SIZE as f64;
        let mut outcomes = Vec::new();
        for _ in 0..PANEL_SIZE {
            let y = belief.sample(&mut rng);
            let conditioning: Vec<(usize, u8)> = outside.iter().map(|&j| (j, y.get(j))).collect();
            outcomes.extend(
                block_outcomes(belief, t, &conditioning)?
                    .into_iter()
                    .map(|(p, y)| (w * p, y)),
            );
        }
        outcomes
    };
    Ok(ReportObjective::new(reports, i, t, eta, outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IteratedOutcome {
    #[serde(skip)]
    pub reports: ReportMatrix,
    pub sweeps: usize,
    pub converged: bool,
    pub last_change: f64,
}

/// Jacobi best-response sweeps from truthful reports.
///
/// Within a sweep every `(i, t)` responds to a frozen snapshot; forecasters
/// whose strategy is not `BestResponse` keep their rows. Every updated row must
/// end inside its band around the belief marginals.
pub fn iterated_best_response(
    forecasters: &[Forecaster],
    eta: f64,
    sweeps: usize,
    tol: f64,
    seed: u64,
) -> Result<IteratedOutcome> {
    if sweeps == 0 {
        return Err(ArenaError::InvalidParameter(
            "sweeps must be at least 1".into(),
        ));
    }
    let (m, b, c) = check_panel(forecasters)?;
    let band = BandParams::log_sum_exp(b, c, eta);
    let mut reports = initial_reports(forecasters, None)?;
    let n = forecasters.len();
    let movers: Vec<usize> = (0..n)
        .filter(|&i| forecasters[i].strategy == Strategy::BestResponse)
        .collect();
    let mut last_change = 0.0;
    let mut done = 0;
    let mut converged = n == 1 || movers.is_empty();
    if !converged {
        for sweep in 0..sweeps {
            let snapshot = reports.clone();
            let cells: Vec<(usize, usize)> = movers
                .iter()
                .flat_map(|&i| (0..m).map(move |t| (i, t)))
                .collect();
            let updates: Vec<f64> = cells
                .par_iter()
                .map(|&(i, t)| {
                    expected_utility_objective(
                        &snapshot,
                        i,
                        t,
                        &forecasters[i].belief,
                        eta,
                        crate::rng::derive_seed(seed, sweep as u64),
                    )?
                    .maximize()
                })
                .collect::<Result<_>>()?;
            last_change = 0.0;
            for (&(i, t), r) in cells.iter().zip(updates) {
                last_change = f64::max(last_change, (r - snapshot.get(i, t)).abs());
                reports.set(i, t, r)?;
            }
            done = sweep + 1;
            if last_change <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("best-response iteration did not converge: last change {last_change:e}");
        }
    }
    for &i in &movers {
        let gap = row_gap(reports.row(i), forecasters[i].marginals());
        if gap > band.mw_bound() + 1e-8 {
            return Err(ArenaError::BandViolation {
                forecaster: i,
                gap,
                bound: band.mw_bound(),
            });
        }
    }
    Ok(IteratedOutcome {
        reports,
        sweeps: done,
        converged,
        last_change,
    })
}

fn row_gap(reports: &[f64], beliefs: &[f64]) -> f64 {
    reports
        .iter()
        .zip(beliefs)
        .map(|(r, p)| (r - p).abs())
        .fold(0.0, f64::max)
}

/// `p ± γ` clipped to `[0, 1]`; `truth` is needed for the truth-relative directions.
pub fn band_report(
    belief: f64,
    gamma: f64,
    direction: BandDirection,
    truth: Option<f64>,
) -> Result<f64> {
    let up = match direction {
        BandDirection::Up => true,
        BandDirection::Down => false,
        BandDirection::TowardTruth | BandDirection::AwayFromTruth => {
            let th = truth.ok_or_else(|| {
                ArenaError::InvalidParameter(
                    "truth-relative band reports need the true marginals".into(),
                )
            })?;
            (th >= belief) == (direction == BandDirection::TowardTruth)
        }
    };
    Ok(if up { belief + gamma } else { belief - gamma }.clamp(0.0, 1.0))
}

/// Reports at the edge of the band that hurt selection most: the most accurate
/// forecaster moves away from the truth and everyone else moves toward it.
pub fn band_adversary_reports(
    beliefs: &BeliefMatrix,
    theta: &[f64],
    gamma: f64,
) -> Result<ReportMatrix> {
    let profile = accuracy_profile(beliefs, theta)?;
    let best = crate::scoring::argmax_lowest(&profile.accuracy);
    let rows = (0..beliefs.n())
        .map(|i| {
            let dir = if i == best {
                BandDirection::AwayFromTruth
            } else {
                BandDirection::TowardTruth
            };
            beliefs
                .row(i)
                .iter()
                .zip(theta)
                .map(|(&p, &th)| band_report(p, gamma, dir, Some(th)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ReportMatrix::from_rows(rows)
}

/// Rows for truthful and band-adversary forecasters; best responders start truthful.
pub fn initial_reports(forecasters: &[Forecaster], truth: Option<&[f64]>) -> Result<ReportMatrix> {
    let rows = forecasters
        .iter()
        .map(|f| match &f.strategy {
            Strategy::Truthful | Strategy::BestResponse => Ok(f.marginals().to_vec()),
            Strategy::BandAdversary { gamma, direction } => f
                .marginals()
                .iter()
                .enumerate()
                .map(|(t, &p)| band_report(p, *gamma, *direction, truth.map(|th| th[t])))
                .collect(),
        })
        .collect::<Result<Vec<_>>>()?;
    ReportMatrix::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthfulnessReport {
    pub gap: f64,
    pub bound: f64,
    pub mw_bound: f64,
    pub pass: bool,
}

/// Largest `|r_it − p_it|` against the applicable band: `4bη + c` for
/// multiplicative weights, `(βb + 1)η + c` otherwise.
pub fn truthfulness_gap(
    reports: &ReportMatrix,
    beliefs: &BeliefMatrix,
    band: &BandParams,
    log_sum_exp: bool,
) -> Result<TruthfulnessReport> {
    check_len("report rows", beliefs.n(), reports.n())?;
    check_len("report columns", beliefs.m(), reports.m())?;
    let gap = (0..reports.n())
        .map(|i| row_gap(reports.row(i), beliefs.row(i)))
        .fold(0.0, f64::max);
    let applicable = if log_sum_exp {
        band.mw_bound()
    } else {
        band.general_bound()
    };
    Ok(TruthfulnessReport {
        gap,
        bound: band.general_bound(),
        mw_bound: band.mw_bound(),
        pass: gap <= applicable + 1e-12,
    })
}

/// Draws one outcome vector per forecaster belief; helper for panels in experiments.
pub fn sample_beliefs<R: Rng + ?Sized>(
    forecasters: &[Forecaster],
    rng: &mut R,
) -> Vec<OutcomeVector> {
    forecasters.iter().map(|f| f.belief.sample(rng)).collect()
}
