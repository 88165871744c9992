//! Winner-selection mechanisms: multiplicative weights and its generalization
//! as the gradient of a convex conjugate applied to scaled score totals.

use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::EventDistribution;
use crate::error::{check_len, ArenaError, Result};
use crate::numeric::{log_sum_exp, softmax};
use crate::rng::stream_rng;
use crate::scoring::{argmax_lowest, score_totals, score_totals_unchecked};
use crate::types::{OutcomeVector, ReportMatrix};

/// Curvature-ratio constant that log-sum-exp satisfies: `|1 − 2π| ≤ 1`.
pub const LOG_SUM_EXP_ALPHA: f64 = 1.0;
/// Sup-norm Lipschitz constant used for `ln ∂²C` of log-sum-exp (the exact value is 2).
pub const LOG_SUM_EXP_BETA: f64 = 3.0;

/// Probability vector over forecasters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionDistribution(Vec<f64>);

impl SelectionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(ArenaError::InvalidParameter(
                "empty selection distribution".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(ArenaError::InvalidParameter(format!(
                "selection probabilities must be non-negative and sum to 1 (sum = {total})"
            )));
        }
        Ok(Self(probs))
    }

    pub(crate) fn from_unchecked(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most likely forecaster, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A smooth convex function whose gradient maps into the probability simplex.
pub trait Conjugate: Debug + Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// `∂²C / ∂x_i²`.
    fn second_partial(&self, x: &[f64], i: usize) -> f64;
    /// `∂³C / ∂x_i³`.
    fn third_partial(&self, x: &[f64], i: usize) -> f64;
}

/// `C(x) = ln Σ exp(x_i)`; its gradient is the softmax.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogSumExp;

impl Conjugate for LogSumExp {
    fn value(&self, x: &[f64]) -> f64 {
        log_sum_exp(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        softmax(x)
    }

    fn second_partial(&self, x: &[f64], i: usize) -> f64 {
        let (p, rest) = split_softmax(x, i);
        p * rest
    }

    fn third_partial(&self, x: &[f64], i: usize) -> f64 {
        let (p, rest) = split_softmax(x, i);
        p * rest * (rest - p)
    }
}

/// `(π_i, 1 − π_i)` with the complement summed directly, so it keeps full
/// relative precision when `π_i` is close to 1.
fn split_softmax(x: &[f64], i: usize) -> (f64, f64) {
    let pi = softmax(x);
    let rest = pi
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| p)
        .sum();
    (pi[i], rest)
}

#[derive(Debug, Clone)]
pub enum ConjugateKind {
    LogSumExp,
    Custom(Arc<dyn Conjugate>),
}

impl ConjugateKind {
    pub fn as_conjugate(&self) -> &dyn Conjugate {
        match self {
            ConjugateKind::LogSumExp => &LogSumExp,
            ConjugateKind::Custom(c) => c.as_ref(),
        }
    }

    pub fn is_log_sum_exp(&self) -> bool {
        matches!(self, ConjugateKind::LogSumExp)
    }
}

#[derive(Debug, Clone)]
pub struct MechanismConfig {
    eta: f64,
    conjugate: ConjugateKind,
}

impl MechanismConfig {
    /// Multiplicative weights with learning rate `eta`.
    pub fn new(eta: f64) -> Result<Self> {
        Self::with_conjugate(eta, ConjugateKind::LogSumExp)
    }

    pub fn with_conjugate(eta: f64, conjugate: ConjugateKind) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ArenaError::Domain {
                what: "learning rate eta",
                value: eta,
                domain: "(0, inf)",
            });
        }
        Ok(Self { eta, conjugate })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn conjugate(&self) -> &ConjugateKind {
        &self.conjugate
    }

    /// Warning text when `eta ≥ min(α/2, 1/(βb))`, the regime in which the
    /// truthfulness band is guaranteed. Also logged.
    pub fn truthful_regime_warning(&self, alpha: f64, beta: f64, b: usize) -> Option<String> {
        let limit = (alpha / 2.0).min(1.0 / (beta * b as f64));
        if self.eta < limit {
            return None;
        }
        let msg = format!(
            "eta = {} is not below min(alpha/2, 1/(beta b)) = {limit}; the truthfulness band is not guaranteed",
            self.eta
        );
        log::warn!("{msg}");
        Some(msg)
    }
}

/// Multiplicative weights: `π_i ∝ exp(η q_i)`.
pub fn mw_select(
    reports: &ReportMatrix,
    y: &OutcomeVector,
    eta: f64,
) -> Result<SelectionDistribution> {
    let config = MechanismConfig::new(eta)?;
    let q = score_totals(reports, y)?;
    Ok(mw_from_scores(q.as_slice(), config.eta))
}

/// Multiplicative weights from precomputed score totals.
pub fn mw_from_scores(q: &[f64], eta: f64) -> SelectionDistribution {
    let x: Vec<f64> = q.iter().map(|v| eta * v).collect();
    SelectionDistribution::from_unchecked(softmax(&x))
}

/// `π = ∇C(η q)`.
pub fn ftrl_select(
    reports: &ReportMatrix,
    y: &OutcomeVector,
    config: &MechanismConfig,
) -> Result<SelectionDistribution> {
    let q = score_totals(reports, y)?;
    ftrl_from_scores(q.as_slice(), config)
}

pub fn ftrl_from_scores(q: &[f64], config: &MechanismConfig) -> Result<SelectionDistribution> {
    let x: Vec<f64> = q.iter().map(|v| config.eta * v).collect();
    let pi = config.conjugate.as_conjugate().gradient(&x);
    check_len("conjugate gradient", q.len(), pi.len())?;
    let total: f64 = pi.iter().sum();
    let negative = pi.iter().fold(0.0f64, |acc, &p| acc.max(-p));
    let deviation = negative.max((total - 1.0).abs());
    if !(deviation <= 1e-9) {
        return Err(ArenaError::ConjugateOutsideSimplex { deviation });
    }
    Ok(SelectionDistribution::from_unchecked(pi))
}

/// Inverse-CDF draw of a winner.
pub fn sample_winner<R: Rng + ?Sized>(pi: &SelectionDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pi.0.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pi.0.iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(pi.0.len() - 1)
}

/// Margin by which multiplicative weights may miss the top score with
/// probability at most `δ/2`: `ln(2n/δ) / η`.
pub fn near_max_slack(n: usize, delta: f64, eta: f64) -> f64 {
    (2.0 * n as f64 / delta).ln() / eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionEstimate {
    pub distribution: SelectionDistribution,
    /// Per-forecaster standard error; zero for the exact method.
    pub std_err: Vec<f64>,
}

/// `E_y[π(R, y)]` under `dist`.
pub fn expected_selection(
    reports: &ReportMatrix,
    dist: &EventDistribution,
    config: &MechanismConfig,
    method: SelectionMethod,
) -> Result<SelectionEstimate> {
    check_len("outcome count", reports.m(), dist.m())?;
    let n = reports.n();
    match method {
        SelectionMethod::Exact => {
            let support = dist.enumerate()?;
            let mut acc = vec![0.0; n];
            for point in &support {
                let q = score_totals_unchecked(reports, point.outcome.as_slice());
                let pi = ftrl_from_scores(q.as_slice(), config)?;
                for (a, p) in acc.iter_mut().zip(pi.probs()) {
                    *a += point.prob * p;
                }
            }
            let total: f64 = acc.iter().sum();
            acc.iter_mut().for_each(|a| *a /= total);
            Ok(SelectionEstimate {
                distribution: SelectionDistribution::from_unchecked(acc),
                std_err: vec![0.0; n],
            })
        }
        SelectionMethod::MonteCarlo { trials, seed } => {
            if trials < 2 {
                return Err(ArenaError::InvalidParameter(
                    "Monte Carlo selection needs at least 2 trials".into(),
                ));
            }
            let draws: Vec<Vec<f64>> = (0..trials)
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream_rng(seed, k);
                    let y = dist.sample(&mut rng);
                    let q = score_totals_unchecked(reports, y.as_slice());
                    ftrl_from_scores(q.as_slice(), config).map(|pi| pi.0)
                })
                .collect::<Result<_>>()?;
            let mut moments = vec![crate::stats::Moments::default(); n];
            for pi in &draws {
                for (mo, &p) in moments.iter_mut().zip(pi) {
                    mo.push(p);
                }
            }
            Ok(SelectionEstimate {
                distribution: SelectionDistribution::from_unchecked(
                    moments.iter().map(|mo| mo.mean()).collect(),
                ),
                std_err: moments.iter().map(|mo| mo.std_err()).collect(),
            })
        }
    }
}

/// Outcome of a numeric check of the regularity conditions on a conjugate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub alpha: f64,
    pub beta: f64,
    pub probes: usize,
    pub pairs: usize,
    /// `min ∂²_i C − α |∂³_i C|` over probes and coordinates.
    pub curvature_margin: f64,
    pub curvature_witness: Vec<f64>,
    /// `max |ln(∂²_i C(x) / ∂²_i C(x'))| / ‖x − x'‖_∞` over checked pairs.
    pub log_curvature_lipschitz: f64,
    pub lipschitz_witness: (Vec<f64>, Vec<f64>),
    /// `min ∂²_i C`.
    pub min_second_partial: f64,
    /// Largest gap between analytic partials and central differences.
    pub finite_difference_gap: f64,
    pub curvature_ratio_ok: bool,
    pub lipschitz_ok: bool,
    pub positivity_ok: bool,
}

impl CurvatureReport {
    pub fn passed(&self) -> bool {
        self.curvature_ratio_ok && self.lipschitz_ok && self.positivity_ok
    }
}

/// Checks `∂²_i C ≥ α|∂³_i C|`, `β`-Lipschitzness of `ln ∂²_i C` in the sup
/// norm, and `∂²_i C > 0` on the given probes.
///
/// Lipschitz pairs are each probe with its successor and with a local
/// perturbation of sup-norm size `100 · fd_step`, so both global and
/// local slopes are seen.
pub fn verify_curvature(
    conjugate: &dyn Conjugate,
    probes: &[Vec<f64>],
    alpha: f64,
    beta: f64,
    fd_step: f64,
) -> CurvatureReport {
    let mut curvature_margin = f64::INFINITY;
    let mut curvature_witness = Vec::new();
    let mut min_second = f64::INFINITY;
    let mut fd_gap: f64 = 0.0;
    let mut lipschitz: f64 = 0.0;
    let mut lipschitz_witness = (Vec::new(), Vec::new());
    let mut pairs = 0;

    for (idx, x) in probes.iter().enumerate() {
        let n = x.len();
        for i in 0..n {
            let d2 = conjugate.second_partial(x, i);
            let d3 = conjugate.third_partial(x, i);
            let margin = d2 - alpha * d3.abs();
            if margin < curvature_margin {
                curvature_margin = margin;
                curvature_witness = x.clone();
            }
            min_second = min_second.min(d2);

            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += fd_step;
            lo[i] -= fd_step;
            let fd2 = (conjugate.gradient(&hi)[i] - conjugate.gradient(&lo)[i]) / (2.0 * fd_step);
            let fd3 = (conjugate.second_partial(&hi, i) - conjugate.second_partial(&lo, i))
                / (2.0 * fd_step);
            fd_gap = fd_gap.max((fd2 - d2).abs()).max((fd3 - d3).abs());
        }

        let local: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, v)| v + 100.0 * fd_step * if (idx + j) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut partners = vec![local];
        if let Some(next) = probes.get(idx + 1) {
            if next.len() == n {
                partners.push(next.clone());
            }
        }
        for other in partners {
            let dist = x
                .iter()
                .zip(&other)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dist == 0.0 {
                continue;
            }
            pairs += 1;
            for i in 0..n {
                let ratio = (conjugate.second_partial(x, i) / conjugate.second_partial(&other, i))
                    .ln()
                    .abs();
                let slope = if ratio.is_nan() {
                    f64::INFINITY
                } else {
                    ratio / dist
                };
                if slope > lipschitz {
                    lipschitz = slope;
                    lipschitz_witness = (x.clone(), other.clone());
                }
            }
        }
    }

    CurvatureReport {
        alpha,
        beta,
        probes: probes.len(),
        pairs,
        curvature_margin,
        curvature_witness,
        log_curvature_lipschitz: lipschitz,
        lipschitz_witness,
        min_second_partial: min_second,
        finite_difference_gap: fd_gap,
        curvature_ratio_ok: curvature_margin >= 0.0,
        lipschitz_ok: lipschitz <= beta,
        positivity_ok: min_second > 0.0,
    }
}

/// `count` probes uniform in `[-range, range]^n` from stream 0 of `seed`.
pub fn random_probes(n: usize, count: usize, range: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-range..=range)).collect())
        .collect()
}
