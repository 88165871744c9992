//! Tail thresholds for sums of block-correlated variables, Monte Carlo tail
//! estimates, and the resampling chain behind the dependent-variable bound.

mod chain;

pub use chain::{
    build_resampling_chain, enumerate_chain, verify_chain, ChainCheck, ChainPlan, ChainReport,
    ChainVariant, ChainVerifyOptions, ResamplingChain, EXACT_CHAIN_MAX_M,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{BlockStructure, EventDistribution};
use crate::error::{check_len, check_unit, ArenaError, Result};
use crate::rng::stream_rng;
use crate::scoring::score;
use crate::stats::Proportion;

/// Inputs of the tail thresholds. `b` bounds `1 +` the number of influencers
/// of each variable (the variable itself is not an influencer here).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundSpec {
    pub m: usize,
    pub b: usize,
    pub c: f64,
    pub delta: f64,
    pub n: Option<usize>,
}

impl TailBoundSpec {
    pub fn new(m: usize, b: usize, c: f64, delta: f64) -> Result<Self> {
        if m == 0 || b == 0 {
            return Err(ArenaError::InvalidParameter(
                "m and b must be at least 1".into(),
            ));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(ArenaError::Domain {
                what: "slack c",
                value: c,
                domain: "[0, inf)",
            });
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(ArenaError::Domain {
                what: "failure probability delta",
                value: delta,
                domain: "(0, 1]",
            });
        }
        Ok(Self {
            m,
            b,
            c,
            delta,
            n: None,
        })
    }

    /// Bounds for events carrying `blocks`: the same `b` and `c`, with each
    /// block read without its own event.
    pub fn for_blocks(blocks: &BlockStructure, delta: f64) -> Result<Self> {
        Self::new(blocks.m(), blocks.b(), blocks.c(), delta)
    }

    pub fn with_forecasters(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ArenaError::InvalidParameter("n must be at least 1".into()));
        }
        self.n = Some(n);
        Ok(self)
    }

    fn linear(&self) -> f64 {
        self.m as f64 * self.c
    }

    fn root(&self, log_arg: f64) -> f64 {
        (2.0 * self.m as f64 * log_arg.ln()).sqrt()
    }

    /// `mc + b√(2m ln(1/δ))`.
    pub fn azuma(&self) -> f64 {
        self.linear() + self.b as f64 * self.root(1.0 / self.delta)
    }

    /// `mc + 2b√(2m ln(4/δ))`.
    pub fn block_tail(&self) -> f64 {
        self.linear() + 2.0 * self.b as f64 * self.root(4.0 / self.delta)
    }

    /// `mc + 2b√(2m ln(8n/δ))`; needs `n`.
    pub fn score_union(&self) -> Result<f64> {
        let n = self
            .n
            .ok_or_else(|| ArenaError::InvalidParameter("the score bound needs n".into()))?;
        Ok(self.linear() + 2.0 * self.b as f64 * self.root(8.0 * n as f64 / self.delta))
    }

    /// `mc + b√(2m ln(4/δ))`, for the proxy sum against the true mean.
    pub fn proxy_to_mean(&self) -> f64 {
        self.linear() + self.proxy_to_sum()
    }

    /// `b√(2m ln(4/δ))`, for the proxy sum against the realized sum.
    pub fn proxy_to_sum(&self) -> f64 {
        self.b as f64 * self.root(4.0 / self.delta)
    }
}

pub fn azuma_threshold(m: usize, b: usize, c: f64, delta: f64) -> Result<f64> {
    Ok(TailBoundSpec::new(m, b, c, delta)?.azuma())
}

pub fn block_tail_threshold(m: usize, b: usize, c: f64, delta: f64) -> Result<f64> {
    Ok(TailBoundSpec::new(m, b, c, delta)?.block_tail())
}

pub fn score_union_threshold(m: usize, b: usize, c: f64, delta: f64, n: usize) -> Result<f64> {
    TailBoundSpec::new(m, b, c, delta)?
        .with_forecasters(n)?
        .score_union()
}

/// Statistic whose deviation from its exact mean is measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatistic {
    SumOfOutcomes,
    /// Score total `Σ_t S(r_t, y_t)` of one report row.
    ScoreDeviation(Vec<f64>),
}

impl TailStatistic {
    fn mean(&self, theta: &[f64]) -> Result<f64> {
        let mean = match self {
            TailStatistic::SumOfOutcomes => theta.iter().sum(),
            TailStatistic::ScoreDeviation(row) => {
                check_len("report row", theta.len(), row.len())?;
                for &r in row {
                    check_unit("report", r)?;
                }
                // E[S(r, Y)] = 1 − r² + 2rθ − θ
                row.iter()
                    .zip(theta)
                    .map(|(&r, &th)| 1.0 - r * r + 2.0 * r * th - th)
                    .sum()
            }
        };
        if !f64::is_finite(mean) {
            return Err(ArenaError::MeanUnavailable(
                "the marginals are not finite".into(),
            ));
        }
        Ok(mean)
    }

    fn eval(&self, y: &[u8]) -> f64 {
        match self {
            TailStatistic::SumOfOutcomes => y.iter().map(|&v| v as f64).sum(),
            TailStatistic::ScoreDeviation(row) => {
                row.iter().zip(y).map(|(&r, &v)| score(r, v)).sum()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub mean: f64,
    pub threshold: f64,
    /// Trials with `|statistic − mean| ≥ threshold`.
    pub exceed: Proportion,
    /// Every observed `|statistic − mean|`, in trial order.
    #[serde(skip)]
    pub deviations: Vec<f64>,
}

/// Fraction of `trials` draws whose statistic deviates from its exact mean by
/// at least `threshold`. Trial `k` uses stream `k` of `seed`.
pub fn empirical_tail(
    dist: &EventDistribution,
    statistic: &TailStatistic,
    threshold: f64,
    trials: u64,
    seed: u64,
) -> Result<TailEstimate> {
    if trials == 0 {
        return Err(ArenaError::InvalidParameter(
            "trials must be at least 1".into(),
        ));
    }
    let mean = statistic.mean(dist.marginals())?;
    let deviations: Vec<f64> = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0u8; dist.m()],
            |buf, k| {
                let mut rng = stream_rng(seed, k);
                dist.sample_into(&mut rng, buf);
                (statistic.eval(buf) - mean).abs()
            },
        )
        .collect();
    let hits = deviations.iter().filter(|&&d| d >= threshold).count() as u64;
    Ok(TailEstimate {
        mean,
        threshold,
        exceed: Proportion::wilson(hits, trials),
        deviations,
    })
}
