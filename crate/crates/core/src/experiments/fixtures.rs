//! Small enumerable panels used by the truthfulness sweep.

use serde::Serialize;

use crate::agents::{
    best_response_event, conditioning_panel, expected_utility_objective, BandParams, Forecaster,
    Strategy,
};
use crate::distributions::EventDistribution;
use crate::error::Result;
use crate::types::ReportMatrix;

/// A panel of best-responding forecasters whose beliefs share `(b, c)`.
#[derive(Debug, Clone)]
pub struct TruthfulnessFixture {
    pub name: String,
    pub forecasters: Vec<Forecaster>,
}

impl TruthfulnessFixture {
    pub fn n(&self) -> usize {
        self.forecasters.len()
    }

    pub fn m(&self) -> usize {
        self.forecasters[0].belief.m()
    }

    pub fn b(&self) -> usize {
        self.forecasters[0].belief.blocks().b()
    }

    pub fn c(&self) -> f64 {
        self.forecasters[0].belief.blocks().c()
    }
}

fn panel(name: String, beliefs: Vec<EventDistribution>) -> Result<TruthfulnessFixture> {
    let b = beliefs.iter().map(|d| d.blocks().b()).max().unwrap_or(1);
    let c = beliefs.iter().map(|d| d.blocks().c()).fold(0.0, f64::max);
    let forecasters = beliefs
        .into_iter()
        .map(|d| {
            Ok(Forecaster::new(
                d.with_declared_bounds(b, c)?,
                Strategy::BestResponse,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthfulnessFixture { name, forecasters })
}

/// Belief of forecaster `i` in family `family`; parameters drift with `i`.
fn belief(family: &str, i: usize) -> Result<EventDistribution> {
    let s = i as f64;
    match family {
        "independent_m3" => EventDistribution::independent(&[0.3 + 0.1 * s, 0.6, 0.8 - 0.15 * s]),
        "independent_m8" => EventDistribution::independent(
            &(0..8)
                .map(|t| 0.1 + 0.1 * ((t + i) % 8) as f64)
                .collect::<Vec<_>>(),
        ),
        "disjoint_blocks_m4" => EventDistribution::disjoint_blocks(
            &[vec![0, 1], vec![2, 3]],
            &[0.4 + 0.1 * s, 0.7 - 0.1 * s],
        ),
        "hidden_coin_m4_b2" => EventDistribution::hidden_coin_groups(4, 2, 0.05 + 0.05 * s),
        "hidden_coin_m6_b3" => EventDistribution::hidden_coin_groups(6, 3, 0.1 + 0.05 * s),
        "random_bias_m3" => {
            EventDistribution::random_bias(3, &[0.3 + 0.05 * s, 0.7], &[0.5, 0.5 + 0.25 * s])
        }
        "election_m4" => EventDistribution::election(
            &[2, 2],
            &[0.45 + 0.05 * s, 0.5, 0.6, 0.4 + 0.1 * s],
            0.1,
            0.5,
        ),
        other => unreachable!("unknown fixture family {other}"),
    }
}

pub const FIXTURE_FAMILIES: [&str; 7] = [
    "independent_m3",
    "independent_m8",
    "disjoint_blocks_m4",
    "hidden_coin_m4_b2",
    "hidden_coin_m6_b3",
    "random_bias_m3",
    "election_m4",
];

/// Every family at `n = 2` and `n = 3`, `m ≤ 8`, `b ≤ 3`.
pub fn truthfulness_fixtures() -> Result<Vec<TruthfulnessFixture>> {
    let mut out = Vec::new();
    for family in FIXTURE_FAMILIES {
        for n in [2, 3] {
            let beliefs = (0..n)
                .map(|i| belief(family, i))
                .collect::<Result<Vec<_>>>()?;
            out.push(panel(format!("{family}_n{n}"), beliefs)?);
        }
    }
    Ok(out)
}

/// Worst gaps of exact best responses on one fixture at one `η`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthfulnessRow {
    pub fixture: String,
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub c: f64,
    pub eta: f64,
    /// `(profile, forecaster, event)` cells solved.
    pub cells: usize,
    /// Largest `|r* − p|` for the full expected-utility best response.
    pub max_gap: f64,
    /// `4bη + c`.
    pub bound: f64,
    /// `(cell, conditioning outcome)` pairs solved.
    pub block_cells: usize,
    /// Largest `|r* − E[Y_t | outside outcomes]|` for the per-block best response.
    pub max_block_gap: f64,
    /// `βηb + (βηb)²`.
    pub block_band: f64,
    pub pass_band: bool,
    pub pass_block: bool,
}

/// Tolerance added to both bands.
pub const BAND_TOLERANCE: f64 = 1e-8;

/// Solves every cell against two opponent profiles: truthful opponents and
/// opponents reporting `1 − p`.
pub fn evaluate_truthfulness(
    fixture: &TruthfulnessFixture,
    eta: f64,
    seed: u64,
) -> Result<TruthfulnessRow> {
    let (n, m) = (fixture.n(), fixture.m());
    let truthful: Vec<Vec<f64>> = fixture
        .forecasters
        .iter()
        .map(|f| f.marginals().to_vec())
        .collect();
    let contrarian: Vec<Vec<f64>> = truthful
        .iter()
        .map(|row| row.iter().map(|p| 1.0 - p).collect())
        .collect();
    let band = BandParams::log_sum_exp(fixture.b(), fixture.c(), eta);
    let mut cells = 0;
    let mut block_cells = 0;
    let mut max_gap: f64 = 0.0;
    let mut max_block_gap: f64 = 0.0;
    for profile in [&truthful, &contrarian] {
        for (i, forecaster) in fixture.forecasters.iter().enumerate() {
            let mut rows = profile.clone();
            rows[i] = truthful[i].clone();
            let reports = ReportMatrix::from_rows(rows)?;
            for (t, &p) in truthful[i].iter().enumerate() {
                let r = expected_utility_objective(&reports, i, t, &forecaster.belief, eta, seed)?
                    .maximize()?;
                max_gap = max_gap.max((r - p).abs());
                cells += 1;
                let (outcomes, _) = conditioning_panel(&forecaster.belief, t, seed)?;
                for cond in &outcomes {
                    let br = best_response_event(&reports, i, t, &forecaster.belief, cond, eta)?;
                    max_block_gap = max_block_gap.max((br.report - br.conditional_mean).abs());
                    block_cells += 1;
                }
            }
        }
    }
    let bound = band.mw_bound();
    let block_band = band.block_band();
    Ok(TruthfulnessRow {
        fixture: fixture.name.clone(),
        n,
        m,
        b: fixture.b(),
        c: fixture.c(),
        eta,
        cells,
        max_gap,
        bound,
        block_cells,
        max_block_gap,
        block_band,
        pass_band: max_gap <= bound + BAND_TOLERANCE,
        pass_block: max_block_gap <= block_band + BAND_TOLERANCE,
    })
}
