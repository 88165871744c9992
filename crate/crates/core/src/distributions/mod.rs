//! Joint distributions over `m` binary events with declared block structure.
//!
//! Every family is stored as a finite mixture over a hidden latent value of
//! products of independent parts. Each part is a small table of joint
//! patterns over its own events. This is enough to compute marginals,
//! probabilities of partial assignments, and conditional means exactly at
//! any `m`, without enumerating the full outcome space.

mod blocks;
mod certify;
mod families;
mod table;

pub use blocks::{BlockStructure, InfluencerSets};
pub use certify::{certify_block_correlation, Certificate, CertificationRoute};
pub use families::Family;
pub use table::{load_table, parse_table};

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{check_len, ArenaError, Result};
use crate::numeric::log_sum_exp;
use crate::types::OutcomeVector;

/// Default cap on `m` for anything that enumerates all `2^m` outcomes.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

/// Joint pattern table of one independent part.
#[derive(Debug, Clone)]
pub(crate) struct PartTable {
    /// Bit `k` of a pattern is the outcome of the part's `k`-th event.
    patterns: Vec<u64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PartTable {
    pub(crate) fn new(entries: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
        for (pattern, p) in entries {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(ArenaError::InvalidParameter(format!(
                    "pattern probability {p} is not a finite non-negative number"
                )));
            }
            *merged.entry(pattern).or_insert(0.0) += p;
        }
        merged.retain(|_, p| *p > 0.0);
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ArenaError::InvalidParameter(format!(
                "pattern probabilities sum to {total}, not 1"
            )));
        }
        let (patterns, probs): (Vec<u64>, Vec<f64>) =
            merged.into_iter().map(|(k, p)| (k, p / total)).unzip();
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            patterns,
            probs,
            cdf,
        })
    }

    /// Total probability of the patterns agreeing with `value` on the bits of `care`.
    pub(crate) fn prob_consistent(&self, care: u64, value: u64) -> f64 {
        self.patterns
            .iter()
            .zip(&self.probs)
            .filter(|(&pat, _)| pat & care == value)
            .map(|(_, &p)| p)
            .sum()
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.patterns
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
    }

    fn sample(&self, u: f64) -> u64 {
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.patterns[idx.min(self.patterns.len() - 1)]
    }
}

/// One point of an enumerated support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub outcome: OutcomeVector,
    pub prob: f64,
}

/// Query for `E[Y_target | assignment]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalQuery {
    target: usize,
    assignment: Vec<(usize, u8)>,
}

impl ConditionalQuery {
    pub fn new(target: usize, mut assignment: Vec<(usize, u8)>) -> Result<Self> {
        assignment.sort_unstable();
        assignment.dedup();
        if assignment.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(ArenaError::InvalidParameter(
                "assignment fixes an event to two values".into(),
            ));
        }
        if assignment.iter().any(|&(j, _)| j == target) {
            return Err(ArenaError::InvalidParameter(
                "the target event cannot be part of the conditioning assignment".into(),
            ));
        }
        if assignment.iter().any(|&(_, v)| v > 1) {
            return Err(ArenaError::InvalidParameter(
                "outcomes must be 0 or 1".into(),
            ));
        }
        Ok(Self { target, assignment })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn assignment(&self) -> &[(usize, u8)] {
        &self.assignment
    }
}

#[derive(Debug, Clone)]
pub struct EventDistribution {
    m: usize,
    family: Family,
    parts: Vec<Vec<usize>>,
    /// Event `t` is bit `locate[t].1` of part `locate[t].0`.
    locate: Vec<(usize, usize)>,
    latent_weights: Vec<f64>,
    latent_cdf: Vec<f64>,
    pool: Vec<PartTable>,
    /// `assign[h][k]` indexes the pool table used by part `k` under latent `h`.
    assign: Vec<Vec<usize>>,
    theta: Vec<f64>,
    blocks: BlockStructure,
    enumeration_cap: usize,
}

impl EventDistribution {
    /// Assembles a distribution from its mixture-of-products structure and
    /// declares `blocks` (checked against `m`, not certified here).
    pub(crate) fn from_structure(
        family: Family,
        m: usize,
        parts: Vec<Vec<usize>>,
        latent_weights: Vec<f64>,
        pool: Vec<PartTable>,
        assign: Vec<Vec<usize>>,
        blocks: BlockStructure,
    ) -> Result<Self> {
        let mut locate = vec![(usize::MAX, 0); m];
        for (k, part) in parts.iter().enumerate() {
            if part.len() > 64 {
                return Err(ArenaError::InvalidParameter(
                    "a correlated part may span at most 64 events".into(),
                ));
            }
            for (bit, &t) in part.iter().enumerate() {
                if t >= m || locate[t].0 != usize::MAX {
                    return Err(ArenaError::InvalidParameter(format!(
                        "parts must partition the {m} events (event {t} misplaced)"
                    )));
                }
                locate[t] = (k, bit);
            }
        }
        if let Some(t) = locate.iter().position(|l| l.0 == usize::MAX) {
            return Err(ArenaError::InvalidParameter(format!(
                "event {t} belongs to no part"
            )));
        }
        check_len("declared blocks", m, blocks.m())?;
        let total: f64 = latent_weights.iter().sum();
        if latent_weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(ArenaError::InvalidParameter(
                "latent weights must be positive and sum to 1".into(),
            ));
        }
        let latent_weights: Vec<f64> = latent_weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let latent_cdf = latent_weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let mut dist = Self {
            m,
            family,
            parts,
            locate,
            latent_weights,
            latent_cdf,
            pool,
            assign,
            theta: Vec::new(),
            blocks,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        };
        dist.theta = (0..m).map(|t| dist.marginal_of(t)).collect();
        Ok(dist)
    }

    fn marginal_of(&self, t: usize) -> f64 {
        let (k, bit) = self.locate[t];
        let mask = 1u64 << bit;
        self.latent_weights
            .iter()
            .enumerate()
            .map(|(h, w)| w * self.table(h, k).prob_consistent(mask, mask))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub(crate) fn table(&self, latent: usize, part: usize) -> &PartTable {
        &self.pool[self.assign[latent][part]]
    }

    pub(crate) fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub(crate) fn locate(&self, t: usize) -> (usize, usize) {
        self.locate[t]
    }

    pub(crate) fn latent_weights(&self) -> &[f64] {
        &self.latent_weights
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn enumeration_cap(&self) -> usize {
        self.enumeration_cap
    }

    pub fn with_enumeration_cap(mut self, cap: usize) -> Self {
        self.enumeration_cap = cap.min(64);
        self
    }

    /// Replaces the declared block structure after certifying it.
    ///
    /// When exact certification is out of reach the a-priori latent bound
    /// `max_h |E[Y_t | h] − θ_t|` is used instead; it dominates every
    /// conditional deviation.
    pub fn with_blocks(mut self, blocks: BlockStructure) -> Result<Self> {
        check_len("declared blocks", self.m, blocks.m())?;
        let certified = match certify_block_correlation(&self, &blocks) {
            Ok(cert) => cert.overall,
            Err(ArenaError::EnumerationCap { .. }) => self.latent_deviation_bound(),
            Err(e) => return Err(e),
        };
        if certified > blocks.c() + 1e-12 {
            return Err(ArenaError::InvalidParameter(format!(
                "declared c = {} is below the certified slack {certified}",
                blocks.c()
            )));
        }
        self.blocks = blocks;
        Ok(self)
    }

    /// Same blocks with a looser declared `(b, c)`, e.g. to share bounds
    /// across a panel of forecasters.
    pub fn with_declared_bounds(self, b: usize, c: f64) -> Result<Self> {
        let blocks = self.blocks.with_bounds(b, c)?;
        self.with_blocks(blocks)
    }

    pub(crate) fn latent_deviation_bound(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.m {
            let (k, bit) = self.locate[t];
            let mask = 1u64 << bit;
            for h in 0..self.latent_weights.len() {
                let mu = self.table(h, k).prob_consistent(mask, mask);
                worst = worst.max((mu - self.theta[t]).abs());
            }
        }
        worst
    }

    /// The marginal vector `θ`.
    pub fn marginals(&self) -> &[f64] {
        &self.theta
    }

    /// `Σ_t θ_t`, the exact mean of the outcome sum.
    pub fn expected_sum(&self) -> f64 {
        self.theta.iter().sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> OutcomeVector {
        let mut bits = vec![0u8; self.m];
        self.sample_into(rng, &mut bits);
        OutcomeVector::from_bits_unchecked(bits)
    }

    /// Draws into a caller-owned buffer of length `m`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        assert_eq!(out.len(), self.m);
        let h = if self.latent_weights.len() == 1 {
            0
        } else {
            let u: f64 = rng.random();
            self.latent_cdf
                .partition_point(|&c| c <= u)
                .min(self.latent_weights.len() - 1)
        };
        for (k, part) in self.parts.iter().enumerate() {
            let u: f64 = rng.random();
            let pattern = self.table(h, k).sample(u);
            for (bit, &t) in part.iter().enumerate() {
                out[t] = ((pattern >> bit) & 1) as u8;
            }
        }
    }

    /// `ln Pr[Y_j = v for every (j, v) in assignment]`; `-inf` for impossible events.
    pub fn log_probability(&self, assignment: &[(usize, u8)]) -> Result<f64> {
        let mut constraints: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
        for &(t, v) in assignment {
            if t >= self.m || v > 1 {
                return Err(ArenaError::InvalidParameter(format!(
                    "assignment ({t}, {v}) is outside the event space"
                )));
            }
            let (k, bit) = self.locate[t];
            let entry = constraints.entry(k).or_insert((0, 0));
            let mask = 1u64 << bit;
            if entry.0 & mask != 0 && (entry.1 & mask != 0) != (v == 1) {
                return Ok(f64::NEG_INFINITY);
            }
            entry.0 |= mask;
            if v == 1 {
                entry.1 |= mask;
            }
        }
        let per_latent: Vec<f64> = self
            .latent_weights
            .iter()
            .enumerate()
            .map(|(h, w)| {
                let mut lp = w.ln();
                for (&k, &(care, value)) in &constraints {
                    lp += self.table(h, k).prob_consistent(care, value).ln();
                    if lp == f64::NEG_INFINITY {
                        break;
                    }
                }
                lp
            })
            .collect();
        Ok(log_sum_exp(&per_latent))
    }

    /// `Pr[target assignment | given]`.
    pub fn conditional_probability(
        &self,
        target: &[(usize, u8)],
        given: &[(usize, u8)],
    ) -> Result<f64> {
        let denom = self.log_probability(given)?;
        if denom == f64::NEG_INFINITY {
            return Err(ArenaError::ZeroProbabilityConditioning);
        }
        let joint: Vec<(usize, u8)> = given.iter().chain(target).copied().collect();
        let num = self.log_probability(&joint)?;
        Ok((num - denom).exp().clamp(0.0, 1.0))
    }

    /// `E[Y_t | assignment]` exactly.
    pub fn conditional_mean(&self, query: &ConditionalQuery) -> Result<f64> {
        if query.target >= self.m {
            return Err(ArenaError::InvalidParameter(format!(
                "target event {} is outside [0, {})",
                query.target, self.m
            )));
        }
        if query.assignment.is_empty() {
            return Ok(self.theta[query.target]);
        }
        self.conditional_probability(&[(query.target, 1)], &query.assignment)
    }

    /// Full support with probabilities, sorted by outcome bitmask.
    pub fn enumerate(&self) -> Result<Vec<SupportPoint>> {
        if self.m > self.enumeration_cap {
            return Err(ArenaError::EnumerationCap {
                what: "m",
                actual: self.m,
                cap: self.enumeration_cap,
            });
        }
        let mut support: BTreeMap<u64, f64> = BTreeMap::new();
        for (h, &w) in self.latent_weights.iter().enumerate() {
            let mut partial: Vec<(u64, f64)> = vec![(0, w)];
            for (k, part) in self.parts.iter().enumerate() {
                let table = self.table(h, k);
                let mut next = Vec::with_capacity(partial.len() * table.patterns.len());
                for &(mask, p) in &partial {
                    for (pattern, q) in table.iter() {
                        let mut full = mask;
                        for (bit, &t) in part.iter().enumerate() {
                            if (pattern >> bit) & 1 == 1 {
                                full |= 1u64 << t;
                            }
                        }
                        next.push((full, p * q));
                    }
                }
                partial = next;
            }
            for (mask, p) in partial {
                *support.entry(mask).or_insert(0.0) += p;
            }
        }
        Ok(support
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(mask, prob)| SupportPoint {
                outcome: OutcomeVector::from_mask(mask, self.m),
                prob,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests;
