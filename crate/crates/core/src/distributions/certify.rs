use std::collections::BTreeMap;

use serde::Serialize;

use super::{BlockStructure, EventDistribution, PartTable};
use crate::error::{check_len, ArenaError, Result};
use crate::numeric::sigmoid;

/// How a certificate was computed. Every route is exact up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificationRoute {
    /// One latent value: only the event's own part carries information.
    SingleLatent,
    /// Two latent values: the conditional mean is monotone in the latent
    /// log-odds, so only its extremes matter.
    TwoLatent,
    /// Full enumeration of the support.
    Enumerated,
}

/// Largest deviation `|θ_t − E[Y_t | y outside B_t]|` over realizable
/// assignments outside each block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub per_event: Vec<f64>,
    pub overall: f64,
    pub route: CertificationRoute,
}

/// Certifies the smallest `c` for which `blocks` is a valid block structure
/// of `dist`. Fails with `EnumerationCap` when more than two latent values
/// are present and `m` exceeds the distribution's enumeration cap.
pub fn certify_block_correlation(
    dist: &EventDistribution,
    blocks: &BlockStructure,
) -> Result<Certificate> {
    check_len("block structure", dist.m(), blocks.m())?;
    let (per_event, route) = match dist.latent_weights().len() {
        1 => (
            single_latent(dist, blocks),
            CertificationRoute::SingleLatent,
        ),
        2 => (two_latent(dist, blocks), CertificationRoute::TwoLatent),
        _ => (enumerated(dist, blocks)?, CertificationRoute::Enumerated),
    };
    let overall = per_event.iter().copied().fold(0.0, f64::max);
    Ok(Certificate {
        per_event,
        overall,
        route,
    })
}

/// Bits of part `k` lying outside `block`.
fn outside_mask(dist: &EventDistribution, k: usize, block: &[usize]) -> u64 {
    dist.parts()[k]
        .iter()
        .enumerate()
        .filter(|(_, t)| block.binary_search(t).is_err())
        .fold(0u64, |acc, (bit, _)| acc | (1u64 << bit))
}

fn full_mask(len: usize) -> u64 {
    if len == 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// `value -> (Pr[restriction], Pr[restriction and target bit set])`.
fn restrict(table: &PartTable, care: u64, target_bit: Option<usize>) -> BTreeMap<u64, (f64, f64)> {
    let mut out: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for (pattern, p) in table.iter() {
        let e = out.entry(pattern & care).or_insert((0.0, 0.0));
        e.0 += p;
        if let Some(bit) = target_bit {
            if (pattern >> bit) & 1 == 1 {
                e.1 += p;
            }
        }
    }
    out
}

fn single_latent(dist: &EventDistribution, blocks: &BlockStructure) -> Vec<f64> {
    let theta = dist.marginals();
    (0..dist.m())
        .map(|t| {
            let (k, bit) = dist.locate(t);
            let care = outside_mask(dist, k, blocks.block(t));
            restrict(dist.table(0, k), care, Some(bit))
                .values()
                .filter(|(b, _)| *b > 0.0)
                .map(|(b, a)| (theta[t] - a / b).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Extended-real sum that tracks infinite terms by count.
#[derive(Debug, Clone, Copy, Default)]
struct ExtSum {
    finite: f64,
    pos_inf: usize,
    neg_inf: usize,
}

impl ExtSum {
    fn add(&mut self, x: f64, sign: f64) {
        if x == f64::INFINITY {
            if sign > 0.0 {
                self.pos_inf += 1;
            } else {
                self.pos_inf -= 1;
            }
        } else if x == f64::NEG_INFINITY {
            if sign > 0.0 {
                self.neg_inf += 1;
            } else {
                self.neg_inf -= 1;
            }
        } else {
            self.finite += sign * x;
        }
    }

    fn value(&self) -> f64 {
        match (self.pos_inf > 0, self.neg_inf > 0) {
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            (false, false) => self.finite,
            (true, true) => f64::NAN,
        }
    }
}

/// Range of `ln Pr_1[r] − ln Pr_0[r]` over restrictions `r` realizable under
/// either latent value. The max is never `-inf` and the min never `+inf`.
fn log_ratio_range(dist: &EventDistribution, k: usize, care: u64) -> (f64, f64) {
    let r0 = restrict(dist.table(0, k), care, None);
    let r1 = restrict(dist.table(1, k), care, None);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut keys: Vec<u64> = r0.keys().chain(r1.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for key in keys {
        let p0 = r0.get(&key).map_or(0.0, |e| e.0);
        let p1 = r1.get(&key).map_or(0.0, |e| e.0);
        if p0 <= 0.0 && p1 <= 0.0 {
            continue;
        }
        let d = p1.ln() - p0.ln();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

fn two_latent(dist: &EventDistribution, blocks: &BlockStructure) -> Vec<f64> {
    let theta = dist.marginals();
    let w = dist.latent_weights();
    let n_parts = dist.parts().len();
    let untouched: Vec<(f64, f64)> = (0..n_parts)
        .map(|k| log_ratio_range(dist, k, full_mask(dist.parts()[k].len())))
        .collect();
    let mut lo_total = ExtSum::default();
    let mut hi_total = ExtSum::default();
    for &(lo, hi) in &untouched {
        lo_total.add(lo, 1.0);
        hi_total.add(hi, 1.0);
    }
    (0..dist.m())
        .map(|t| {
            let (kt, bit) = dist.locate(t);
            let block = blocks.block(t);
            let mut touched: Vec<usize> = block.iter().map(|&j| dist.locate(j).0).collect();
            touched.push(kt);
            touched.sort_unstable();
            touched.dedup();
            let mut lo_sum = lo_total;
            let mut hi_sum = hi_total;
            for &k in &touched {
                lo_sum.add(untouched[k].0, -1.0);
                hi_sum.add(untouched[k].1, -1.0);
                if k != kt {
                    let (lo, hi) = log_ratio_range(dist, k, outside_mask(dist, k, block));
                    lo_sum.add(lo, 1.0);
                    hi_sum.add(hi, 1.0);
                }
            }
            let (u_lo, u_hi) = (lo_sum.value(), hi_sum.value());
            let care = outside_mask(dist, kt, block);
            let own0 = restrict(dist.table(0, kt), care, Some(bit));
            let own1 = restrict(dist.table(1, kt), care, Some(bit));
            let mut keys: Vec<u64> = own0.keys().chain(own1.keys()).copied().collect();
            keys.sort_unstable();
            keys.dedup();
            let mut worst: f64 = 0.0;
            for key in keys {
                let (b0, a0) = own0.get(&key).copied().unwrap_or((0.0, 0.0));
                let (b1, a1) = own1.get(&key).copied().unwrap_or((0.0, 0.0));
                let candidates: Vec<f64> = match (b0 > 0.0, b1 > 0.0) {
                    (false, false) => continue,
                    (false, true) => vec![a1 / b1],
                    (true, false) => vec![a0 / b0],
                    (true, true) => {
                        let (mu0, mu1) = (a0 / b0, a1 / b1);
                        let offset = (w[1] * b1).ln() - (w[0] * b0).ln();
                        [u_lo, u_hi]
                            .iter()
                            .map(|&u| mu0 + sigmoid(u + offset) * (mu1 - mu0))
                            .collect()
                    }
                };
                for mean in candidates {
                    worst = worst.max((theta[t] - mean).abs());
                }
            }
            worst
        })
        .collect()
}

fn enumerated(dist: &EventDistribution, blocks: &BlockStructure) -> Result<Vec<f64>> {
    if dist.m() > dist.enumeration_cap() {
        return Err(ArenaError::EnumerationCap {
            what: "m (certification with more than two latent values)",
            actual: dist.m(),
            cap: dist.enumeration_cap(),
        });
    }
    let support = dist.enumerate()?;
    let masks: Vec<(u64, f64)> = support
        .iter()
        .map(|p| (p.outcome.to_mask(), p.prob))
        .collect();
    let theta = dist.marginals();
    Ok((0..dist.m())
        .map(|t| {
            let outside = blocks
                .complement(t)
                .iter()
                .fold(0u64, |acc, &j| acc | (1u64 << j));
            let mut groups: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for &(mask, p) in &masks {
                let e = groups.entry(mask & outside).or_insert((0.0, 0.0));
                e.0 += p;
                if (mask >> t) & 1 == 1 {
                    e.1 += p;
                }
            }
            groups
                .values()
                .filter(|(b, _)| *b > 0.0)
                .map(|(b, a)| (theta[t] - a / b).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}
