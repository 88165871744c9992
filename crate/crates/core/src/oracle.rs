//! Brute-force reference computations on small instances.
//!
//! Every outcome's probability is rebuilt from the family parameters in exact
//! rational arithmetic (floating-point parameters convert exactly). Nothing
//! here calls the fast paths of the other modules.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::distributions::{BlockStructure, ConditionalQuery, EventDistribution, Family};
use crate::error::{check_len, ArenaError, Result};
use crate::types::{BeliefMatrix, ReportMatrix};

pub const ORACLE_MAX_M: usize = 16;
pub const ORACLE_MAX_N: usize = 8;

/// All outcomes with their exact probabilities; bit `t` of a mask is event `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedSupport {
    pub m: usize,
    pub points: Vec<(u64, BigRational)>,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite parameter")
}

fn half() -> BigRational {
    BigRational::new(BigInt::from(1), BigInt::from(2))
}

fn bit(mask: u64, t: usize) -> bool {
    (mask >> t) & 1 == 1
}

fn bernoulli(p: &BigRational, on: bool) -> BigRational {
    if on {
        p.clone()
    } else {
        BigRational::one() - p
    }
}

fn check_m(m: usize) -> Result<()> {
    if m > ORACLE_MAX_M {
        return Err(ArenaError::EnumerationCap {
            what: "m (oracle)",
            actual: m,
            cap: ORACLE_MAX_M,
        });
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n > ORACLE_MAX_N {
        return Err(ArenaError::EnumerationCap {
            what: "n (oracle)",
            actual: n,
            cap: ORACLE_MAX_N,
        });
    }
    Ok(())
}

fn clip(x: BigRational) -> BigRational {
    if x < BigRational::zero() {
        BigRational::zero()
    } else if x > BigRational::one() {
        BigRational::one()
    } else {
        x
    }
}

/// Probability of `mask` straight from the family definition.
fn outcome_probability(family: &Family, m: usize, mask: u64) -> BigRational {
    match family {
        Family::Independent { theta } => (0..m)
            .map(|t| bernoulli(&rat(theta[t]), bit(mask, t)))
            .product(),
        Family::DisjointBlocks {
            partition,
            marginals,
        } => partition
            .iter()
            .zip(marginals)
            .map(|(block, &p)| {
                let ones = block.iter().filter(|&&t| bit(mask, t)).count();
                if ones == block.len() {
                    rat(p)
                } else if ones == 0 {
                    BigRational::one() - rat(p)
                } else {
                    BigRational::zero()
                }
            })
            .product(),
        Family::RandomBias { biases, weights } => {
            let total: BigRational = weights.iter().map(|&w| rat(w)).sum();
            biases
                .iter()
                .zip(weights)
                .map(|(&q, &w)| {
                    let q = rat(q);
                    rat(w) / &total
                        * (0..m)
                            .map(|t| bernoulli(&q, bit(mask, t)))
                            .product::<BigRational>()
                })
                .sum()
        }
        Family::HiddenCoinGroups { b, c } => {
            let c = rat(*c);
            let mut total = BigRational::zero();
            for heads in [true, false] {
                let up = if heads { half() + &c } else { half() - &c };
                let mut p = half();
                for g in 0..m / b {
                    let ones = (g * b..(g + 1) * b).filter(|&t| bit(mask, t)).count();
                    p *= if ones == *b {
                        up.clone()
                    } else if ones == 0 {
                        BigRational::one() - &up
                    } else {
                        BigRational::zero()
                    };
                }
                total += p;
            }
            total
        }
        Family::Election {
            state_sizes,
            base_marginals,
            shift,
            coupling,
        } => {
            let kappa = rat(*coupling);
            let mut total = BigRational::zero();
            for s in [rat(*shift), -rat(*shift)] {
                let mut p = half();
                let mut start = 0;
                for &size in state_sizes {
                    let th: Vec<BigRational> = (start..start + size)
                        .map(|t| clip(rat(base_marginals[t]) + &s))
                        .collect();
                    let (mut lo, mut hi) = (BigRational::zero(), BigRational::one());
                    let mut indep = BigRational::one();
                    for (k, th) in th.iter().enumerate() {
                        let on = bit(mask, start + k);
                        if on {
                            hi = hi.min(th.clone());
                        } else {
                            lo = lo.max(th.clone());
                        }
                        indep *= bernoulli(th, on);
                    }
                    let comonotone = if hi > lo {
                        hi - lo
                    } else {
                        BigRational::zero()
                    };
                    p *= &kappa * comonotone + (BigRational::one() - &kappa) * indep;
                    start += size;
                }
                total += p;
            }
            total
        }
        Family::ExplicitTable { table } => table
            .iter()
            .filter(|&&(k, _)| k == mask)
            .map(|&(_, p)| rat(p))
            .sum(),
    }
}

/// Exact support of `dist`, rebuilt from its family parameters.
pub fn enumerate_exact(dist: &EventDistribution) -> Result<EnumeratedSupport> {
    let m = dist.m();
    check_m(m)?;
    let mut points = Vec::new();
    let mut total = BigRational::zero();
    for mask in 0u64..(1u64 << m) {
        let p = outcome_probability(dist.family(), m, mask);
        if p.is_positive() {
            total += &p;
            points.push((mask, p));
        }
    }
    if let Family::ExplicitTable { .. } = dist.family() {
        for (_, p) in &mut points {
            *p = &*p / &total;
        }
    }
    Ok(EnumeratedSupport { m, points })
}

impl EnumeratedSupport {
    pub fn total(&self) -> BigRational {
        self.points.iter().map(|(_, p)| p.clone()).sum()
    }

    pub fn marginals(&self) -> Vec<BigRational> {
        (0..self.m)
            .map(|t| {
                self.points
                    .iter()
                    .filter(|(k, _)| bit(*k, t))
                    .map(|(_, p)| p.clone())
                    .sum()
            })
            .collect()
    }

    fn matches(mask: u64, assignment: &[(usize, u8)]) -> bool {
        assignment.iter().all(|&(j, v)| bit(mask, j) == (v == 1))
    }

    pub fn conditional_mean(&self, query: &ConditionalQuery) -> Result<BigRational> {
        let (mut num, mut den) = (BigRational::zero(), BigRational::zero());
        for (k, p) in &self.points {
            if Self::matches(*k, query.assignment()) {
                den += p;
                if bit(*k, query.target()) {
                    num += p;
                }
            }
        }
        if den.is_zero() {
            return Err(ArenaError::ZeroProbabilityConditioning);
        }
        Ok(num / den)
    }

    /// Exact `max_t max_{y outside B_t} |θ_t − E[Y_t | y]|`.
    pub fn block_certificate(&self, blocks: &BlockStructure) -> BigRational {
        let theta = self.marginals();
        let mut worst = BigRational::zero();
        for (t, th) in theta.iter().enumerate() {
            let outside = blocks.complement(t);
            let mut seen = std::collections::BTreeSet::new();
            for (k, _) in &self.points {
                let assignment: Vec<(usize, u8)> =
                    outside.iter().map(|&j| (j, bit(*k, j) as u8)).collect();
                if !seen.insert(assignment.clone()) {
                    continue;
                }
                let q = ConditionalQuery::new(t, assignment).expect("target is inside its block");
                let mean = self.conditional_mean(&q).expect("assignment is realizable");
                let dev = (th - mean).abs();
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    }
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `E[Y_t | assignment]` from the enumerated support.
pub fn exact_conditional_mean(dist: &EventDistribution, query: &ConditionalQuery) -> Result<f64> {
    Ok(to_f64(&enumerate_exact(dist)?.conditional_mean(query)?))
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn naive_selection(reports: &[Vec<f64>], mask: u64, eta: f64) -> Vec<f64> {
    let q: Vec<f64> = reports
        .iter()
        .map(|row| {
            compensated_sum(row.iter().enumerate().map(|(t, &r)| {
                let y = if bit(mask, t) { 1.0 } else { 0.0 };
                1.0 - (r - y) * (r - y)
            }))
        })
        .collect();
    let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q.iter().map(|v| (eta * (v - top)).exp()).collect();
    let z = compensated_sum(w.iter().copied());
    w.iter().map(|v| v / z).collect()
}

/// `Σ_y Pr[y] · π(R, y)` under `dist`.
pub fn exact_winner_distribution(
    reports: &ReportMatrix,
    dist: &EventDistribution,
    eta: f64,
) -> Result<Vec<f64>> {
    check_len("report columns", dist.m(), reports.m())?;
    check_n(reports.n())?;
    let support = enumerate_exact(dist)?;
    let rows = reports.to_rows();
    let per_outcome: Vec<(f64, Vec<f64>)> = support
        .points
        .iter()
        .map(|(k, p)| (to_f64(p), naive_selection(&rows, *k, eta)))
        .collect();
    Ok((0..reports.n())
        .map(|i| compensated_sum(per_outcome.iter().map(|(p, pi)| p * pi[i])))
        .collect())
}

/// Forecaster `i`'s expected win probability under its own belief when it
/// reports `row` and everyone else reports as in `reports`.
pub fn exact_expected_utility(
    i: usize,
    row: &[f64],
    reports: &ReportMatrix,
    belief: &EventDistribution,
    eta: f64,
) -> Result<f64> {
    check_len("candidate report", reports.m(), row.len())?;
    let mut rows = reports.to_rows();
    rows[i] = row.to_vec();
    let swapped = ReportMatrix::from_rows(rows)?;
    Ok(exact_winner_distribution(&swapped, belief, eta)?[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleAccuracy {
    pub accuracy: Vec<f64>,
    pub c_theta: f64,
    /// `E[Σ_t S(p_it, Y_t)]` for belief marginals.
    pub belief_scores: Vec<f64>,
    /// `E[Σ_t S(r_it, Y_t)]` for reports.
    pub report_scores: Vec<f64>,
}

/// Exact accuracies and expected score totals.
pub fn exact_accuracy_and_scores(
    beliefs: &BeliefMatrix,
    reports: &ReportMatrix,
    dist: &EventDistribution,
) -> Result<OracleAccuracy> {
    check_len("belief columns", dist.m(), beliefs.m())?;
    check_len("report columns", dist.m(), reports.m())?;
    check_len("report rows", beliefs.n(), reports.n())?;
    check_n(beliefs.n())?;
    let m = dist.m();
    let support = enumerate_exact(dist)?;
    let theta = support.marginals();
    let m_rat = BigRational::from_integer(BigInt::from(m));
    let c_theta: BigRational = theta
        .iter()
        .map(|th| th * (BigRational::one() - th))
        .sum::<BigRational>()
        / &m_rat;
    // E[Σ_t S(r_t, Y_t)] = Σ_t (θ_t S(r_t, 1) + (1 − θ_t) S(r_t, 0)) with exact θ
    let expected_scores = |matrix: &crate::types::ProbMatrix| -> Vec<f64> {
        matrix
            .rows()
            .map(|row| {
                let total: BigRational = row
                    .iter()
                    .zip(&theta)
                    .map(|(&r, th)| {
                        let r = rat(r);
                        let miss = BigRational::one() - &r;
                        let hit = BigRational::one() - &miss * &miss;
                        let zero = BigRational::one() - &r * &r;
                        th * hit + (BigRational::one() - th) * zero
                    })
                    .sum();
                to_f64(&total)
            })
            .collect()
    };
    let accuracy = beliefs
        .rows()
        .map(|row| {
            let mse: BigRational = row
                .iter()
                .zip(&theta)
                .map(|(&p, th)| {
                    let d = rat(p) - th;
                    &d * &d
                })
                .sum::<BigRational>()
                / &m_rat;
            to_f64(&(BigRational::one() - mse))
        })
        .collect();
    Ok(OracleAccuracy {
        accuracy,
        c_theta: to_f64(&c_theta),
        belief_scores: expected_scores(beliefs),
        report_scores: expected_scores(reports),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_bias_conditional_is_exactly_41_over_56() {
        let d = EventDistribution::random_bias(4, &[0.25, 0.75], &[0.5, 0.5]).unwrap();
        let s = enumerate_exact(&d).unwrap();
        assert_eq!(s.total(), BigRational::one());
        let q = ConditionalQuery::new(3, vec![(0, 1), (1, 1), (2, 1)]).unwrap();
        assert_eq!(
            s.conditional_mean(&q).unwrap(),
            BigRational::new(BigInt::from(41), BigInt::from(56))
        );
        assert_eq!(
            s.block_certificate(d.blocks()),
            BigRational::new(BigInt::from(13), BigInt::from(56))
        );
    }

    #[test]
    fn lone_forecaster_always_wins() {
        let d = EventDistribution::independent(&[0.3, 0.8]).unwrap();
        let r = ReportMatrix::from_rows(vec![vec![0.1, 0.9]]).unwrap();
        assert_eq!(
            exact_expected_utility(0, &[0.5, 0.5], &r, &d, 0.2).unwrap(),
            1.0
        );
    }

    #[test]
    fn symmetric_reports_split_evenly() {
        let d = EventDistribution::independent(&[0.3, 0.8]).unwrap();
        let r = ReportMatrix::filled(2, 2, 0.4).unwrap();
        let u = exact_expected_utility(0, &[0.4, 0.4], &r, &d, 0.2).unwrap();
        assert!((u - 0.5).abs() < 1e-15);
    }

    #[test]
    fn truthful_beliefs_have_full_accuracy() {
        let d = EventDistribution::hidden_coin_groups(4, 2, 0.2).unwrap();
        let theta = d.marginals().to_vec();
        let beliefs = BeliefMatrix::from_rows(vec![theta.clone()]).unwrap();
        let out = exact_accuracy_and_scores(&beliefs, &beliefs, &d).unwrap();
        assert_eq!(out.accuracy[0], 1.0);
        assert!((out.belief_scores[0] - 4.0 * (1.0 - out.c_theta)).abs() < 1e-15);
    }

    #[test]
    fn caps_are_enforced() {
        let d = EventDistribution::independent(&[0.5; 17]).unwrap();
        assert!(matches!(
            enumerate_exact(&d),
            Err(ArenaError::EnumerationCap { .. })
        ));
        let d = EventDistribution::independent(&[0.5]).unwrap();
        let r = ReportMatrix::filled(9, 1, 0.5).unwrap();
        assert!(matches!(
            exact_winner_distribution(&r, &d, 0.1),
            Err(ArenaError::EnumerationCap { .. })
        ));
    }
}
