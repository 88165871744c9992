//! Quadratic (Brier-type) scoring and forecaster accuracy.
//!
//! With `S(x, y) = 1 − (x − y)²`, a forecaster's accuracy
//! `a_i = 1 − (1/m) Σ_t (p_it − θ_t)²` equals the expected mean score of its
//! belief marginals plus `C_θ = (1/m) Σ_t θ_t (1 − θ_t)`.

use crate::error::{check_len, check_unit, Result};
use crate::types::{BeliefMatrix, OutcomeVector, ReportMatrix};

/// `S(r, y) = 1 − (r − y)²` for `r ∈ [0, 1]`, `y ∈ {0, 1}`.
pub fn quadratic_score(r: f64, y: u8) -> Result<f64> {
    check_unit("report", r)?;
    if y > 1 {
        return Err(crate::ArenaError::Domain {
            what: "outcome",
            value: y as f64,
            domain: "{0, 1}",
        });
    }
    Ok(score(r, y))
}

#[inline]
pub(crate) fn score(r: f64, y: u8) -> f64 {
    let d = r - y as f64;
    1.0 - d * d
}

/// Per-forecaster score totals `q_i = Σ_t S(r_it, y_t)`, each in `[0, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest total, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.0)
    }
}

pub(crate) fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn score_totals(reports: &ReportMatrix, y: &OutcomeVector) -> Result<ScoreVector> {
    check_len("outcome vector", reports.m(), y.len())?;
    Ok(score_totals_unchecked(reports, y.as_slice()))
}

pub(crate) fn score_totals_unchecked(reports: &ReportMatrix, y: &[u8]) -> ScoreVector {
    ScoreVector(
        reports
            .rows()
            .map(|row| row.iter().zip(y).map(|(&r, &yt)| score(r, yt)).sum())
            .collect(),
    )
}

/// Exact expectation of each `q_i` given the event marginals:
/// `E[q_i] = Σ_t (1 − r_it² − θ_t + 2 r_it θ_t)`.
pub fn expected_score_totals(reports: &ReportMatrix, theta: &[f64]) -> Result<Vec<f64>> {
    check_len("marginal vector", reports.m(), theta.len())?;
    Ok(reports
        .rows()
        .map(|row| {
            row.iter()
                .zip(theta)
                .map(|(&r, &th)| 1.0 - r * r - th + 2.0 * r * th)
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyProfile {
    pub accuracy: Vec<f64>,
    pub c_theta: f64,
}

impl AccuracyProfile {
    pub fn best(&self) -> f64 {
        self.accuracy
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Forecaster `j` is ε-optimal when `a_j + ε ≥ max_i a_i`.
    pub fn is_eps_optimal(&self, j: usize, eps: f64) -> bool {
        self.accuracy[j] + eps >= self.best()
    }
}

pub fn c_theta(theta: &[f64]) -> f64 {
    if theta.is_empty() {
        return 0.0;
    }
    theta.iter().map(|&th| th * (1.0 - th)).sum::<f64>() / theta.len() as f64
}

pub fn accuracy_profile(beliefs: &BeliefMatrix, theta: &[f64]) -> Result<AccuracyProfile> {
    check_len("marginal vector", beliefs.m(), theta.len())?;
    for &th in theta {
        check_unit("marginal", th)?;
    }
    Ok(AccuracyProfile {
        accuracy: mean_squared_accuracy(beliefs, theta),
        c_theta: c_theta(theta),
    })
}

/// Diagnostic only: the accuracy formula applied to submitted reports rather
/// than beliefs. Selection quality is always judged on beliefs.
pub fn report_accuracy(reports: &ReportMatrix, theta: &[f64]) -> Result<Vec<f64>> {
    check_len("marginal vector", reports.m(), theta.len())?;
    Ok(mean_squared_accuracy(reports, theta))
}

fn mean_squared_accuracy(matrix: &crate::types::ProbMatrix, theta: &[f64]) -> Vec<f64> {
    let m = theta.len().max(1) as f64;
    matrix
        .rows()
        .map(|row| {
            1.0 - row
                .iter()
                .zip(theta)
                .map(|(&p, &th)| (p - th) * (p - th))
                .sum::<f64>()
                / m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_examples() {
        assert_eq!(quadratic_score(1.0, 1).unwrap(), 1.0);
        assert_eq!(quadratic_score(0.0, 1).unwrap(), 0.0);
        assert_eq!(quadratic_score(0.5, 1).unwrap(), 0.75);
        assert!(quadratic_score(1.5, 1).is_err());
        assert!(quadratic_score(-0.1, 0).is_err());
        assert!(quadratic_score(0.5, 2).is_err());
    }

    #[test]
    fn totals_examples() {
        let r = ReportMatrix::from_rows(vec![vec![1.0, 1.0]]).unwrap();
        let y = OutcomeVector::new(vec![1, 1]).unwrap();
        assert_eq!(score_totals(&r, &y).unwrap().0, vec![2.0]);

        let r = ReportMatrix::filled(2, 2, 0.5).unwrap();
        for mask in 0..4 {
            let y = OutcomeVector::from_mask(mask, 2);
            assert_eq!(score_totals(&r, &y).unwrap().0, vec![1.5, 1.5]);
        }
        let short = OutcomeVector::new(vec![1]).unwrap();
        assert!(score_totals(&r, &short).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let p = BeliefMatrix::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        let a = accuracy_profile(&p, &[0.5, 0.5]).unwrap();
        assert_eq!(a.accuracy, vec![1.0]);
        assert_eq!(a.c_theta, 0.25);

        let p = BeliefMatrix::from_rows(vec![vec![0.0, 1.0]]).unwrap();
        let a = accuracy_profile(&p, &[1.0, 0.0]).unwrap();
        assert_eq!(a.accuracy, vec![0.0]);
        assert_eq!(a.c_theta, 0.0);

        assert!(accuracy_profile(&p, &[0.5]).is_err());
        assert!(accuracy_profile(&p, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn eps_optimality() {
        let a = AccuracyProfile {
            accuracy: vec![0.9, 0.75, 0.6],
            c_theta: 0.2,
        };
        assert!(a.is_eps_optimal(0, 0.0));
        assert!(a.is_eps_optimal(1, 0.2));
        assert!(!a.is_eps_optimal(2, 0.2));
    }

    proptest! {
        #[test]
        fn score_is_two_lipschitz(r in 0.0f64..=1.0, s in 0.0f64..=1.0, y in 0u8..=1) {
            let d = (quadratic_score(r, y).unwrap() - quadratic_score(s, y).unwrap()).abs();
            prop_assert!(d <= 2.0 * (r - s).abs() + 1e-15);
        }

        #[test]
        fn totals_are_permutation_equivariant(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 4), 2..6),
            mask in 0u64..16,
            shift in 0usize..6,
        ) {
            let n = rows.len();
            let y = OutcomeVector::from_mask(mask, 4);
            let q = score_totals(&ReportMatrix::from_rows(rows.clone()).unwrap(), &y).unwrap();
            let mut rotated = rows.clone();
            rotated.rotate_left(shift % n);
            let qr = score_totals(&ReportMatrix::from_rows(rotated).unwrap(), &y).unwrap();
            for i in 0..n {
                prop_assert_eq!(qr.0[i], q.0[(i + shift) % n]);
            }
            for &qi in &q.0 {
                prop_assert!((0.0..=4.0).contains(&qi));
            }
        }
    }
}
