//! Outcome vectors and probability matrices shared by every module.

use crate::error::{check_len, check_unit, ArenaError, Result};

/// A realized vector of binary event outcomes `y ∈ {0,1}^m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeVector(Vec<u8>);

impl OutcomeVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(ArenaError::Domain {
                what: "outcome",
                value: bad as f64,
                domain: "{0, 1}",
            });
        }
        Ok(Self(bits))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0; m])
    }

    /// Bit `t` of `mask` becomes outcome `t`.
    pub fn from_mask(mask: u64, m: usize) -> Self {
        assert!(m <= 64, "mask outcomes support at most 64 events");
        Self((0..m).map(|t| ((mask >> t) & 1) as u8).collect())
    }

    pub fn to_mask(&self) -> u64 {
        assert!(
            self.0.len() <= 64,
            "mask outcomes support at most 64 events"
        );
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (t, &b)| acc | ((b as u64) << t))
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<u8>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, t: usize) -> u8 {
        self.0[t]
    }

    pub fn set(&mut self, t: usize, value: u8) {
        assert!(value <= 1);
        self.0[t] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn sum(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }
}

/// An `n × m` row-major matrix with every entry in `[0, 1]`.
///
/// Row `i` is forecaster `i`'s vector over the `m` events. The same type
/// carries submitted reports and belief marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

pub type ReportMatrix = ProbMatrix;
pub type BeliefMatrix = ProbMatrix;

impl ProbMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(ArenaError::InvalidParameter(
                "a probability matrix needs at least one row".into(),
            ));
        }
        let m = rows[0].len();
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            check_len("matrix row", m, row.len())?;
            for &v in &row {
                check_unit("matrix entry", v)?;
            }
            data.extend(row);
        }
        Ok(Self { n, m, data })
    }

    pub fn filled(n: usize, m: usize, value: f64) -> Result<Self> {
        check_unit("matrix entry", value)?;
        Ok(Self {
            n,
            m,
            data: vec![value; n * m],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.data[i * self.m + t]
    }

    pub fn set(&mut self, i: usize, t: usize, value: f64) -> Result<()> {
        check_unit("matrix entry", value)?;
        self.data[i * self.m + t] = value;
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) -> Result<()> {
        check_len("matrix row", self.m, row.len())?;
        for &v in row {
            check_unit("matrix entry", v)?;
        }
        self.data[i * self.m..(i + 1) * self.m].copy_from_slice(row);
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.m.max(1)).take(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}
