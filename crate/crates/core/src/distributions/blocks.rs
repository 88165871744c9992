use serde::Serialize;

use crate::error::{ArenaError, Result};

/// Influencer sets `B_t` with declared bound `b` and slack `c`.
///
/// Every `B_t` contains `t` itself and has at most `b` members; `c` lies in
/// `[0, 1/2)`. Conditioning event `t` on any realizable assignment of the
/// complement `B̄_t` moves its mean by at most `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStructure {
    blocks: Vec<Vec<usize>>,
    b: usize,
    c: f64,
}

impl BlockStructure {
    pub fn new(blocks: Vec<Vec<usize>>, b: usize, c: f64) -> Result<Self> {
        let m = blocks.len();
        if b == 0 {
            return Err(ArenaError::InvalidParameter(
                "block bound b must be ≥ 1".into(),
            ));
        }
        if !(0.0..0.5).contains(&c) {
            return Err(ArenaError::Domain {
                what: "block slack c",
                value: c,
                domain: "[0, 1/2)",
            });
        }
        let mut normalized = Vec::with_capacity(m);
        for (t, mut block) in blocks.into_iter().enumerate() {
            block.sort_unstable();
            block.dedup();
            if let Some(&bad) = block.iter().find(|&&j| j >= m) {
                return Err(ArenaError::InvalidParameter(format!(
                    "block of event {t} names event {bad}, but m = {m}"
                )));
            }
            if block.binary_search(&t).is_err() {
                return Err(ArenaError::InvalidParameter(format!(
                    "block of event {t} must contain the event itself"
                )));
            }
            if block.len() > b {
                return Err(ArenaError::InvalidParameter(format!(
                    "block of event {t} has {} members, more than b = {b}",
                    block.len()
                )));
            }
            normalized.push(block);
        }
        Ok(Self {
            blocks: normalized,
            b,
            c,
        })
    }

    /// Singleton blocks `B_t = {t}`.
    pub fn singletons(m: usize, c: f64) -> Result<Self> {
        Self::new((0..m).map(|t| vec![t]).collect(), 1, c)
    }

    /// Each event's block is the part of `partition` containing it.
    pub fn from_partition(partition: &[Vec<usize>], m: usize, c: f64) -> Result<Self> {
        let mut blocks = vec![Vec::new(); m];
        let mut b = 1;
        for part in partition {
            b = b.max(part.len());
            for &t in part {
                if t >= m {
                    return Err(ArenaError::InvalidParameter(format!(
                        "partition names event {t}, but m = {m}"
                    )));
                }
                blocks[t] = part.clone();
            }
        }
        Self::new(blocks, b, c)
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn block(&self, t: usize) -> &[usize] {
        &self.blocks[t]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn complement(&self, t: usize) -> Vec<usize> {
        let block = &self.blocks[t];
        (0..self.m())
            .filter(|j| block.binary_search(j).is_err())
            .collect()
    }

    pub fn contains(&self, t: usize, j: usize) -> bool {
        self.blocks[t].binary_search(&j).is_ok()
    }

    /// Same blocks under a looser declaration.
    pub fn with_bounds(&self, b: usize, c: f64) -> Result<Self> {
        Self::new(self.blocks.clone(), b, c)
    }

    /// Converts to the concentration-bound convention: the self index is
    /// dropped, so each set has at most `b − 1` members.
    pub fn to_influencer_sets(&self) -> InfluencerSets {
        InfluencerSets {
            sets: self
                .blocks
                .iter()
                .enumerate()
                .map(|(t, block)| block.iter().copied().filter(|&j| j != t).collect())
                .collect(),
            b: self.b,
            c: self.c,
        }
    }
}

/// Influencer sets `B_i ⊂ [m] \ {i}` with `|B_i| ≤ b − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluencerSets {
    sets: Vec<Vec<usize>>,
    b: usize,
    c: f64,
}

impl InfluencerSets {
    pub fn new(sets: Vec<Vec<usize>>, b: usize, c: f64) -> Result<Self> {
        let m = sets.len();
        if b == 0 || c < 0.0 {
            return Err(ArenaError::InvalidParameter(
                "influencer sets need b ≥ 1 and c ≥ 0".into(),
            ));
        }
        let mut out = Vec::with_capacity(m);
        for (i, mut set) in sets.into_iter().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.contains(&i) || set.iter().any(|&j| j >= m) || set.len() + 1 > b {
                return Err(ArenaError::InvalidParameter(format!(
                    "influencer set of {i} must exclude {i}, stay within [m] and have at most b − 1 members"
                )));
            }
            out.push(set);
        }
        Ok(Self { sets: out, b, c })
    }

    pub fn m(&self) -> usize {
        self.sets.len()
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_must_contain_self_and_respect_b() {
        assert!(BlockStructure::new(vec![vec![1], vec![1]], 1, 0.0).is_err());
        assert!(BlockStructure::new(vec![vec![0, 1], vec![1]], 1, 0.0).is_err());
        assert!(BlockStructure::new(vec![vec![0]], 1, 0.5).is_err());
        let s = BlockStructure::new(vec![vec![1, 0], vec![1]], 2, 0.1).unwrap();
        assert_eq!(s.block(0), &[0, 1]);
        assert_eq!(s.complement(1), vec![0]);
    }

    #[test]
    fn conversion_drops_self_index() {
        let s = BlockStructure::from_partition(&[vec![0, 1], vec![2]], 3, 0.0).unwrap();
        let inf = s.to_influencer_sets();
        assert_eq!(inf.set(0), &[1]);
        assert_eq!(inf.set(1), &[0]);
        assert!(inf.set(2).is_empty());
        assert_eq!(inf.b(), 2);
    }
}
