use serde::Serialize;

use super::{BlockStructure, EventDistribution, PartTable};
use crate::error::{check_len, check_unit, ArenaError, Result};

/// Family tag with the parameters the distribution was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Independent {
        theta: Vec<f64>,
    },
    DisjointBlocks {
        partition: Vec<Vec<usize>>,
        marginals: Vec<f64>,
    },
    RandomBias {
        biases: Vec<f64>,
        weights: Vec<f64>,
    },
    HiddenCoinGroups {
        b: usize,
        c: f64,
    },
    Election {
        state_sizes: Vec<usize>,
        base_marginals: Vec<f64>,
        shift: f64,
        coupling: f64,
    },
    ExplicitTable {
        /// `(outcome bitmask, probability)`, bit `t` is event `t`.
        table: Vec<(u64, f64)>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Independent { .. } => "independent",
            Family::DisjointBlocks { .. } => "disjoint_blocks",
            Family::RandomBias { .. } => "random_bias",
            Family::HiddenCoinGroups { .. } => "hidden_coin_groups",
            Family::Election { .. } => "election",
            Family::ExplicitTable { .. } => "explicit_table",
        }
    }
}

fn bernoulli(p: f64) -> Result<PartTable> {
    PartTable::new([(0, 1.0 - p), (1, p)])
}

/// All-zeros with `1 − p`, all-ones with `p`, over `size` events.
fn perfectly_coupled(size: usize, p: f64) -> Result<PartTable> {
    let ones = if size == 64 {
        u64::MAX
    } else {
        (1u64 << size) - 1
    };
    PartTable::new([(0, 1.0 - p), (ones, p)])
}

impl EventDistribution {
    /// Independent events with marginals `theta`; declares `(1, 0)`.
    pub fn independent(theta: &[f64]) -> Result<Self> {
        for &th in theta {
            check_unit("marginal", th)?;
        }
        let m = theta.len();
        let pool = theta
            .iter()
            .map(|&p| bernoulli(p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_structure(
            Family::Independent {
                theta: theta.to_vec(),
            },
            m,
            (0..m).map(|t| vec![t]).collect(),
            vec![1.0],
            pool,
            vec![(0..m).collect()],
            BlockStructure::singletons(m, 0.0)?,
        )
    }

    /// Perfectly correlated blocks that are mutually independent; declares
    /// `(max block size, 0)`.
    pub fn disjoint_blocks(partition: &[Vec<usize>], marginals: &[f64]) -> Result<Self> {
        check_len("block marginals", partition.len(), marginals.len())?;
        for &p in marginals {
            check_unit("block marginal", p)?;
        }
        let m: usize = partition.iter().map(Vec::len).sum();
        if partition.iter().any(Vec::is_empty) {
            return Err(ArenaError::InvalidParameter(
                "empty block in partition".into(),
            ));
        }
        let pool = partition
            .iter()
            .zip(marginals)
            .map(|(part, &p)| perfectly_coupled(part.len(), p))
            .collect::<Result<Vec<_>>>()?;
        let blocks = BlockStructure::from_partition(partition, m, 0.0)?;
        Self::from_structure(
            Family::DisjointBlocks {
                partition: partition.to_vec(),
                marginals: marginals.to_vec(),
            },
            m,
            partition.to_vec(),
            vec![1.0],
            pool,
            vec![(0..partition.len()).collect()],
            blocks,
        )
    }

    /// Conditionally i.i.d. events whose common bias is drawn from `biases`
    /// with probabilities `weights`; declares singleton blocks with the
    /// certified slack.
    pub fn random_bias(m: usize, biases: &[f64], weights: &[f64]) -> Result<Self> {
        check_len("mixture weights", biases.len(), weights.len())?;
        if biases.is_empty() {
            return Err(ArenaError::InvalidParameter("no bias values given".into()));
        }
        for &p in biases {
            check_unit("bias", p)?;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w > 0.0)) || !total.is_finite() {
            return Err(ArenaError::InvalidParameter(
                "mixture weights must be positive".into(),
            ));
        }
        let weights_n: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let pool = biases
            .iter()
            .map(|&p| bernoulli(p))
            .collect::<Result<Vec<_>>>()?;
        let assign = (0..biases.len()).map(|h| vec![h; m]).collect();
        let provisional = Self::from_structure(
            Family::RandomBias {
                biases: biases.to_vec(),
                weights: weights_n.clone(),
            },
            m,
            (0..m).map(|t| vec![t]).collect(),
            weights_n,
            pool,
            assign,
            BlockStructure::singletons(m, 0.0)?,
        )?;
        provisional.certified_self_declaration()
    }

    /// Groups of `b` perfectly correlated events whose common mean is
    /// `1/2 + c` or `1/2 − c` according to one hidden fair coin. Marginals
    /// are exactly `1/2`. Declares the groups as blocks with certified slack.
    pub fn hidden_coin_groups(m: usize, b: usize, c: f64) -> Result<Self> {
        if b == 0 || !m.is_multiple_of(b) {
            return Err(ArenaError::InvalidParameter(format!(
                "group size b = {b} must divide m = {m}"
            )));
        }
        if !(0.0..=0.5).contains(&c) {
            return Err(ArenaError::Domain {
                what: "coin shift c",
                value: c,
                domain: "[0, 1/2]",
            });
        }
        let groups: Vec<Vec<usize>> = (0..m / b).map(|g| (g * b..(g + 1) * b).collect()).collect();
        let (weights, pool, assign) = if c == 0.0 {
            (
                vec![1.0],
                vec![perfectly_coupled(b, 0.5)?],
                vec![vec![0; m / b]],
            )
        } else {
            (
                vec![0.5, 0.5],
                vec![
                    perfectly_coupled(b, 0.5 - c)?,
                    perfectly_coupled(b, 0.5 + c)?,
                ],
                vec![vec![0; m / b], vec![1; m / b]],
            )
        };
        let blocks = BlockStructure::from_partition(&groups, m, 0.0)?;
        let provisional = Self::from_structure(
            Family::HiddenCoinGroups { b, c },
            m,
            groups,
            weights,
            pool,
            assign,
            blocks,
        )?;
        provisional.certified_self_declaration()
    }

    /// Elections grouped by state.
    ///
    /// A fair national coin picks a shift `s ∈ {−shift, +shift}` added to
    /// every base marginal (clipped to `[0, 1]`). Within a state, with
    /// probability `coupling` all districts share one latent swing
    /// `U ~ Uniform[0, 1]` and district `t` goes to 1 iff `U < θ_t + s`;
    /// otherwise districts draw independently. States are independent given
    /// the shift. Declares states as blocks with certified slack.
    pub fn election(
        state_sizes: &[usize],
        base_marginals: &[f64],
        shift: f64,
        coupling: f64,
    ) -> Result<Self> {
        let m: usize = state_sizes.iter().sum();
        check_len("base marginals", m, base_marginals.len())?;
        for &p in base_marginals {
            check_unit("base marginal", p)?;
        }
        check_unit("coupling", coupling)?;
        if !(0.0..=1.0).contains(&shift) {
            return Err(ArenaError::Domain {
                what: "national shift",
                value: shift,
                domain: "[0, 1]",
            });
        }
        if state_sizes.contains(&0) {
            return Err(ArenaError::InvalidParameter("empty state".into()));
        }
        if coupling < 1.0 && state_sizes.iter().any(|&s| s > 16) {
            return Err(ArenaError::InvalidParameter(
                "partially coupled states are limited to 16 districts".into(),
            ));
        }
        let mut states = Vec::with_capacity(state_sizes.len());
        let mut next = 0;
        for &size in state_sizes {
            states.push((next..next + size).collect::<Vec<usize>>());
            next += size;
        }
        let shifts: Vec<f64> = if shift == 0.0 {
            vec![0.0]
        } else {
            vec![-shift, shift]
        };
        let mut pool = Vec::new();
        let mut assign = Vec::new();
        for &s in &shifts {
            let mut row = Vec::with_capacity(states.len());
            for state in &states {
                let thresholds: Vec<f64> = state
                    .iter()
                    .map(|&t| (base_marginals[t] + s).clamp(0.0, 1.0))
                    .collect();
                row.push(pool.len());
                pool.push(state_table(&thresholds, coupling)?);
            }
            assign.push(row);
        }
        let weights = vec![1.0 / shifts.len() as f64; shifts.len()];
        let blocks = BlockStructure::from_partition(&states, m, 0.0)?;
        let provisional = Self::from_structure(
            Family::Election {
                state_sizes: state_sizes.to_vec(),
                base_marginals: base_marginals.to_vec(),
                shift,
                coupling,
            },
            m,
            states,
            weights,
            pool,
            assign,
            blocks,
        )?;
        provisional.certified_self_declaration()
    }

    /// An explicit joint table over `m ≤ 64` events, declared as one block
    /// covering every event (`b = m`, `c = 0`) until `with_blocks` says otherwise.
    pub fn explicit_table(m: usize, table: &[(u64, f64)]) -> Result<Self> {
        if m == 0 || m > 64 {
            return Err(ArenaError::InvalidParameter(format!(
                "explicit tables need 1 ≤ m ≤ 64, got {m}"
            )));
        }
        if table.iter().any(|&(mask, _)| m < 64 && mask >> m != 0) {
            return Err(ArenaError::InvalidParameter(
                "table names outcomes beyond m events".into(),
            ));
        }
        let total: f64 = table.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ArenaError::InvalidParameter(format!(
                "table probabilities sum to {total}, not 1 within 1e-9"
            )));
        }
        let normalized: Vec<(u64, f64)> = table.iter().map(|&(k, p)| (k, p / total)).collect();
        let pool = vec![PartTable::new(normalized.iter().copied())?];
        let all: Vec<usize> = (0..m).collect();
        let blocks = BlockStructure::new(vec![all.clone(); m], m, 0.0)?;
        Self::from_structure(
            Family::ExplicitTable { table: normalized },
            m,
            vec![all],
            vec![1.0],
            pool,
            vec![vec![0]],
            blocks,
        )
    }

    /// Replaces the provisional `c = 0` declaration with the certified slack.
    fn certified_self_declaration(self) -> Result<Self> {
        let c = match super::certify_block_correlation(&self, self.blocks()) {
            Ok(cert) => cert.overall,
            Err(ArenaError::EnumerationCap { .. }) => self.latent_deviation_bound(),
            Err(e) => return Err(e),
        };
        if c >= 0.5 {
            return Err(ArenaError::InvalidParameter(format!(
                "certified slack {c} is not below 1/2 for the natural blocks"
            )));
        }
        let blocks = self.blocks().with_bounds(self.blocks().b(), c)?;
        let mut out = self;
        out.blocks = blocks;
        Ok(out)
    }
}

/// Pattern table of one state: a `coupling`-mixture of the comonotone
/// threshold coupling and independent districts.
fn state_table(thresholds: &[f64], coupling: f64) -> Result<PartTable> {
    let k = thresholds.len();
    let mut entries: Vec<(u64, f64)> = Vec::new();
    if coupling > 0.0 {
        // Sorted cut points split [0,1] into intervals; on each interval the
        // set of districts with threshold above U is fixed.
        let mut cuts: Vec<f64> = thresholds.to_vec();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi > lo {
                let pattern = thresholds
                    .iter()
                    .enumerate()
                    .filter(|(_, &th)| th > lo)
                    .fold(0u64, |acc, (bit, _)| acc | (1u64 << bit));
                entries.push((pattern, coupling * (hi - lo)));
            }
        }
    }
    if coupling < 1.0 {
        for pattern in 0..(1u64 << k) {
            let p: f64 = thresholds
                .iter()
                .enumerate()
                .map(|(bit, &th)| {
                    if (pattern >> bit) & 1 == 1 {
                        th
                    } else {
                        1.0 - th
                    }
                })
                .product();
            entries.push((pattern, (1.0 - coupling) * p));
        }
    }
    PartTable::new(entries)
}
