use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{load_table, EventDistribution};
use crate::error::{ArenaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Truthfulness,
    Selection,
    Concentration,
    Complexity,
    Tightness,
    ChainCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Truthfulness => "truthfulness",
            ExperimentKind::Selection => "selection",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Complexity => "complexity",
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::ChainCheck => "chain-check",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| ArenaError::Config(format!("unknown experiment {name:?}")))
    }
}

/// Joint distribution of the events, independent of `m`. Per-event parameter
/// lists are repeated cyclically to length `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Independent {
        marginals: Vec<f64>,
    },
    DisjointBlocks {
        block_size: usize,
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
        state_size: usize,
        base_marginals: Vec<f64>,
        shift: f64,
        coupling: f64,
    },
    ExplicitTable {
        path: PathBuf,
    },
}

fn cycled(values: &[f64], m: usize, what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(ArenaError::Config(format!("{what} must not be empty")));
    }
    Ok((0..m).map(|t| values[t % values.len()]).collect())
}

fn runs(m: usize, size: usize) -> Vec<Vec<usize>> {
    (0..m)
        .step_by(size)
        .map(|s| (s..(s + size).min(m)).collect())
        .collect()
}

impl DistributionSpec {
    /// Builds the distribution over `m` events; `None` is only valid for
    /// explicit tables, which fix `m` themselves.
    pub fn build(&self, m: Option<usize>, base_dir: &Path) -> Result<EventDistribution> {
        if let DistributionSpec::ExplicitTable { path } = self {
            let dist = load_table(base_dir.join(path))?;
            if let Some(m) = m {
                if m != dist.m() {
                    return Err(ArenaError::Config(format!(
                        "m = {m} but the table has {} events",
                        dist.m()
                    )));
                }
            }
            return Ok(dist);
        }
        let m = m.ok_or_else(|| ArenaError::Config("m is required for this family".into()))?;
        if m == 0 {
            return Err(ArenaError::Config("m must be at least 1".into()));
        }
        match self {
            DistributionSpec::Independent { marginals } => {
                EventDistribution::independent(&cycled(marginals, m, "marginals")?)
            }
            DistributionSpec::DisjointBlocks {
                block_size,
                marginals,
            } => {
                if *block_size == 0 {
                    return Err(ArenaError::Config("block_size must be at least 1".into()));
                }
                let partition = runs(m, *block_size);
                let p = cycled(marginals, partition.len(), "marginals")?;
                EventDistribution::disjoint_blocks(&partition, &p)
            }
            DistributionSpec::RandomBias { biases, weights } => {
                EventDistribution::random_bias(m, biases, weights)
            }
            DistributionSpec::HiddenCoinGroups { b, c } => {
                if *b == 0 || !m.is_multiple_of(*b) {
                    return Err(ArenaError::Config(format!(
                        "hidden coin groups of size {b} must divide m = {m}"
                    )));
                }
                EventDistribution::hidden_coin_groups(m, *b, *c)
            }
            DistributionSpec::Election {
                state_size,
                base_marginals,
                shift,
                coupling,
            } => {
                if *state_size == 0 {
                    return Err(ArenaError::Config("state_size must be at least 1".into()));
                }
                let sizes: Vec<usize> = runs(m, *state_size).iter().map(Vec::len).collect();
                EventDistribution::election(
                    &sizes,
                    &cycled(base_marginals, m, "base_marginals")?,
                    *shift,
                    *coupling,
                )
            }
            DistributionSpec::ExplicitTable { .. } => unreachable!("handled above"),
        }
    }

    /// Declared block bound, when it does not depend on `m`.
    pub fn block_bound(&self) -> Option<usize> {
        match self {
            DistributionSpec::Independent { .. } | DistributionSpec::RandomBias { .. } => Some(1),
            DistributionSpec::DisjointBlocks { block_size, .. } => Some(*block_size),
            DistributionSpec::HiddenCoinGroups { b, .. } => Some(*b),
            DistributionSpec::Election { state_size, .. } => Some(*state_size),
            DistributionSpec::ExplicitTable { .. } => None,
        }
    }
}

/// A forecaster's belief, relative to the true distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BeliefSpec {
    /// The true distribution itself.
    Truth,
    /// True marginals plus `amount`, clipped to `[0, 1]`.
    Shift {
        amount: f64,
    },
    Constant {
        value: f64,
    },
    /// True marginals plus independent uniform noise in `[-amplitude, amplitude]`.
    Jitter {
        amplitude: f64,
        seed: u64,
    },
    /// A joint belief of its own.
    Distribution {
        distribution: DistributionSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyModel {
    Truthful,
    BestResponse,
    BandAdversary,
}

impl StrategyModel {
    pub fn name(self) -> &'static str {
        match self {
            StrategyModel::Truthful => "truthful",
            StrategyModel::BestResponse => "best_response",
            StrategyModel::BandAdversary => "band_adversary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Auto(Auto),
    Value(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

fn default_trials() -> u64 {
    1000
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub distribution: Option<DistributionSpec>,
    pub m: Option<AutoOr<usize>>,
    #[serde(default)]
    pub m_sweep: Vec<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub beliefs: Vec<BeliefSpec>,
    pub eta: Option<AutoOr<f64>>,
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub strategy: Option<StrategyModel>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub b_values: Vec<usize>,
    #[serde(default)]
    pub eta_grid: Vec<f64>,
    /// Directory that relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| ArenaError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ArenaError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ArenaError::Config(msg));
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return fail(format!("delta = {} must lie in (0, 1]", self.delta));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps <= 1.0) {
                return fail(format!("epsilon = {eps} must lie in (0, 1]"));
            }
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.n == Some(0) {
            return fail("n must be at least 1".into());
        }
        if let Some(AutoOr::Value(eta)) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return fail(format!("eta = {eta} must be positive"));
            }
        }
        if matches!(self.eta, Some(AutoOr::Auto(_))) && self.epsilon.is_none() {
            return fail("eta = \"auto\" needs epsilon".into());
        }
        if matches!(self.m, Some(AutoOr::Auto(_))) && (self.epsilon.is_none() || self.n.is_none()) {
            return fail("m = \"auto\" needs epsilon and n".into());
        }
        if self.eta_grid.iter().any(|&e| !(e > 0.0)) {
            return fail("eta_grid entries must be positive".into());
        }
        if self.b_values.contains(&0) {
            return fail("b_values entries must be at least 1".into());
        }
        if let (Some(n), false) = (self.n, self.beliefs.is_empty()) {
            if self.beliefs.len() != n {
                return fail(format!(
                    "{} beliefs given for n = {n} forecasters",
                    self.beliefs.len()
                ));
            }
        }
        let needs_distribution = !matches!(
            self.experiment,
            ExperimentKind::Truthfulness | ExperimentKind::Tightness
        );
        if needs_distribution && self.distribution.is_none() {
            return fail(format!(
                "experiment {} needs a distribution",
                self.experiment.name()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"{
            "experiment": "complexity",
            "distribution": {"family": "hidden_coin_groups", "b": 1, "c": 0.01},
            "m": "auto",
            "n": 2,
            "beliefs": [{"kind": "truth"}, {"kind": "shift", "amount": 0.3}],
            "eta": "auto",
            "epsilon": 0.2,
            "delta": 0.2,
            "strategy": "band_adversary",
            "trials": 10,
            "seed": 4
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.m, Some(AutoOr::Auto(Auto::Auto)));
        assert_eq!(c.eta, Some(AutoOr::Auto(Auto::Auto)));
        assert_eq!(c.strategy, Some(StrategyModel::BandAdversary));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"experiment": "selection", "distributon": {"family": "independent", "marginals": [0.5]}}"#;
        assert!(matches!(
            ExperimentConfig::from_json(text),
            Err(ArenaError::Config(_))
        ));
        let text = r#"{"experiment": "selection", "distribution": {"family": "independent", "marginals": [0.5], "extra": 1}}"#;
        assert!(matches!(
            ExperimentConfig::from_json(text),
            Err(ArenaError::Config(_))
        ));
        let text = r#"{"experiment": "selection", "distribution": {"family": "independent", "marginals": [0.5]}, "beliefs": [{"kind": "shift", "amount": 0.1, "typo": 2}]}"#;
        assert!(matches!(
            ExperimentConfig::from_json(text),
            Err(ArenaError::Config(_))
        ));
    }

    #[test]
    fn auto_eta_needs_epsilon() {
        let text = r#"{"experiment": "selection", "distribution": {"family": "independent", "marginals": [0.5]}, "m": 4, "eta": "auto"}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn specs_build_at_any_m() {
        let spec = DistributionSpec::Election {
            state_size: 3,
            base_marginals: vec![0.4, 0.6],
            shift: 0.05,
            coupling: 0.5,
        };
        let d = spec.build(Some(7), Path::new(".")).unwrap();
        assert_eq!(d.m(), 7);
        assert_eq!(d.blocks().b(), 3);
        let spec = DistributionSpec::HiddenCoinGroups { b: 3, c: 0.1 };
        assert!(matches!(
            spec.build(Some(7), Path::new(".")),
            Err(ArenaError::Config(_))
        ));
    }
}
