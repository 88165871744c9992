use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::TailBoundSpec;
use crate::distributions::EventDistribution;
use crate::error::{ArenaError, Result};
use crate::rng::stream_rng;
use crate::stats::{Moments, Proportion};

/// Largest `m` for which the chain's randomness is enumerated exactly.
pub const EXACT_CHAIN_MAX_M: usize = 6;
/// Smallest bucket used by the Monte Carlo conditional-mean checks.
const MIN_BUCKET: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainVariant {
    Faithful,
    /// Leaves the conditional means of the redrawn influencers inside the
    /// mega-variables. Used to show the checks have teeth.
    SkipMeanSubtraction,
}

#[derive(Debug, Clone)]
struct Law {
    /// Over assignments of the level's influencers; bit `k` is `influencers[k]`.
    probs: Vec<f64>,
    means: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Level {
    /// Earlier influencers of the level's variable (1-based).
    influencers: Vec<usize>,
    /// Earlier non-influencers (1-based).
    others: Vec<usize>,
    /// Indexed by the outcome of `others`; `None` when that outcome is impossible.
    laws: Vec<Option<Law>>,
}

/// Precomputed conditional laws of every level of the chain.
#[derive(Debug, Clone)]
pub struct ChainPlan {
    m: usize,
    b: usize,
    c: f64,
    theta: Vec<f64>,
    /// `levels[i]` for `i = 1..=m`; entry 0 is unused.
    levels: Vec<Level>,
    variant: ChainVariant,
}

/// One realized path of the chain, levels `i = m..0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResamplingChain {
    /// `z[i]` is `(Z_{1,i}, …, Z_{i,i})`.
    pub z: Vec<Vec<u8>>,
    /// `x[i]` for `i = 0..=m`, with `x[m] = 0`.
    pub x: Vec<f64>,
    /// `e[i]` for `i = 0..=m`, with `e[m] = 0`.
    pub e: Vec<f64>,
    /// `s_hat[i]` for `i = 0..=m`, with `s_hat[m] = S`.
    pub s_hat: Vec<f64>,
    /// `gamma_bar[i]` lists `(j, Z_{j,i})` over the earlier non-influencers of
    /// level `i` (1-based `j`); entry 0 is empty.
    pub gamma_bar: Vec<Vec<(usize, u8)>>,
    /// The realized original sum `S`.
    pub sum: f64,
}

impl ResamplingChain {
    pub fn m(&self) -> usize {
        self.x.len() - 1
    }

    /// Largest violation of `Ŝ_i = Σ_{j≤i} Z_{j,i} + Σ_{j≥i} X_j` and of
    /// `Ŝ_0 − S = Σ E_i`.
    pub fn identity_residual(&self) -> f64 {
        let m = self.m();
        let mut worst: f64 = 0.0;
        for i in 0..=m {
            let rhs: f64 =
                self.z[i].iter().map(|&v| v as f64).sum::<f64>() + self.x[i..].iter().sum::<f64>();
            worst = worst.max((self.s_hat[i] - rhs).abs());
        }
        let corr: f64 = self.e.iter().sum();
        worst.max((self.s_hat[0] - self.sum - corr).abs())
    }

    /// Largest excursion of `X_i` outside `[1 − b, b]` or `E_i` outside `[−b, b]`.
    pub fn range_excess(&self, b: usize) -> (f64, f64) {
        let b = b as f64;
        let x = self
            .x
            .iter()
            .map(|&v| (v - b).max(1.0 - b - v))
            .fold(0.0, f64::max);
        let e = self.e.iter().map(|&v| v.abs() - b).fold(0.0, f64::max);
        (x, e)
    }
}

impl ChainPlan {
    pub fn new(dist: &EventDistribution, variant: ChainVariant) -> Result<Self> {
        let m = dist.m();
        if m > dist.enumeration_cap() {
            return Err(ArenaError::EnumerationCap {
                what: "m (chain construction)",
                actual: m,
                cap: dist.enumeration_cap(),
            });
        }
        let blocks = dist.blocks();
        let mut levels = vec![Level {
            influencers: Vec::new(),
            others: Vec::new(),
            laws: Vec::new(),
        }];
        for i in 1..=m {
            let block = blocks.block(i - 1);
            let (influencers, others): (Vec<usize>, Vec<usize>) =
                (1..i).partition(|&j| block.binary_search(&(j - 1)).is_ok());
            let mut laws = Vec::with_capacity(1 << others.len());
            for mask in 0u64..(1u64 << others.len()) {
                let given: Vec<(usize, u8)> = others
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| (j - 1, ((mask >> k) & 1) as u8))
                    .collect();
                if dist.log_probability(&given)? == f64::NEG_INFINITY {
                    laws.push(None);
                    continue;
                }
                let mut probs = Vec::with_capacity(1 << influencers.len());
                for v in 0u64..(1u64 << influencers.len()) {
                    let target: Vec<(usize, u8)> = influencers
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| (j - 1, ((v >> k) & 1) as u8))
                        .collect();
                    probs.push(dist.conditional_probability(&target, &given)?);
                }
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= total);
                let means = (0..influencers.len())
                    .map(|k| {
                        probs
                            .iter()
                            .enumerate()
                            .filter(|(v, _)| (v >> k) & 1 == 1)
                            .map(|(_, p)| p)
                            .sum()
                    })
                    .collect();
                laws.push(Some(Law { probs, means }));
            }
            levels.push(Level {
                influencers,
                others,
                laws,
            });
        }
        Ok(Self {
            m,
            b: blocks.b(),
            c: blocks.c(),
            theta: dist.marginals().to_vec(),
            levels,
            variant,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn law(&self, i: usize, z: &[u8]) -> (&Law, Vec<(usize, u8)>) {
        let level = &self.levels[i];
        let mut mask = 0usize;
        let mut gamma = Vec::with_capacity(level.others.len());
        for (k, &j) in level.others.iter().enumerate() {
            let v = z[j - 1];
            mask |= (v as usize) << k;
            gamma.push((j, v));
        }
        let law = level.laws[mask]
            .as_ref()
            .expect("conditioning outcomes come from the distribution itself");
        (law, gamma)
    }

    /// Applies level `i` with redraw `v` to `z = (Z_{j,i})_{j≤i}`.
    fn step(&self, i: usize, z: &[u8], law: &Law, v: usize) -> (f64, f64, Vec<u8>) {
        let level = &self.levels[i];
        let mut x = z[i - 1] as f64;
        let mut e = 0.0;
        let mut next = z[..i - 1].to_vec();
        for (k, &j) in level.influencers.iter().enumerate() {
            let fresh = ((v >> k) & 1) as f64;
            match self.variant {
                ChainVariant::Faithful => x += z[j - 1] as f64 - law.means[k],
                ChainVariant::SkipMeanSubtraction => x += z[j - 1] as f64,
            }
            e += fresh - law.means[k];
            next[j - 1] = fresh as u8;
        }
        (x, e, next)
    }

    fn start(&self, y: &[u8]) -> ResamplingChain {
        let m = self.m;
        let sum: f64 = y.iter().map(|&v| v as f64).sum();
        let mut z = vec![Vec::new(); m + 1];
        z[m] = y.to_vec();
        let mut s_hat = vec![0.0; m + 1];
        s_hat[m] = sum;
        ResamplingChain {
            z,
            x: vec![0.0; m + 1],
            e: vec![0.0; m + 1],
            s_hat,
            gamma_bar: vec![Vec::new(); m + 1],
            sum,
        }
    }

    /// Runs the recursion on `y`, drawing redraws from `rng`.
    pub fn run<R: Rng + ?Sized>(&self, y: &[u8], rng: &mut R) -> ResamplingChain {
        let mut path = self.start(y);
        for i in (1..=self.m).rev() {
            let (law, gamma) = self.law(i, &path.z[i]);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut v = law.probs.len() - 1;
            for (k, &p) in law.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    v = k;
                    break;
                }
            }
            while law.probs[v] == 0.0 {
                v -= 1;
            }
            self.apply(&mut path, i, law, gamma, v);
        }
        path
    }

    fn apply(
        &self,
        path: &mut ResamplingChain,
        i: usize,
        law: &Law,
        gamma: Vec<(usize, u8)>,
        v: usize,
    ) {
        let (x, e, next) = self.step(i, &path.z[i], law, v);
        path.x[i - 1] = x;
        path.e[i - 1] = e;
        path.s_hat[i - 1] = path.s_hat[i] + e;
        path.z[i - 1] = next;
        path.gamma_bar[i] = gamma;
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        dist: &EventDistribution,
        rng: &mut R,
    ) -> ResamplingChain {
        let y = dist.sample(rng);
        self.run(y.as_slice(), rng)
    }
}

/// One path of the chain for an outcome drawn from `dist`.
pub fn build_resampling_chain<R: Rng + ?Sized>(
    dist: &EventDistribution,
    rng: &mut R,
) -> Result<ResamplingChain> {
    Ok(ChainPlan::new(dist, ChainVariant::Faithful)?.sample(dist, rng))
}

/// Every path of the chain with its exact probability.
pub fn enumerate_chain(
    dist: &EventDistribution,
    plan: &ChainPlan,
) -> Result<Vec<(f64, ResamplingChain)>> {
    if plan.m > EXACT_CHAIN_MAX_M {
        return Err(ArenaError::EnumerationCap {
            what: "m (exact chain enumeration)",
            actual: plan.m,
            cap: EXACT_CHAIN_MAX_M,
        });
    }
    let mut frontier: Vec<(f64, ResamplingChain)> = dist
        .enumerate()?
        .into_iter()
        .map(|p| (p.prob, plan.start(p.outcome.as_slice())))
        .collect();
    for i in (1..=plan.m).rev() {
        let mut next = Vec::with_capacity(frontier.len());
        for (p, path) in frontier {
            let (law, gamma) = plan.law(i, &path.z[i]);
            for (v, &q) in law.probs.iter().enumerate() {
                if q > 0.0 {
                    let mut child = path.clone();
                    plan.apply(&mut child, i, law, gamma.clone(), v);
                    next.push((p * q, child));
                }
            }
        }
        frontier = next;
    }
    Ok(frontier)
}

/// One row of a chain property report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainCheck {
    pub check: &'static str,
    pub fixture: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub checks: Vec<ChainCheck>,
}

impl ChainReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, check: &str) -> Option<&ChainCheck> {
        self.checks.iter().find(|c| c.check == check)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,fixture,statistic,threshold,pass\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{}",
                c.check, c.fixture, c.statistic, c.threshold, c.pass
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ChainVerifyOptions {
    pub fixture: String,
    pub paths: u64,
    pub seed: u64,
    pub delta: f64,
    pub variant: ChainVariant,
}

impl ChainVerifyOptions {
    pub fn new(fixture: impl Into<String>, paths: u64, seed: u64) -> Self {
        Self {
            fixture: fixture.into(),
            paths,
            seed,
            delta: 0.05,
            variant: ChainVariant::Faithful,
        }
    }
}

struct PathSummary {
    x: Vec<f64>,
    e: Vec<f64>,
    s_hat0: f64,
    sum: f64,
    identity: f64,
    x_excess: f64,
    e_excess: f64,
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

/// Checks the chain's properties on `paths` sampled paths, plus exact
/// enumeration of all randomness when `m ≤ EXACT_CHAIN_MAX_M`.
pub fn verify_chain(dist: &EventDistribution, options: &ChainVerifyOptions) -> Result<ChainReport> {
    if options.paths < 2 {
        return Err(ArenaError::InvalidParameter(
            "at least 2 paths are needed".into(),
        ));
    }
    let plan = ChainPlan::new(dist, options.variant)?;
    let m = plan.m;
    let b = plan.b;
    let bounds = TailBoundSpec::new(m, b, plan.c, options.delta)?;
    let mean_sum: f64 = plan.theta.iter().sum();

    let summaries: Vec<PathSummary> = (0..options.paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(options.seed, k);
            let path = plan.sample(dist, &mut rng);
            let (x_excess, e_excess) = path.range_excess(b);
            PathSummary {
                identity: path.identity_residual(),
                x_excess,
                e_excess,
                s_hat0: path.s_hat[0],
                sum: path.sum,
                x: path.x,
                e: path.e,
            }
        })
        .collect();

    let fixture = options.fixture.clone();
    let mut checks = Vec::new();
    let mut push = |check: &'static str, statistic: f64, threshold: f64, pass: bool| {
        checks.push(ChainCheck {
            check,
            fixture: fixture.clone(),
            statistic,
            threshold,
            pass,
        });
    };

    let identity = summaries.iter().map(|s| s.identity).fold(0.0, f64::max);
    push("telescoping_identity", identity, 1e-12, identity <= 1e-12);
    let x_excess = summaries.iter().map(|s| s.x_excess).fold(0.0, f64::max);
    push("x_range", x_excess, 1e-12, x_excess <= 1e-12);
    let e_excess = summaries.iter().map(|s| s.e_excess).fold(0.0, f64::max);
    push("e_range", e_excess, 1e-12, e_excess <= 1e-12);

    // E[X_i] = E[Z_{i+1}]
    let mut worst_z: f64 = 0.0;
    for i in 0..m {
        let mut mo = Moments::default();
        summaries.iter().for_each(|s| mo.push(s.x[i]));
        worst_z = worst_z.max(z_score(mo.mean() - plan.theta[i], mo.std_err()));
    }
    push("x_mean", worst_z, 3.0, worst_z <= 3.0);

    if m <= EXACT_CHAIN_MAX_M {
        // |E[X_i | X_0..X_{i-1}] − E[X_i]| ≤ c
        let mut worst_drift: f64 = 0.0;
        for i in 1..m {
            let mut buckets: BTreeMap<Vec<u64>, Moments> = BTreeMap::new();
            for s in &summaries {
                buckets.entry(key(&s.x[..i])).or_default().push(s.x[i]);
            }
            for mo in buckets.values().filter(|mo| mo.count() >= MIN_BUCKET) {
                let excess = (mo.mean() - plan.theta[i]).abs() - plan.c;
                worst_drift = worst_drift.max(z_score(excess.max(0.0), mo.std_err()));
            }
        }
        push("x_drift", worst_drift, 3.0, worst_drift <= 3.0);

        // E[E_i | E_{i+1..m}] = 0
        let mut worst_mart: f64 = 0.0;
        for i in 0..m {
            let mut buckets: BTreeMap<Vec<u64>, Moments> = BTreeMap::new();
            for s in &summaries {
                buckets.entry(key(&s.e[i + 1..])).or_default().push(s.e[i]);
            }
            for mo in buckets.values().filter(|mo| mo.count() >= MIN_BUCKET) {
                worst_mart = worst_mart.max(z_score(mo.mean(), mo.std_err()));
            }
        }
        push("e_martingale", worst_mart, 3.0, worst_mart <= 3.0);

        exact_checks(dist, &plan, &mut push)?;
    }

    let half = options.delta / 2.0;
    let to_mean = bounds.proxy_to_mean();
    let hits = summaries
        .iter()
        .filter(|s| (s.s_hat0 - mean_sum).abs() >= to_mean)
        .count() as u64;
    let p = Proportion::wilson(hits, options.paths);
    push("proxy_to_mean_tail", p.hi, half, p.hi <= half);
    let to_sum = bounds.proxy_to_sum();
    let hits = summaries
        .iter()
        .filter(|s| (s.s_hat0 - s.sum).abs() >= to_sum)
        .count() as u64;
    let p = Proportion::wilson(hits, options.paths);
    push("proxy_to_sum_tail", p.hi, half, p.hi <= half);

    Ok(ChainReport { checks })
}

/// `|diff| / se`, with exact zero differences scoring 0 and nonzero
/// differences with zero spread scoring infinity.
fn z_score(diff: f64, se: f64) -> f64 {
    if diff.abs() <= 1e-12 {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

fn exact_checks(
    dist: &EventDistribution,
    plan: &ChainPlan,
    push: &mut impl FnMut(&'static str, f64, f64, bool),
) -> Result<()> {
    let m = plan.m;
    let paths = enumerate_chain(dist, plan)?;

    let mut worst_mean: f64 = 0.0;
    for i in 0..m {
        let mean: f64 = paths.iter().map(|(p, c)| p * c.x[i]).sum();
        worst_mean = worst_mean.max((mean - plan.theta[i]).abs());
    }
    push("x_mean_exact", worst_mean, 1e-12, worst_mean <= 1e-12);

    let mut worst_drift: f64 = 0.0;
    for i in 1..m {
        let mean: f64 = paths.iter().map(|(p, c)| p * c.x[i]).sum();
        let mut buckets: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
        for (p, c) in &paths {
            let e = buckets.entry(key(&c.x[..i])).or_insert((0.0, 0.0));
            e.0 += p;
            e.1 += p * c.x[i];
        }
        for (w, s) in buckets.values() {
            worst_drift = worst_drift.max((s / w - mean).abs());
        }
    }
    let allowed = plan.c + 1e-12;
    push(
        "x_drift_exact",
        worst_drift,
        allowed,
        worst_drift <= allowed,
    );

    let mut worst_mart: f64 = 0.0;
    for i in 0..m {
        let mut buckets: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
        for (p, c) in &paths {
            let e = buckets.entry(key(&c.e[i + 1..])).or_insert((0.0, 0.0));
            e.0 += p;
            e.1 += p * c.e[i];
        }
        for (w, s) in buckets.values() {
            worst_mart = worst_mart.max((s / w).abs());
        }
    }
    push("e_martingale_exact", worst_mart, 1e-12, worst_mart <= 1e-12);

    // (Z_{j,i})_{j≤i} against (Z_j)_{j≤i}
    let support = dist.enumerate()?;
    let mut worst_tv: f64 = 0.0;
    for i in 0..=m {
        let prefix = |z: &[u8]| {
            z[..i]
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &v)| acc | ((v as u64) << k))
        };
        let mut target: BTreeMap<u64, f64> = BTreeMap::new();
        for p in &support {
            *target.entry(prefix(p.outcome.as_slice())).or_default() += p.prob;
        }
        let mut chain: BTreeMap<u64, f64> = BTreeMap::new();
        for (p, c) in &paths {
            *chain.entry(prefix(&c.z[i])).or_default() += p;
        }
        let mut keys: Vec<u64> = target.keys().chain(chain.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        let tv: f64 = keys
            .iter()
            .map(|k| (target.get(k).unwrap_or(&0.0) - chain.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
            / 2.0;
        worst_tv = worst_tv.max(tv);
    }
    push("law_total_variation", worst_tv, 1e-9, worst_tv <= 1e-9);
    Ok(())
}
