//! Population side probabilities `P(X ⪰ h)`, `P(X ⪯ h)` on index subsets:
//! closed forms and grid-exact recursions where the model allows, otherwise
//! a cached Monte Carlo reference run.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::batch::Batch;
use crate::depth::walk::{brownian_constant_sides, brownian_sides, WalkOptions};
use crate::depth::{product_sides, sparre_andersen_exact, SideCounts, MIN_ORACLE_PATHS};
use crate::gridfn::{Grid, GridFunction, IndexSubset};
use crate::models::{MarginalSpec, ProcessKind, ProcessModel};
use crate::smoothing::SmoothingDensity;
use crate::special::adaptive_simpson_split;
use crate::{io, rng, Error, Result};

/// How population depths are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OraclePolicy {
    /// Reference paths for Monte Carlo oracles.
    #[serde(default = "default_n_ref")]
    pub n_ref: u64,
    #[serde(default = "default_true")]
    pub allow_monte_carlo: bool,
    /// Upper limit on path values generated by one reference run.
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Largest number of constraint times handed to the Brownian recursion.
    #[serde(default = "default_walk_steps")]
    pub walk_max_steps: usize,
    /// Directory for cached reference runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

fn default_n_ref() -> u64 {
    1_000_000
}
fn default_true() -> bool {
    true
}
fn default_budget() -> u64 {
    2_000_000_000
}
fn default_walk_steps() -> usize {
    1024
}

impl Default for OraclePolicy {
    fn default() -> Self {
        Self {
            n_ref: default_n_ref(),
            allow_monte_carlo: true,
            budget: default_budget(),
            walk_max_steps: default_walk_steps(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSource {
    /// `C(2m, m)/4^m` for symmetric continuous increments.
    SparreAndersen,
    /// Killed-walk recursion for (smoothed) Brownian motion.
    BrownianWalk,
    /// Products of marginal tails for independent coordinates.
    ProductFormula,
    /// Count-state recursion for the Poisson process.
    PoissonCounts,
    MonteCarlo,
}

/// Population side probabilities of one query on one index subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideOracle {
    pub upper: f64,
    pub lower: f64,
    /// `P(X ⪰ h and X ⪯ h)`.
    pub both: f64,
    /// Standard error of each side (zero for exact sources).
    pub se: f64,
    pub source: OracleSource,
}

impl SideOracle {
    fn exact(upper: f64, lower: f64, both: f64, source: OracleSource) -> Self {
        Self { upper, lower, both, se: 0.0, source }
    }

    pub fn depth(&self) -> f64 {
        self.upper.min(self.lower)
    }

    pub fn is_exact(&self) -> bool {
        self.source != OracleSource::MonteCarlo
    }
}

/// Oracles indexed `[subset][query]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub sides: Vec<Vec<SideOracle>>,
    /// Seed of the Monte Carlo reference run, when one was needed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_seed: Option<u64>,
    #[serde(default)]
    pub cache_hit: bool,
}

const ORACLE_LABEL: u64 = 0x6f72_6163;

/// Side probabilities for every `(subset, query)` pair.
pub fn oracle_table(
    model: &ProcessModel,
    grid: &Arc<Grid>,
    queries: &[GridFunction<f64>],
    subsets: &[IndexSubset],
    policy: &OraclePolicy,
    seed: u64,
) -> Result<OracleTable> {
    model.validate()?;
    model.check_grid(grid)?;
    let mut sides: Vec<Option<Vec<SideOracle>>> = Vec::with_capacity(subsets.len());
    for subset in subsets {
        if !subset.fits(grid.len()) {
            return Err(Error::Domain("index subset does not fit the grid".into()));
        }
        sides.push(exact_sides(model, grid, subset.indices(), queries, policy)?);
    }
    let missing: Vec<usize> = (0..subsets.len()).filter(|s| sides[*s].is_none()).collect();
    let mut table = OracleTable { sides: Vec::new(), reference_seed: None, cache_hit: false };
    if !missing.is_empty() {
        let wanted: Vec<IndexSubset> = missing.iter().map(|s| subsets[*s].clone()).collect();
        let ref_seed = rng::derive_seed(seed, &[ORACLE_LABEL]);
        let (counts, hit) = reference_counts(model, grid, queries, &wanted, policy, ref_seed)?;
        for (s, row) in missing.into_iter().zip(counts) {
            sides[s] = Some(row.iter().map(monte_carlo_side).collect());
        }
        table.reference_seed = Some(ref_seed);
        table.cache_hit = hit;
    }
    table.sides = sides.into_iter().map(|s| s.expect("every subset resolved")).collect();
    Ok(table)
}

fn monte_carlo_side(c: &SideCounts) -> SideOracle {
    let n = c.n as f64;
    let upper = c.above as f64 / n;
    let lower = c.below as f64 / n;
    let p = upper.min(lower);
    SideOracle {
        upper,
        lower,
        both: c.both as f64 / n,
        se: (p * (1.0 - p) / n).sqrt(),
        source: OracleSource::MonteCarlo,
    }
}

#[derive(Serialize)]
struct CacheKey<'a> {
    version: u32,
    model: &'a ProcessModel,
    grid: &'a Grid,
    queries: Vec<&'a [f64]>,
    subsets: Vec<&'a [usize]>,
    n_ref: u64,
    seed: u64,
}

fn reference_counts(
    model: &ProcessModel,
    grid: &Arc<Grid>,
    queries: &[GridFunction<f64>],
    subsets: &[IndexSubset],
    policy: &OraclePolicy,
    seed: u64,
) -> Result<(Vec<Vec<SideCounts>>, bool)> {
    if !policy.allow_monte_carlo {
        return Err(Error::OracleUnavailable(format!(
            "no exact oracle for {:?} and Monte Carlo references are disabled",
            model.process
        )));
    }
    if policy.n_ref < MIN_ORACLE_PATHS {
        return Err(Error::invalid(format!("oracle needs n_ref >= {MIN_ORACLE_PATHS}")));
    }
    let work = policy.n_ref.saturating_mul(grid.len() as u64);
    if work > policy.budget {
        return Err(Error::ResourceCap(format!(
            "oracle budget exceeded: reference run needs {work} path values, budget {}",
            policy.budget
        )));
    }
    let key = CacheKey {
        version: 1,
        model,
        grid,
        queries: queries.iter().map(|q| q.values()).collect(),
        subsets: subsets.iter().map(IndexSubset::indices).collect(),
        n_ref: policy.n_ref,
        seed,
    };
    let cache_file = match &policy.cache_dir {
        Some(dir) => Some(dir.join(format!("{}.json", io::config_hash(&key)?))),
        None => None,
    };
    if let Some(path) = &cache_file {
        if let Ok(bytes) = std::fs::read(path) {
            if let Ok(counts) = serde_json::from_slice::<Vec<Vec<SideCounts>>>(&bytes) {
                return Ok((counts, true));
            }
        }
    }
    let batch = Batch::from_index_subsets(queries, subsets, grid.len());
    let counts = batch.count_model(model, grid, seed, policy.n_ref, true);
    if let Some(path) = &cache_file {
        std::fs::create_dir_all(path.parent().expect("cache file has a directory"))?;
        let bytes = serde_json::to_vec(&counts)?;
        let dir = path.parent().expect("cache file has a directory");
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        std::io::Write::write_all(&mut tmp, &bytes)?;
        // A concurrent writer may have produced the same entry first; either copy is valid.
        let _ = tmp.persist_noclobber(path);
    }
    Ok((counts, false))
}

/// Closed-form or grid-exact oracles on one subset, if the model has one.
fn exact_sides(
    model: &ProcessModel,
    grid: &Grid,
    idx: &[usize],
    queries: &[GridFunction<f64>],
    policy: &OraclePolicy,
) -> Result<Option<Vec<SideOracle>>> {
    let Some(points) = grid.line_points() else {
        return Ok(None);
    };
    let times: Vec<f64> = idx.iter().map(|&i| points[i]).collect();
    let hs: Vec<Vec<f64>> = queries.iter().map(|q| idx.iter().map(|&i| q.value(i)).collect()).collect();
    let z = model.smoothing;

    let stable = matches!(model.process, ProcessKind::BrownianMotion | ProcessKind::SymmetricStable { .. });
    if stable && z.is_none() {
        if let Some(k) = equally_spaced_steps(&times) {
            if hs.iter().all(|h| h.iter().all(|v| *v == 0.0)) {
                let p = sparre_andersen_exact(k as u64);
                let both = if k == 0 { 1.0 } else { 0.0 };
                return Ok(Some(vec![SideOracle::exact(p, p, both, OracleSource::SparreAndersen); hs.len()]));
            }
        }
    }
    if model.is_brownian() && times.len() <= policy.walk_max_steps + 1 {
        return brownian_oracles(z, &times, &hs).map(Some);
    }
    match (&model.process, z) {
        (ProcessKind::ProductSequence { marginals }, _) => {
            let picked: Vec<MarginalSpec> = idx.iter().map(|&i| marginals[i].clone()).collect();
            product_oracles(&picked, z, &hs)
        }
        (ProcessKind::Poisson { lambda }, None) => {
            Ok(Some(hs.iter().map(|h| poisson_sides(*lambda, &times, h)).collect()))
        }
        _ => Ok(None),
    }
}

/// Number of steps when `times` are `Δ, 2Δ, ...` or `0, Δ, 2Δ, ...`.
fn equally_spaced_steps(times: &[f64]) -> Option<usize> {
    if times == [0.0] {
        return Some(0);
    }
    let start = usize::from(times[0] == 0.0);
    let rest = &times[start..];
    let delta = rest[0];
    let ok = rest.iter().enumerate().all(|(k, t)| (t - delta * (k + 1) as f64).abs() <= 1e-12 * t.max(1.0));
    ok.then_some(rest.len())
}

fn brownian_oracles(z: Option<SmoothingDensity>, times: &[f64], hs: &[Vec<f64>]) -> Result<Vec<SideOracle>> {
    let opts = WalkOptions::default();
    let point_start = z.is_none() && times.len() == 1 && times[0] == 0.0;
    let both = |h: &[f64]| if point_start && h[0] == 0.0 { 1.0 } else { 0.0 };
    let constants: Option<Vec<f64>> = hs.iter().map(|h| h.iter().all(|v| *v == h[0]).then_some(h[0])).collect();
    if let Some(levels) = constants {
        let sides = brownian_constant_sides(z, times, &levels, &opts)?;
        return Ok(sides
            .into_iter()
            .zip(hs)
            .map(|((u, l), h)| SideOracle::exact(u, l, both(h), OracleSource::BrownianWalk))
            .collect());
    }
    hs.iter()
        .map(|h| {
            let (u, l) = brownian_sides(z, times, h, &opts)?;
            Ok(SideOracle::exact(u, l, both(h), OracleSource::BrownianWalk))
        })
        .collect()
}

fn product_oracles(
    marginals: &[MarginalSpec],
    z: Option<SmoothingDensity>,
    hs: &[Vec<f64>],
) -> Result<Option<Vec<SideOracle>>> {
    match z {
        None => hs
            .iter()
            .map(|h| {
                let s = product_sides(marginals, h)?;
                let both: f64 = marginals
                    .iter()
                    .zip(h)
                    .map(|(m, a)| {
                        let (f, f_left) = m.cdf(*a);
                        f - f_left
                    })
                    .product();
                Ok(SideOracle::exact(s.upper, s.lower, both, OracleSource::ProductFormula))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(d) => {
            let atoms: Option<Vec<f64>> = marginals
                .iter()
                .map(|m| match m {
                    MarginalSpec::PointMass { x } => Some(*x),
                    _ => None,
                })
                .collect();
            if let Some(atoms) = atoms {
                // X_t = x_t + Z: one-dimensional in Z.
                return Ok(Some(
                    hs.iter()
                        .map(|h| {
                            let lo = h.iter().zip(&atoms).map(|(a, x)| a - x).fold(f64::NEG_INFINITY, f64::max);
                            let hi = h.iter().zip(&atoms).map(|(a, x)| a - x).fold(f64::INFINITY, f64::min);
                            SideOracle::exact(d.sf(lo), d.cdf(hi), 0.0, OracleSource::ProductFormula)
                        })
                        .collect(),
                ));
            }
            if matches!(d, SmoothingDensity::Cauchy { .. }) {
                return Ok(None);
            }
            hs.iter().map(|h| smoothed_product(marginals, d, h)).collect::<Result<Vec<_>>>().map(Some)
        }
    }
}

/// `∫ ∏_t P(Y_t ≥ h_t − z) f_Z(z) dz` and its mirror, by split Simpson.
fn smoothed_product(marginals: &[MarginalSpec], d: SmoothingDensity, h: &[f64]) -> Result<SideOracle> {
    let width = 40.0 * d.scale();
    // The smoothing density itself may have a kink at 0.
    let mut breaks = vec![0.0];
    for (m, a) in marginals.iter().zip(h) {
        collect_breaks(m, *a, &mut breaks);
    }
    breaks.retain(|b| b.abs() < width);
    let upper = |z: f64| -> f64 {
        let log: f64 = marginals.iter().zip(h).map(|(m, a)| (1.0 - m.cdf(a - z).1).ln()).sum();
        log.exp() * d.pdf(z)
    };
    let lower = |z: f64| -> f64 {
        let log: f64 = marginals.iter().zip(h).map(|(m, a)| m.cdf(a - z).0.ln()).sum();
        log.exp() * d.pdf(z)
    };
    let u = adaptive_simpson_split(upper, -width, width, &breaks, 1e-10)?;
    let l = adaptive_simpson_split(lower, -width, width, &breaks, 1e-10)?;
    Ok(SideOracle::exact(u.clamp(0.0, 1.0), l.clamp(0.0, 1.0), 0.0, OracleSource::ProductFormula))
}

/// `z` values where `P(Y ≥ a − z)` has a jump or kink.
fn collect_breaks(m: &MarginalSpec, a: f64, out: &mut Vec<f64>) {
    match m {
        MarginalSpec::Gaussian { .. } => {}
        MarginalSpec::PointMass { x } => out.push(a - x),
        MarginalSpec::TwoPoint { c, .. } => out.extend([a + c, a, a - c]),
        MarginalSpec::Uniform { a: lo, b: hi } => out.extend([a - lo, a - hi]),
        MarginalSpec::MixtureAtomContinuous { atom, continuous, .. } => {
            out.push(a - atom);
            collect_breaks(continuous, a, out);
        }
    }
}

/// Exact side probabilities of a rate-`lambda` Poisson process at `times`,
/// by propagating the count distribution and removing violating states.
pub fn poisson_sides(lambda: f64, times: &[f64], h: &[f64]) -> SideOracle {
    let t_last = times[times.len() - 1];
    let mean = lambda * t_last;
    let cap = (mean + 20.0 * mean.sqrt() + 40.0).ceil() as usize;
    let run = |keep: &dyn Fn(usize, f64) -> bool| -> f64 {
        let mut dist = vec![0.0; cap + 1];
        dist[0] = 1.0;
        let mut prev = 0.0;
        for (&t, &hk) in times.iter().zip(h) {
            let mu = lambda * (t - prev);
            prev = t;
            if mu > 0.0 {
                let pmf = poisson_pmf(mu, cap);
                let mut next = vec![0.0; cap + 1];
                for (i, p) in dist.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                    for (j, q) in pmf.iter().take(cap + 1 - i).enumerate() {
                        next[i + j] += p * q;
                    }
                }
                dist = next;
            }
            for (count, p) in dist.iter_mut().enumerate() {
                if !keep(count, hk) {
                    *p = 0.0;
                }
            }
        }
        dist.iter().sum::<f64>().clamp(0.0, 1.0)
    };
    let upper = run(&|k, hk| k as f64 >= hk);
    let lower = run(&|k, hk| k as f64 <= hk);
    let both = run(&|k, hk| k as f64 == hk);
    SideOracle::exact(upper, lower, both, OracleSource::PoissonCounts)
}

fn poisson_pmf(mu: f64, cap: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(cap + 1);
    let mut log_p = -mu;
    for k in 0..=cap {
        if k > 0 {
            log_p += mu.ln() - (k as f64).ln();
        }
        pmf.push(log_p.exp());
    }
    pmf
}
