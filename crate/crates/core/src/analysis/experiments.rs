use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::batch::Batch;
use super::oracle::{oracle_table, OracleSource, OracleTable, SideOracle};
use super::stats::{self, ErrorRow};
use super::*;
use crate::depth::walk::smoothed_brownian_zero_depth;
use crate::depth::SideCounts;
use crate::gridfn::{Grid, GridFunction, IndexSubset};
use crate::models::{ProcessKind, ProcessModel};
use crate::rng::{self, DOMAIN_SUBSETS};
use crate::special::gauss_min_mean;
use crate::{Error, Result};

fn check_counts(n_schedule: &[u64], reps: usize) -> Result<Vec<u64>> {
    if n_schedule.is_empty() || n_schedule.contains(&0) {
        return Err(Error::invalid("n_schedule must be non-empty with positive sizes"));
    }
    if reps == 0 {
        return Err(Error::invalid("reps must be positive"));
    }
    let mut sorted = n_schedule.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted)
}

fn model_grid(model: &ProcessModel, m: usize) -> Result<Arc<Grid>> {
    model.validate()?;
    if m == 0 {
        return Err(Error::invalid("grid needs at least one step"));
    }
    Ok(Arc::new(model.default_grid(m)?))
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Continuum depth of `h ≡ c` where a closed form is known.
fn continuum_reference(model: &ProcessModel, query: &Query) -> Option<OracleRef> {
    let c = query.as_constant()?;
    let label = format!("continuum depth of h = {c}");
    if model.has_zero_continuum_depth() {
        return Some(OracleRef { label, value: 0.0, source: OracleSource::SparreAndersen, se: 0.0 });
    }
    match (&model.process, model.smoothing) {
        (ProcessKind::BrownianMotion, Some(z)) if c == 0.0 => smoothed_brownian_zero_depth(z)
            .ok()
            .map(|value| OracleRef { label, value, source: OracleSource::BrownianWalk, se: 0.0 }),
        (ProcessKind::Poisson { lambda }, None) if c == 0.0 => {
            Some(OracleRef { label, value: (-lambda).exp(), source: OracleSource::PoissonCounts, se: 0.0 })
        }
        _ => None,
    }
}

/// Strided sub-grid indices of a nested schedule on the finest grid.
fn nested_subsets(model: &ProcessModel, schedule: &[usize], finest: usize) -> Option<Vec<IndexSubset>> {
    if matches!(model.process, ProcessKind::ProductSequence { .. })
        || schedule.iter().any(|m| !finest.is_multiple_of(*m))
    {
        return None;
    }
    let lattice = matches!(model.process, ProcessKind::BrownianSheet);
    let side = finest + 1;
    let width = if lattice { side * side } else { side };
    schedule
        .iter()
        .map(|&m| {
            let s = finest / m;
            let axis: Vec<usize> = (0..=m).map(|i| i * s).collect();
            let idx =
                if lattice { axis.iter().flat_map(|i| axis.iter().map(move |j| i * side + j)).collect() } else { axis };
            IndexSubset::new(idx, width).ok()
        })
        .collect()
}

pub fn zero_depth_trend(cfg: &ZeroTrendConfig) -> Result<ExperimentReport> {
    let config = ExperimentConfig::ZeroTrend(cfg.clone());
    let mut report = ExperimentReport::new(&config)?;
    if cfg.m_schedule.is_empty() || cfg.m_schedule.contains(&0) || cfg.n == 0 {
        return Err(Error::invalid("zero-trend needs a non-empty m_schedule of positive sizes and n > 0"));
    }
    let mut schedule = cfg.m_schedule.clone();
    schedule.sort_unstable();
    schedule.dedup();
    let finest = *schedule.last().expect("schedule is non-empty");
    let fine_grid = model_grid(&cfg.model, finest)?;

    let counts: Vec<SideCounts> = match nested_subsets(&cfg.model, &schedule, finest) {
        Some(subsets) => {
            let h = cfg.query.on(&fine_grid)?;
            let batch = Batch::from_index_subsets(&[h], &subsets, fine_grid.len());
            batch.count_model(&cfg.model, &fine_grid, cfg.seed, cfg.n, true).into_iter().map(|row| row[0]).collect()
        }
        None => schedule
            .iter()
            .map(|&m| {
                let grid = model_grid(&cfg.model, m)?;
                let h = cfg.query.on(&grid)?;
                Ok(Batch::new(&[h], vec![None]).count_model(&cfg.model, &grid, cfg.seed, cfg.n, true)[0][0])
            })
            .collect::<Result<_>>()?,
    };

    for (&m, c) in schedule.iter().zip(&counts) {
        let grid = model_grid(&cfg.model, m)?;
        let h = cfg.query.on(&grid)?;
        let oracle =
            match oracle_table(&cfg.model, &grid, &[h], &[IndexSubset::full(grid.len())], &cfg.oracle, cfg.seed) {
                Ok(t) => Some(t.sides[0][0]),
                Err(Error::ResourceCap(_) | Error::OracleUnavailable(_)) => {
                    report.flag(Flag::OracleSkipped);
                    None
                }
                Err(e) => return Err(e),
            };
        let depth = c.depth();
        let se_p = oracle.map_or(depth, |o| o.depth());
        let se = binomial_se(se_p, c.n);
        if oracle.is_some_and(|o| !o.is_exact()) {
            report.flag(Flag::MonteCarloOracle);
        }
        report.trend.push(TrendRow {
            m,
            grid_points: grid.len(),
            depth,
            count_above: c.above,
            count_below: c.below,
            n: c.n,
            se: binomial_se(depth, c.n),
            oracle: oracle.map(|o| o.depth()),
            oracle_source: oracle.map(|o| o.source),
            within_3se: oracle.map(|o| (depth - o.depth()).abs() <= 3.0 * (se * se + o.se * o.se).sqrt()),
        });
    }
    if cfg.model.has_zero_continuum_depth() {
        report.flag(Flag::DegenerateContinuumDepth);
    }
    report.oracles.extend(continuum_reference(&cfg.model, &cfg.query));
    Ok(report)
}

struct SupRun {
    rows: Vec<ErrorRow>,
    per_rep: Vec<RepStat>,
    samples: Vec<f64>,
    violations: u64,
}

/// For each `n` and replication, `sup |D_n − D|` over all (subset, query)
/// pairs, optionally scaled by `√n`.
#[allow(clippy::too_many_arguments)]
fn sup_errors(
    model: &ProcessModel,
    grid: &Arc<Grid>,
    queries: &[GridFunction<f64>],
    subsets: &[IndexSubset],
    table: &OracleTable,
    n_schedule: &[u64],
    reps: usize,
    seed: u64,
    root_n: bool,
) -> SupRun {
    let batch = Batch::from_index_subsets(queries, subsets, grid.len());
    let mut run = SupRun { rows: Vec::new(), per_rep: Vec::new(), samples: Vec::new(), violations: 0 };
    for (a, &n) in n_schedule.iter().enumerate() {
        let results: Vec<(f64, u64)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let counts = batch.count_model(model, grid, rng::derive_seed(seed, &[a as u64, rep as u64]), n, false);
                let mut sup = 0.0f64;
                let mut violations = 0;
                for (row, oracles) in counts.iter().zip(&table.sides) {
                    for (c, o) in row.iter().zip(oracles) {
                        let err = (c.depth() - o.depth()).abs();
                        let bound = (c.above_fraction() - o.upper).abs() + (c.below_fraction() - o.lower).abs();
                        violations += u64::from(err > bound + 1e-12);
                        sup = sup.max(err);
                    }
                }
                (if root_n { (n as f64).sqrt() * sup } else { sup }, violations)
            })
            .collect();
        let values: Vec<f64> = results.iter().map(|r| r.0).collect();
        run.violations += results.iter().map(|r| r.1).sum::<u64>();
        run.rows.push(ErrorRow::from_values(n, &values));
        run.per_rep.extend(values.iter().enumerate().map(|(rep, v)| RepStat { n, rep, value: *v }));
        run.samples.extend(values);
    }
    run
}

fn record_table(report: &mut ExperimentReport, table: &OracleTable, queries: &[GridFunction<f64>]) {
    if table.sides.iter().flatten().any(|o| !o.is_exact()) {
        report.flag(Flag::MonteCarloOracle);
    }
    if table.sides.len() == 1 {
        for (q, o) in queries.iter().zip(&table.sides[0]) {
            let label = match q.as_constant() {
                Some(c) => format!("D(h = {c:.6})"),
                None => format!("D(h, |h| = {:.6})", crate::gridfn::sup_norm(q)),
            };
            report.oracles.push(OracleRef { label, value: o.depth(), source: o.source, se: o.se });
        }
    }
}

pub fn consistency_experiment(cfg: &ConsistencyConfig) -> Result<ExperimentReport> {
    let config = ExperimentConfig::Consistency(cfg.clone());
    let mut report = ExperimentReport::new(&config)?;
    let n_schedule = check_counts(&cfg.n_schedule, cfg.reps)?;
    let grid = model_grid(&cfg.model, cfg.m)?;
    let queries = cfg.family.net(&grid, cfg.eps)?;
    let full = [IndexSubset::full(grid.len())];
    let table = oracle_table(&cfg.model, &grid, &queries, &full, &cfg.oracle, cfg.seed)?;
    let run = sup_errors(&cfg.model, &grid, &queries, &full, &table, &n_schedule, cfg.reps, cfg.seed, false);
    record_table(&mut report, &table, &queries);
    report.rows = run.rows;
    report.per_rep = run.per_rep;
    report.min_min_violations = Some(run.violations);
    report.net_size = Some(queries.len());
    report.modulus_correction = cfg.model.smoothing.map(|z| 2.0 * cfg.eps * z.grad_l1());
    if cfg.model.has_zero_continuum_depth() {
        report.flag(Flag::DegenerateContinuumDepth);
    }
    Ok(report)
}

/// Number of thresholds in an automatic tail grid.
const AUTO_TAIL_POINTS: usize = 12;

pub fn rate_experiment(cfg: &RateConfig) -> Result<ExperimentReport> {
    let config = ExperimentConfig::Rate(cfg.clone());
    let mut report = ExperimentReport::new(&config)?;
    let n_schedule = check_counts(&cfg.n_schedule, cfg.reps)?;
    let grid = model_grid(&cfg.model, cfg.m)?;
    let queries = cfg.family.net(&grid, cfg.eps)?;
    let full = [IndexSubset::full(grid.len())];
    let table = oracle_table(&cfg.model, &grid, &queries, &full, &cfg.oracle, cfg.seed)?;
    let run = sup_errors(&cfg.model, &grid, &queries, &full, &table, &n_schedule, cfg.reps, cfg.seed, true);
    record_table(&mut report, &table, &queries);
    report.rows = run.rows;
    report.per_rep = run.per_rep;
    report.min_min_violations = Some(run.violations);
    report.net_size = Some(queries.len());

    let all_zero = table.sides[0].iter().all(|o| o.depth() <= 1e-12);
    if cfg.model.has_zero_continuum_depth() {
        report.flag(Flag::DegenerateContinuumDepth);
    }
    if all_zero {
        report.flag(Flag::AllDepthsZero);
        report.flag(Flag::NoTailFit);
        return Ok(report);
    }
    let r_grid = match &cfg.r_grid {
        Some(r) if !r.is_empty() => r.clone(),
        _ => stats::auto_r_grid(&run.samples, AUTO_TAIL_POINTS, 0.5, 0.995),
    };
    report.tail = stats::tail_table(&run.samples, &r_grid);
    report.tail_fit = stats::fit_tail(&report.tail);
    if report.tail_fit.is_none() {
        report.flag(Flag::NoTailFit);
    }
    Ok(report)
}

pub fn limit_law_demo(cfg: &LimitLawConfig) -> Result<ExperimentReport> {
    let config = ExperimentConfig::LimitLaw(cfg.clone());
    let mut report = ExperimentReport::new(&config)?;
    check_counts(&[cfg.n], cfg.reps)?;
    let grid = model_grid(&cfg.model, cfg.m)?;
    let h = cfg.query.on(&grid)?;
    let table = oracle_table(
        &cfg.model,
        &grid,
        std::slice::from_ref(&h),
        &[IndexSubset::full(grid.len())],
        &cfg.oracle,
        cfg.seed,
    )?;
    let o: SideOracle = table.sides[0][0];
    record_table(&mut report, &table, std::slice::from_ref(&h));

    let gap = (o.upper - o.lower).abs();
    let tie = if o.is_exact() {
        gap <= 1e-9 * o.upper.max(o.lower) + 1e-15
    } else {
        let ambiguous = gap <= 3.0 * std::f64::consts::SQRT_2 * o.se;
        if ambiguous {
            report.flag(Flag::AmbiguousTie);
        }
        ambiguous
    };

    let batch = Batch::new(&[h], vec![None]);
    let n = cfg.n;
    let depth = o.depth();
    let counts: Vec<SideCounts> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| batch.count_model(&cfg.model, &grid, rng::derive_seed(cfg.seed, &[rep as u64]), n, false)[0][0])
        .collect();
    let dev: Vec<f64> = counts.iter().map(|c| (n as f64).sqrt() * (c.depth() - depth)).collect();
    report.per_rep = dev.iter().enumerate().map(|(rep, v)| RepStat { n, rep, value: *v }).collect();

    let total = (n * cfg.reps as u64) as f64;
    let f_hat = counts.iter().map(|c| c.above).sum::<u64>() as f64 / total;
    let g_hat = counts.iter().map(|c| c.below).sum::<u64>() as f64 / total;
    let both_hat = counts.iter().map(|c| c.both).sum::<u64>() as f64 / total;
    let cross_covariance = both_hat - f_hat * g_hat;

    let mean = stats::mean(&dev);
    let variance = if dev.len() > 1 { stats::variance(&dev) } else { 0.0 };
    let se_mean = (variance / dev.len() as f64).sqrt();
    let (oracle_mean, oracle_variance) = if tie {
        let var_diff = o.upper * (1.0 - o.upper) + o.lower * (1.0 - o.lower) - 2.0 * cross_covariance;
        (gauss_min_mean(var_diff.max(0.0)), var_diff)
    } else {
        (0.0, depth * (1.0 - depth))
    };
    let z_mean = if se_mean > 0.0 { (mean - oracle_mean) / se_mean } else { 0.0 };
    report.limit_law = Some(LimitLawSummary {
        upper: o.upper,
        lower: o.lower,
        both: o.both,
        depth,
        tie,
        reps: cfg.reps,
        mean,
        se_mean,
        variance,
        oracle_mean,
        oracle_variance,
        cross_covariance,
        z_mean,
    });
    Ok(report)
}

/// `count` random subsets with cardinality uniform on `1..=r`.
pub(crate) fn sample_subsets(width: usize, r: usize, count: usize, seed: u64) -> Result<Vec<IndexSubset>> {
    let mut rng = rng::stream(seed, DOMAIN_SUBSETS, 0);
    (0..count)
        .map(|_| {
            let size = rng.random_range(1..=r);
            IndexSubset::new(sample(&mut rng, width, size).into_vec(), width)
        })
        .collect()
}

pub fn subset_consistency_experiment(cfg: &SubsetConfig) -> Result<ExperimentReport> {
    let config = ExperimentConfig::Subset(cfg.clone());
    let mut report = ExperimentReport::new(&config)?;
    let n_schedule = check_counts(&cfg.n_schedule, cfg.reps)?;
    let grid = model_grid(&cfg.model, cfg.m)?;
    if cfg.r == 0 || cfg.r > grid.len() || cfg.subsets == 0 {
        return Err(Error::invalid(format!(
            "subset experiment needs 1 <= r <= {} and at least one subset",
            grid.len()
        )));
    }
    let queries = cfg.family.net(&grid, cfg.eps)?;
    let subsets = sample_subsets(grid.len(), cfg.r, cfg.subsets, cfg.seed)?;
    let table = oracle_table(&cfg.model, &grid, &queries, &subsets, &cfg.oracle, cfg.seed)?;
    let run = sup_errors(&cfg.model, &grid, &queries, &subsets, &table, &n_schedule, cfg.reps, cfg.seed, false);
    record_table(&mut report, &table, &queries);
    report.rows = run.rows;
    report.per_rep = run.per_rep;
    report.min_min_violations = Some(run.violations);
    report.net_size = Some(queries.len());
    report.subsets_sampled = Some(subsets.len());
    report.modulus_correction = cfg.model.smoothing.map(|z| 2.0 * cfg.eps * z.grad_l1());
    report.flag(Flag::SampledSubsets);
    Ok(report)
}

pub fn c2_gap_demo(cfg: &GapConfig) -> Result<ExperimentReport> {
    let config = ExperimentConfig::C2Gap(cfg.clone());
    let mut report = ExperimentReport::new(&config)?;
    check_counts(&[cfg.n], 1)?;
    let grid = model_grid(&cfg.model, cfg.m)?;
    let h1 = cfg.h1.on(&grid)?;
    let h2 = cfg.h2.on(&grid)?;
    if !crate::gridfn::dominance_on(h2.values(), h1.values(), None).above {
        return Err(Error::invalid("c2-gap needs h1 ⪯ h2"));
    }
    let c = Batch::new(&[h1, h2], vec![None]).count_model(&cfg.model, &grid, cfg.seed, cfg.n, true);
    let (a1, a2) = (c[0][0], c[0][1]);
    let p1 = a1.above_fraction();
    let p2 = a2.above_fraction();
    // h1 ⪯ h2 nests the events, so the gap is one binomial proportion.
    let gap = (p1 - p2).abs();
    let nonnegative_from_zero =
        matches!(cfg.model.process, ProcessKind::ReflectedBm | ProcessKind::IntegratedPoisson { .. });
    let oracle = match (cfg.h1.as_constant(), cfg.h2.as_constant()) {
        (Some(c1), Some(c2)) if nonnegative_from_zero && grid.has_origin() => {
            // inf X = Z (or 0 unsmoothed) since the path starts at 0 and stays nonnegative.
            let side = |c: f64| match cfg.model.smoothing {
                Some(z) => z.sf(c),
                None => f64::from(u8::from(c <= 0.0)),
            };
            Some((side(c1) - side(c2)).abs())
        }
        _ => None,
    };
    report.gap = Some(GapEstimate {
        p1,
        p2,
        gap,
        ci_half_width: crate::depth::DEFAULT_Z * binomial_se(gap, cfg.n),
        n: cfg.n,
        oracle,
    });
    Ok(report)
}
