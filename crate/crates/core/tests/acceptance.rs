//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are fixed here and never loosened.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrdepth::analysis::{
    c2_gap_demo, consistency_experiment, limit_law_demo, rate_experiment, subset_consistency_experiment,
    zero_depth_trend, ConsistencyConfig, ExperimentReport, FamilyConfig, GapConfig, LimitLawConfig, OraclePolicy,
    Query, RateConfig, SubsetConfig, ZeroTrendConfig,
};
use hrdepth::depth::{
    empirical_depth_subset, empirical_increment_depth, exact_product_depth, nasc_verdict, sparre_andersen_exact,
    streaming_counts, TailModel, ZeroDepthVerdict,
};
use hrdepth::gridfn::compare;
use hrdepth::models::simulate;
use hrdepth::smoothing::tv_shift_check;
use hrdepth::{GridFunction, IndexSubset, MarginalSpec, ProcessKind, ProcessModel, Result, SmoothingDensity};

const SEED: u64 = 20_240_601;

type Verdict = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Verdict);

fn gaussian(sigma: f64) -> SmoothingDensity {
    SmoothingDensity::gaussian(sigma).expect("positive scale")
}

fn smoothed_bm() -> ProcessModel {
    ProcessModel::smoothed(ProcessKind::BrownianMotion, gaussian(1.0))
}

fn zero_depth(model: &ProcessModel, m: usize, n: u64, seed: u64) -> Result<f64> {
    let grid = model.default_grid(m)?;
    let h = vec![0.0; grid.len()];
    Ok(streaming_counts(model, &grid, &h, None, n, seed)?.depth())
}

fn sparre_match(kind: ProcessKind, seed: u64) -> Result<(f64, bool)> {
    let d = zero_depth(&ProcessModel::new(kind), 10, 200_000, seed)?;
    Ok((d, (d - 0.176197).abs() <= 0.003))
}

fn c1_sparre_andersen() -> Verdict {
    let start = Instant::now();
    let (d, ok) = sparre_match(ProcessKind::BrownianMotion, SEED)?;
    let secs = start.elapsed().as_secs_f64();
    let exact = sparre_andersen_exact(10);
    Ok((ok && secs < 60.0, format!("D = {d:.6}, C(20,10)/4^10 = {exact:.6}, tol 0.003, {secs:.1} s")))
}

fn c2_distribution_free() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, alpha) in [1.0, 1.5].into_iter().enumerate() {
        let (d, pass) = sparre_match(ProcessKind::SymmetricStable { alpha }, SEED + 1 + k as u64)?;
        ok &= pass;
        parts.push(format!("alpha {alpha}: D = {d:.6}"));
    }
    Ok((ok, format!("{} vs 0.176197 tol 0.003", parts.join(", "))))
}

fn c3_smoothing_fix() -> Verdict {
    let cfg = ZeroTrendConfig {
        model: smoothed_bm(),
        query: Query::default(),
        m_schedule: vec![16, 64, 256, 1024, 4096],
        n: 100_000,
        seed: SEED,
        oracle: OraclePolicy::default(),
    };
    let r = zero_depth_trend(&cfg)?;
    let last = r.trend.last().expect("non-empty trend");
    let monotone = r.trend.windows(2).all(|w| w[1].depth <= w[0].depth);
    let path: Vec<String> = r.trend.iter().map(|t| format!("m={}: {:.4}", t.m, t.depth)).collect();
    let ok = last.m == 4096 && (last.depth - 0.25).abs() <= 0.006 && monotone;
    Ok((ok, format!("{} (target 0.250 ± 0.006, monotone {monotone})", path.join(", "))))
}

fn c4_poisson() -> Verdict {
    let model = ProcessModel::new(ProcessKind::Poisson { lambda: 1.0 });
    let d = zero_depth(&model, 64, 200_000, SEED)?;
    let oracle = (-1.0f64).exp();
    Ok(((d - oracle).abs() <= 0.005, format!("D = {d:.4} vs e^-1 = {oracle:.4} tol 0.005")))
}

fn c5_exact_product() -> Verdict {
    let normals = vec![MarginalSpec::standard_normal(); 10];
    let d = exact_product_depth(&normals, &[0.0; 10])?;
    let rel = (d - 2f64.powi(-10)).abs() / 2f64.powi(-10);

    let divergent = nasc_verdict(&normals, &[0.0; 10], TailModel::Constant { q: 1.0, below_share: 0.5 })?;
    let divergent_ok = matches!(divergent, ZeroDepthVerdict::ZeroByDivergence { .. });

    // Atoms at 0 with P(Z_t ≠ 0) = 2^-t, split evenly across a normal.
    let m = 6;
    let atoms: Vec<MarginalSpec> = (1..=m)
        .map(|t| MarginalSpec::MixtureAtomContinuous {
            atom: 0.0,
            weight: 1.0 - 0.5f64.powi(t),
            continuous: Box::new(MarginalSpec::standard_normal()),
        })
        .collect();
    let tail = TailModel::Geometric { first: 0.5f64.powi(m + 1), ratio: 0.5, below_share: 0.5 };
    let oracle: f64 = (1..200).map(|t| 1.0 - 0.5 * 0.5f64.powi(t)).product();
    let positive = nasc_verdict(&atoms, &[0.0; 6], tail)?;
    let positive_ok = matches!(positive, ZeroDepthVerdict::Positive { value } if (value - oracle).abs() <= 1e-12);
    Ok((
        rel <= 1e-12 && divergent_ok && positive_ok,
        format!("2^-10 rel err {rel:.1e}; continuous -> divergence {divergent_ok}; summable atoms -> {positive:?} vs {oracle:.12}"),
    ))
}

fn c6_shift_bound() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [0.01, 0.1, 1.0] {
        let s = tv_shift_check(gaussian(1.0), delta)?;
        ok &= s.lhs <= delta * 0.797885;
        if delta == 0.1 {
            ok &= (0.0795..=0.0800).contains(&s.lhs);
        }
        parts.push(format!("delta {delta}: lhs {:.6} <= {:.6}", s.lhs, delta * 0.797885));
    }
    Ok((ok, parts.join("; ")))
}

fn c7_zero_trend() -> Verdict {
    let cfg = ZeroTrendConfig {
        model: ProcessModel::brownian(),
        query: Query::default(),
        m_schedule: vec![4, 16, 64, 256],
        n: 100_000,
        seed: SEED,
        oracle: OraclePolicy::default(),
    };
    let r = zero_depth_trend(&cfg)?;
    let within = r.trend.iter().all(|t| t.within_3se == Some(true));
    let exact = r.trend.iter().all(|t| t.oracle.is_some_and(|o| (o - sparre_andersen_exact(t.m as u64)).abs() < 1e-12));
    let monotone = r.trend.windows(2).all(|w| w[1].oracle < w[0].oracle && w[1].depth <= w[0].depth);
    let rows: Vec<String> =
        r.trend.iter().map(|t| format!("m={}: {:.5} vs {:.5}", t.m, t.depth, t.oracle.unwrap_or(f64::NAN))).collect();
    Ok((within && exact && monotone, rows.join(", ")))
}

fn medians(r: &ExperimentReport) -> String {
    r.rows.iter().map(|row| format!("n={}: {:.4}", row.n, row.median)).collect::<Vec<_>>().join(", ")
}

fn c8_consistency() -> Verdict {
    let start = Instant::now();
    let cfg = ConsistencyConfig {
        model: smoothed_bm(),
        family: FamilyConfig::Constants { radius: 2.05 },
        eps: 0.05,
        m: 64,
        n_schedule: vec![100, 1_000, 10_000],
        reps: 100,
        seed: SEED,
        oracle: OraclePolicy::default(),
    };
    let r = consistency_experiment(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let (lo, hi) = (r.median_at(100).unwrap_or(f64::NAN), r.median_at(10_000).unwrap_or(f64::NAN));
    let ok = r.net_size == Some(41) && hi < 0.02 && hi < lo && secs < 600.0;
    Ok((ok, format!("{} net {:?}, {secs:.1} s", medians(&r), r.net_size)))
}

fn c9_rate() -> Verdict {
    let cfg = RateConfig {
        model: smoothed_bm(),
        family: FamilyConfig::Constants { radius: 1.1 },
        eps: 0.1,
        m: 64,
        n_schedule: vec![100, 400, 1_600],
        reps: 500,
        seed: SEED,
        r_grid: None,
        oracle: OraclePolicy::default(),
    };
    let r = rate_experiment(&cfg)?;
    let q: Vec<f64> = r.rows.iter().map(|row| row.q95).collect();
    let stable = q.iter().flat_map(|a| q.iter().map(move |b| a / b)).all(|ratio| (0.7..=1.4).contains(&ratio));
    let fit = r.tail_fit;
    let fit_ok = fit.is_some_and(|f| f.slope < 0.0 && f.r_squared >= 0.9);
    let ok = r.net_size == Some(11) && stable && fit_ok;
    let fit_text = fit.map_or("no fit".to_string(), |f| {
        format!("slope {:.3}, R^2 {:.3} over {} points", f.slope, f.r_squared, f.points)
    });
    let q_text: Vec<String> = q.iter().map(|v| format!("{v:.3}")).collect();
    Ok((ok, format!("q95 [{}], {fit_text}", q_text.join(", "))))
}

fn c10_limit_law() -> Verdict {
    let cfg = LimitLawConfig {
        model: smoothed_bm(),
        query: Query::default(),
        m: 256,
        n: 4096,
        reps: 2000,
        seed: SEED,
        oracle: OraclePolicy::default(),
    };
    let r = limit_law_demo(&cfg)?;
    let l = r.limit_law.expect("limit-law summary");
    let target = -0.2821;
    let ok = l.tie && (l.mean - target).abs() <= 3.0 * l.se_mean;
    Ok((
        ok,
        format!(
            "mean {:.4} ± {:.4} (SE) vs {target}; grid oracle {:.4}, cross-cov {:.4}",
            l.mean, l.se_mean, l.oracle_mean, l.cross_covariance
        ),
    ))
}

fn c11_subset() -> Verdict {
    let cfg = SubsetConfig {
        model: smoothed_bm(),
        family: FamilyConfig::Constants { radius: 2.05 },
        eps: 0.05,
        m: 50,
        r: 3,
        subsets: 200,
        n_schedule: vec![100, 1_000, 10_000],
        reps: 30,
        seed: SEED,
        oracle: OraclePolicy::default(),
    };
    let r = subset_consistency_experiment(&cfg)?;
    let decreasing = r.rows.windows(2).all(|w| w[1].median < w[0].median);
    Ok((decreasing && r.subsets_sampled == Some(200), format!("{} over {:?} subsets", medians(&r), r.subsets_sampled)))
}

fn subset_monotonicity(cases: usize) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut violations = 0;
    for case in 0..cases {
        let m = rng.random_range(2..24);
        let ens = simulate::<f64>(&ProcessModel::brownian(), 40, m, SEED + case as u64)?;
        let grid = ens.grid().clone();
        let shift = rng.random_range(-0.5..0.5);
        let h = GridFunction::from_fn(grid.clone(), |t, _| shift + 0.3 * (7.0 * t).sin())?;
        let w = grid.len();
        let big_len = rng.random_range(1..=w);
        let big = sample(&mut rng, w, big_len).into_vec();
        let small_len = rng.random_range(1..=big_len);
        let small: Vec<usize> = big[..small_len].to_vec();
        let (big, small) = (IndexSubset::new(big, w)?, IndexSubset::new(small, w)?);
        for path in ens.paths() {
            let x = GridFunction::new(grid.clone(), path.to_vec())?;
            let (db, ds) = (compare(&x, &h, &big)?, compare(&x, &h, &small)?);
            violations += usize::from((db.above && !ds.above) || (db.below && !ds.below));
        }
        let (db, ds) = (empirical_depth_subset(&ens, &h, &big)?, empirical_depth_subset(&ens, &h, &small)?);
        violations += usize::from(db.value > ds.value);
    }
    Ok(violations)
}

fn c12_properties() -> Verdict {
    let monotone_violations = subset_monotonicity(1000)?;

    let mm = consistency_experiment(&ConsistencyConfig {
        model: smoothed_bm(),
        family: FamilyConfig::Constants { radius: 1.0 },
        eps: 0.1,
        m: 32,
        n_schedule: vec![50, 500],
        reps: 50,
        seed: SEED,
        oracle: OraclePolicy::default(),
    })?;
    let min_min = mm.min_min_violations;

    let ens = simulate::<f64>(&ProcessModel::brownian(), 100_000, 16, SEED)?;
    let zero = GridFunction::constant(Arc::clone(ens.grid()), 0.0);
    let inc = empirical_increment_depth(&ens, &zero, &[(0, 4), (4, 8), (8, 12), (12, 16)])?;
    let inc_se = (0.0625f64 * 0.9375 / 100_000.0).sqrt();
    let inc_ok = (inc.value - 0.0625).abs() <= 3.0 * inc_se;

    let mut gaps = Vec::new();
    for kind in [ProcessKind::ReflectedBm, ProcessKind::IntegratedPoisson { lambda: 1.0 }] {
        let g = c2_gap_demo(&GapConfig {
            model: ProcessModel::new(kind),
            h1: Query::Constant { value: 0.0 },
            h2: Query::Constant { value: 0.01 },
            m: 64,
            n: 10_000,
            seed: SEED,
        })?;
        gaps.push(g.gap.expect("gap estimate").gap);
    }
    let gap_ok = gaps.iter().all(|g| (g - 1.0).abs() <= 0.01);
    let ok = monotone_violations == 0 && min_min == Some(0) && inc_ok && gap_ok;
    Ok((
        ok,
        format!(
            "subset monotonicity violations {monotone_violations}/1000 cases; min-min violations {min_min:?}; \
             increment depth {:.5} vs 0.0625 (3 SE {:.5}); C2 gaps {gaps:?}",
            inc.value,
            3.0 * inc_se
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("Sparre-Andersen match, BM m=10", c1_sparre_andersen),
        ("distribution-freeness, stable alpha 1 and 1.5", c2_distribution_free),
        ("smoothed BM depth of zero, m=4096", c3_smoothing_fix),
        ("Poisson depth of zero", c4_poisson),
        ("exact product depth and zero-depth verdicts", c5_exact_product),
        ("shift bound for Gaussian(1)", c6_shift_bound),
        ("zero-depth trend against C(2m,m)/4^m", c7_zero_trend),
        ("uniform consistency over constants net", c8_consistency),
        ("sqrt(n) rate and Gaussian tail", c9_rate),
        ("limit law at a tie", c10_limit_law),
        ("finite-subset consistency", c11_subset),
        ("property suites", c12_properties),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        let status = if pass { "PASS" } else { "FAIL" };
        println!("{status} {:>2} {name}: {detail} [{:.1} s]", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
