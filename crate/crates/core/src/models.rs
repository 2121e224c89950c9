//! Seeded simulation of the example processes on finite grids.
//!
//! Path `i` of an ensemble is generated from its own counter-based stream
//! `(seed, path index)`, so ensembles are bit-identical for a given
//! `(model, n, grid, seed)` whatever the degree of parallelism.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridfn::{same_grid, Grid, GridFunction};
use crate::rng::{self, DOMAIN_PATHS, DOMAIN_REFINE, DOMAIN_SMOOTHING};
use crate::smoothing::SmoothingDensity;
use crate::{Error, Result, Scalar};

/// Upper limit on `n × grid points` held in memory by one ensemble.
pub const MAX_ENSEMBLE_VALUES: usize = 1 << 28;

/// Distribution of one coordinate of a product-sequence model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    PointMass {
        x: f64,
    },
    /// `P(Z = ±c) = d` each, remaining mass at 0.
    TwoPoint {
        c: f64,
        d: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// Atom at `atom` with probability `weight`, otherwise the continuous part.
    MixtureAtomContinuous {
        atom: f64,
        weight: f64,
        continuous: Box<MarginalSpec>,
    },
}

impl MarginalSpec {
    pub fn standard_normal() -> Self {
        MarginalSpec::Gaussian { mu: 0.0, sigma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            MarginalSpec::Gaussian { mu, sigma } => mu.is_finite() && sigma.is_finite() && *sigma > 0.0,
            MarginalSpec::PointMass { x } => x.is_finite(),
            MarginalSpec::TwoPoint { c, d } => c.is_finite() && *c > 0.0 && *d > 0.0 && *d <= 0.5,
            MarginalSpec::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            MarginalSpec::MixtureAtomContinuous { atom, weight, continuous } => {
                continuous.validate()?;
                if !continuous.is_continuous() {
                    return Err(Error::invalid("mixture continuous part must be Gaussian or Uniform"));
                }
                atom.is_finite() && (0.0..=1.0).contains(weight)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid marginal {self:?}")))
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, MarginalSpec::Gaussian { .. } | MarginalSpec::Uniform { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarginalSpec::Gaussian { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            MarginalSpec::PointMass { x } => *x,
            MarginalSpec::TwoPoint { c, d } => {
                let u: f64 = rng.random();
                if u < *d {
                    -c
                } else if u < 2.0 * d {
                    *c
                } else {
                    0.0
                }
            }
            MarginalSpec::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            MarginalSpec::MixtureAtomContinuous { atom, weight, continuous } => {
                if rng.random::<f64>() < *weight {
                    *atom
                } else {
                    continuous.sample(rng)
                }
            }
        }
    }

    /// `(P(Z ≤ x), P(Z < x))`.
    pub fn cdf(&self, x: f64) -> (f64, f64) {
        let step = |at: f64| -> (f64, f64) { (if x >= at { 1.0 } else { 0.0 }, if x > at { 1.0 } else { 0.0 }) };
        match self {
            MarginalSpec::Gaussian { mu, sigma } => {
                let f = crate::special::normal_cdf((x - mu) / sigma);
                (f, f)
            }
            MarginalSpec::PointMass { x: at } => step(*at),
            MarginalSpec::TwoPoint { c, d } => {
                let parts = [(-c, *d), (0.0, 1.0 - 2.0 * d), (*c, *d)];
                parts.iter().fold((0.0, 0.0), |(f, fl), (at, w)| {
                    let (s, sl) = step(*at);
                    (f + w * s, fl + w * sl)
                })
            }
            MarginalSpec::Uniform { a, b } => {
                let f = ((x - a) / (b - a)).clamp(0.0, 1.0);
                (f, f)
            }
            MarginalSpec::MixtureAtomContinuous { atom, weight, continuous } => {
                let (s, sl) = step(*atom);
                let (c, _) = continuous.cdf(x);
                (weight * s + (1.0 - weight) * c, weight * sl + (1.0 - weight) * c)
            }
        }
    }
}

/// `(P(Z ≤ x), P(Z < x))` of a marginal.
pub fn marginal_cdf(spec: &MarginalSpec, x: f64) -> (f64, f64) {
    spec.cdf(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessKind {
    BrownianMotion,
    SymmetricStable {
        alpha: f64,
    },
    /// Jump rate `lambda`: `P(no jump on [0, 1]) = exp(-lambda)`.
    Poisson {
        lambda: f64,
    },
    CompoundPoisson {
        lambda: f64,
        jump: MarginalSpec,
    },
    BrownianSheet,
    /// `max(0, B(t))`.
    ReflectedBm,
    /// Left Riemann sums of a rate-`lambda` Poisson path.
    IntegratedPoisson {
        lambda: f64,
    },
    ProductSequence {
        marginals: Vec<MarginalSpec>,
    },
}

/// A process plus optional additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessModel {
    pub process: ProcessKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingDensity>,
}

impl ProcessModel {
    pub fn new(process: ProcessKind) -> Self {
        Self { process, smoothing: None }
    }

    pub fn smoothed(process: ProcessKind, density: SmoothingDensity) -> Self {
        Self { process, smoothing: Some(density) }
    }

    pub fn brownian() -> Self {
        Self::new(ProcessKind::BrownianMotion)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match &self.process {
            ProcessKind::SymmetricStable { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 2.0) {
                    return Err(Error::invalid(format!("stable alpha must be in (0, 2], got {alpha}")));
                }
            }
            ProcessKind::Poisson { lambda } | ProcessKind::IntegratedPoisson { lambda } => positive("lambda", *lambda)?,
            ProcessKind::CompoundPoisson { lambda, jump } => {
                positive("lambda", *lambda)?;
                jump.validate()?;
            }
            ProcessKind::ProductSequence { marginals } => {
                if marginals.is_empty() {
                    return Err(Error::invalid("product sequence needs at least one marginal"));
                }
                marginals.iter().try_for_each(MarginalSpec::validate)?;
            }
            ProcessKind::BrownianMotion | ProcessKind::BrownianSheet | ProcessKind::ReflectedBm => {}
        }
        Ok(())
    }

    /// Processes started at 0 at the origin (before smoothing).
    pub fn is_tied_down(&self) -> bool {
        !matches!(self.process, ProcessKind::ProductSequence { .. })
    }

    /// Brownian motion, possibly written as the `alpha = 2` stable process.
    pub fn is_brownian(&self) -> bool {
        match self.process {
            ProcessKind::BrownianMotion => true,
            ProcessKind::SymmetricStable { alpha } => alpha == 2.0,
            _ => false,
        }
    }

    /// Unsmoothed processes whose continuum half-region depth vanishes for
    /// every query: tied-down processes with continuously distributed
    /// independent increments, and the Brownian sheet.
    pub fn has_zero_continuum_depth(&self) -> bool {
        self.smoothing.is_none()
            && matches!(
                self.process,
                ProcessKind::BrownianMotion | ProcessKind::SymmetricStable { .. } | ProcessKind::BrownianSheet
            )
    }

    /// Default grid for `m` steps (per axis for the sheet).
    pub fn default_grid(&self, m: usize) -> Result<Grid> {
        match &self.process {
            ProcessKind::BrownianSheet => Grid::uniform_lattice(m),
            ProcessKind::ProductSequence { marginals } => {
                if m != marginals.len() {
                    return Err(Error::invalid(format!(
                        "product sequence has {} coordinates but m = {m}",
                        marginals.len()
                    )));
                }
                product_grid(marginals.len())
            }
            _ => Grid::uniform(m),
        }
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        match (&self.process, grid) {
            (ProcessKind::BrownianSheet, Grid::Lattice { .. }) => Ok(()),
            (ProcessKind::BrownianSheet, _) => Err(Error::invalid("the Brownian sheet needs a lattice grid")),
            (_, Grid::Lattice { .. }) => Err(Error::invalid("one-parameter processes need a line grid")),
            (ProcessKind::ProductSequence { marginals }, g) if g.len() != marginals.len() => {
                Err(Error::GridMismatch(format!("{} marginals for a grid of {} points", marginals.len(), g.len())))
            }
            _ => Ok(()),
        }
    }

    /// Fill `out` with path `index` (smoothing included) in `f64`.
    pub fn fill_path(&self, grid: &Grid, seed: u64, index: u64, out: &mut [f64]) {
        let mut rng = rng::stream(seed, DOMAIN_PATHS, index);
        generate(&self.process, grid, &mut rng, out);
        if let Some(d) = self.smoothing {
            let z = d.sample(&mut rng::stream(seed, DOMAIN_SMOOTHING, index));
            out.iter_mut().for_each(|v| *v += z);
        }
    }
}

/// Coordinates `t = 1/m, 2/m, ..., 1` of an `m`-term product sequence.
pub fn product_grid(m: usize) -> Result<Grid> {
    Grid::line((1..=m).map(|i| i as f64 / m as f64).collect())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard symmetric stable variate (characteristic function `exp(-|u|^alpha)`)
/// by the Chambers-Mallows-Stuck transformation.
pub fn standard_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let v = PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return v.tan();
    }
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn generate(kind: &ProcessKind, grid: &Grid, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    match (kind, grid) {
        (ProcessKind::BrownianSheet, Grid::Lattice { axis1, axis2 }) => {
            let w = axis2.len();
            let mut prev1 = 0.0;
            for (i, &s) in axis1.iter().enumerate() {
                let ds = s - prev1;
                prev1 = s;
                let mut prev2 = 0.0;
                let mut row_sum = 0.0;
                for (j, &t) in axis2.iter().enumerate() {
                    let dt = t - prev2;
                    prev2 = t;
                    row_sum += (ds * dt).sqrt() * normal(rng);
                    let above = if i == 0 { 0.0 } else { out[(i - 1) * w + j] };
                    out[i * w + j] = above + row_sum;
                }
            }
        }
        (_, Grid::Line { points }) => generate_line(kind, points, rng, out),
        _ => unreachable!("grid kind checked by ProcessModel::check_grid"),
    }
}

fn generate_line(kind: &ProcessKind, t: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
    match kind {
        ProcessKind::BrownianMotion | ProcessKind::ReflectedBm => {
            let mut x = 0.0;
            let mut prev = 0.0;
            for (slot, &ti) in out.iter_mut().zip(t) {
                x += (ti - prev).sqrt() * normal(rng);
                prev = ti;
                *slot = x;
            }
            if matches!(kind, ProcessKind::ReflectedBm) {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        ProcessKind::SymmetricStable { alpha } => {
            let mut x = 0.0;
            let mut prev = 0.0;
            for (slot, &ti) in out.iter_mut().zip(t) {
                let dt = ti - prev;
                prev = ti;
                if dt > 0.0 {
                    // Scale (dt/2)^{1/alpha} gives variance dt at alpha = 2.
                    x += (0.5 * dt).powf(1.0 / alpha) * standard_symmetric_stable(*alpha, rng);
                }
                *slot = x;
            }
        }
        ProcessKind::Poisson { lambda } => {
            jump_path(*lambda, t, rng, out, |_| 1.0);
        }
        ProcessKind::CompoundPoisson { lambda, jump } => {
            jump_path(*lambda, t, rng, out, |r| jump.sample(r));
        }
        ProcessKind::IntegratedPoisson { lambda } => {
            jump_path(*lambda, t, rng, out, |_| 1.0);
            let mut y = 0.0;
            let mut prev_t = 0.0;
            let mut prev_n = 0.0;
            for (slot, &ti) in out.iter_mut().zip(t) {
                y += prev_n * (ti - prev_t);
                prev_n = *slot;
                prev_t = ti;
                *slot = y;
            }
        }
        ProcessKind::ProductSequence { marginals } => {
            for (slot, m) in out.iter_mut().zip(marginals) {
                *slot = m.sample(rng);
            }
        }
        ProcessKind::BrownianSheet => unreachable!("sheet lives on a lattice"),
    }
}

fn jump_path(
    lambda: f64,
    t: &[f64],
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
    mut jump: impl FnMut(&mut ChaCha8Rng) -> f64,
) {
    let gap = Exp::new(lambda).expect("rate validated");
    let mut next: f64 = gap.sample(rng);
    let mut x = 0.0;
    for (slot, &ti) in out.iter_mut().zip(t) {
        while next <= ti {
            x += jump(rng);
            next += gap.sample(rng);
        }
        *slot = x;
    }
}

/// Provenance of the smoothing applied to an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingRecord {
    pub density: SmoothingDensity,
    pub seed: u64,
}

/// `n` paths on a shared grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    grid: Arc<Grid>,
    values: Vec<T>,
    n: usize,
    model: Option<ProcessModel>,
    seed: Option<u64>,
    smoothing: Option<SmoothingRecord>,
}

impl<T: Scalar> PathEnsemble<T> {
    /// Ensemble from raw rows (for example read back from CSV).
    pub fn from_rows(grid: Arc<Grid>, rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one path"));
        }
        let width = grid.len();
        let n = rows.len();
        let mut values = Vec::with_capacity(n * width);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::GridMismatch(format!(
                    "path {i} has {} values for a grid of {width} points",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("path {i} has non-finite values")));
            }
            values.extend(row);
        }
        Ok(Self { grid, values, n, model: None, seed: None, smoothing: None })
    }

    pub fn with_provenance(
        mut self,
        model: Option<ProcessModel>,
        seed: Option<u64>,
        smoothing: Option<SmoothingRecord>,
    ) -> Self {
        self.model = model;
        self.seed = seed;
        self.smoothing = smoothing;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.grid.len()
    }

    pub fn path(&self, i: usize) -> &[T] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn paths(&self) -> std::slice::Chunks<'_, T> {
        self.values.chunks(self.width())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn model(&self) -> Option<&ProcessModel> {
        self.model.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn smoothing(&self) -> Option<SmoothingRecord> {
        self.smoothing
    }

    pub fn is_smoothed(&self) -> bool {
        self.smoothing.is_some()
    }

    pub fn path_function(&self, i: usize) -> GridFunction<T> {
        GridFunction::new(self.grid.clone(), self.path(i).to_vec()).expect("rows match the grid")
    }

    pub fn check_grid(&self, h: &GridFunction<T>) -> Result<()> {
        if same_grid(&self.grid, h.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch("query and ensemble live on different grids".into()))
        }
    }

    pub(crate) fn add_per_path(&mut self, offset: impl Fn(usize) -> T + Sync) {
        let w = self.width();
        self.values.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
            let z = offset(j);
            row.iter_mut().for_each(|v| *v = *v + z);
        });
    }

    pub(crate) fn mark_smoothed(&mut self, density: SmoothingDensity, seed: u64) {
        self.smoothing = Some(SmoothingRecord { density, seed });
        if let Some(model) = self.model.as_mut() {
            model.smoothing = Some(density);
        }
    }
}

/// Simulate `n` paths of `model` on its default `m`-step grid.
pub fn simulate<T: Scalar>(model: &ProcessModel, n: usize, m: usize, seed: u64) -> Result<PathEnsemble<T>> {
    model.validate()?;
    let grid = Arc::new(model.default_grid(m)?);
    simulate_on(model, grid, n, seed)
}

/// Simulate `n` paths of `model` on an explicit grid.
pub fn simulate_on<T: Scalar>(model: &ProcessModel, grid: Arc<Grid>, n: usize, seed: u64) -> Result<PathEnsemble<T>> {
    model.validate()?;
    model.check_grid(&grid)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let width = grid.len();
    let total = n.checked_mul(width).filter(|t| *t <= MAX_ENSEMBLE_VALUES).ok_or_else(|| {
        Error::ResourceCap(format!("{n} paths x {width} points exceeds the cap of {MAX_ENSEMBLE_VALUES} values"))
    })?;
    let mut values = vec![T::zero(); total];
    values.par_chunks_mut(width).enumerate().for_each_init(
        || vec![0.0f64; width],
        |buf, (i, row)| {
            model.fill_path(&grid, seed, i as u64, buf);
            for (slot, v) in row.iter_mut().zip(buf.iter()) {
                *slot = T::of(*v);
            }
        },
    );
    let smoothing = model.smoothing.map(|density| SmoothingRecord { density, seed });
    Ok(PathEnsemble { grid, values, n, model: Some(model.clone()), seed: Some(seed), smoothing })
}

/// Independent coordinates, coordinate `t` drawn from `marginals[t]`.
pub fn sample_product<T: Scalar>(marginals: &[MarginalSpec], n: usize, seed: u64) -> Result<PathEnsemble<T>> {
    let model = ProcessModel::new(ProcessKind::ProductSequence { marginals: marginals.to_vec() });
    simulate(&model, n, marginals.len(), seed)
}

/// Insert Brownian-bridge midpoints between consecutive grid points.
///
/// The refined paths restrict to the original ones on the original grid, so
/// depth on the refined grid can only decrease.
pub fn refine_bridge<T: Scalar>(ens: &PathEnsemble<T>, seed: u64) -> Result<PathEnsemble<T>> {
    let brownian = ens.model.as_ref().is_some_and(ProcessModel::is_brownian);
    if !brownian {
        return Err(Error::Domain("bridge refinement needs a Brownian ensemble".into()));
    }
    let t = ens.grid.line_points().ok_or_else(|| Error::Domain("bridge refinement needs a line grid".into()))?;
    let mut fine = Vec::with_capacity(2 * t.len() - 1);
    for w in t.windows(2) {
        fine.push(w[0]);
        fine.push(0.5 * (w[0] + w[1]));
    }
    fine.push(t[t.len() - 1]);
    let grid = Arc::new(Grid::line(fine)?);
    let width = grid.len();
    let mut values = vec![T::zero(); ens.n * width];
    values.par_chunks_mut(width).enumerate().for_each(|(j, row)| {
        let mut rng = rng::stream(seed, DOMAIN_REFINE, j as u64);
        let old = ens.path(j);
        for (k, w) in t.windows(2).enumerate() {
            let (a, b) = (old[k].as_f64(), old[k + 1].as_f64());
            let sd = (0.25 * (w[1] - w[0])).sqrt();
            row[2 * k] = old[k];
            row[2 * k + 1] = T::of(0.5 * (a + b) + sd * normal(&mut rng));
        }
        row[width - 1] = old[old.len() - 1];
    });
    Ok(PathEnsemble { grid, values, ..ens.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_var(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    fn last_column(ens: &PathEnsemble<f64>) -> Vec<f64> {
        ens.paths().map(|p| p[p.len() - 1]).collect()
    }

    #[test]
    fn brownian_variance_at_one() {
        let ens = simulate::<f64>(&ProcessModel::brownian(), 100_000, 256, 1).unwrap();
        let v = sample_var(&last_column(&ens));
        assert!((v - 1.0).abs() < 0.015, "Var X(1) = {v}");
    }

    #[test]
    fn poisson_mean_at_one() {
        let model = ProcessModel::new(ProcessKind::Poisson { lambda: 1.0 });
        let ens = simulate::<f64>(&model, 100_000, 64, 2).unwrap();
        let xs = last_column(&ens);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn sheet_covariance() {
        let ens = simulate::<f64>(&ProcessModel::new(ProcessKind::BrownianSheet), 40_000, 8, 3).unwrap();
        let w = 9;
        let mid = 4 * w + 4;
        let corner = 8 * w + 8;
        let n = ens.n() as f64;
        let cov = ens.paths().map(|p| p[mid] * p[corner]).sum::<f64>() / n;
        // min(s1,t1) min(s2,t2) = 0.25; sd of the estimator is about 0.0035.
        assert!((cov - 0.25).abs() < 0.015, "cov {cov}");
        assert!(ens.paths().all(|p| p[..w].iter().all(|v| *v == 0.0) && p[w] == 0.0));
    }

    #[test]
    fn tied_down_origin_is_exactly_zero() {
        let models = [
            ProcessKind::BrownianMotion,
            ProcessKind::SymmetricStable { alpha: 1.3 },
            ProcessKind::Poisson { lambda: 2.0 },
            ProcessKind::ReflectedBm,
            ProcessKind::IntegratedPoisson { lambda: 1.0 },
        ];
        for kind in models {
            let ens = simulate::<f64>(&ProcessModel::new(kind), 200, 16, 9).unwrap();
            assert!(ens.paths().all(|p| p[0] == 0.0));
        }
    }

    #[test]
    fn simulation_is_deterministic_and_thread_independent() {
        let model = ProcessModel::new(ProcessKind::SymmetricStable { alpha: 1.5 });
        let a = simulate::<f64>(&model, 300, 32, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate::<f64>(&model, 300, 32, 5).unwrap());
        assert_eq!(a, b);
        let c = simulate::<f64>(&model, 300, 32, 6).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn stable_two_matches_brownian_in_law() {
        let bm = simulate::<f64>(&ProcessModel::brownian(), 10_000, 16, 21).unwrap();
        let st =
            simulate::<f64>(&ProcessModel::new(ProcessKind::SymmetricStable { alpha: 2.0 }), 10_000, 16, 22).unwrap();
        let (_, p) = crate::special::ks_two_sample(&last_column(&bm), &last_column(&st));
        assert!(p > 0.001, "KS p-value {p}");
    }

    #[test]
    fn reflected_and_integrated_shapes() {
        let r = simulate::<f64>(&ProcessModel::new(ProcessKind::ReflectedBm), 500, 64, 4).unwrap();
        assert!(r.values().iter().all(|v| *v >= 0.0));
        let ip =
            simulate::<f64>(&ProcessModel::new(ProcessKind::IntegratedPoisson { lambda: 1.0 }), 500, 64, 4).unwrap();
        assert!(ip.paths().all(|p| p.windows(2).all(|w| w[1] >= w[0])));
    }

    #[test]
    fn product_sequence_examples() {
        let normals = vec![MarginalSpec::standard_normal(); 10];
        let ens = sample_product::<f64>(&normals, 20_000, 8).unwrap();
        for t in 0..10 {
            let mean = ens.paths().map(|p| p[t]).sum::<f64>() / 20_000.0;
            assert!(mean.abs() < 4.0 / (20_000f64).sqrt());
        }
        let atoms: Vec<_> = (0..5).map(|i| MarginalSpec::PointMass { x: i as f64 }).collect();
        let ens = sample_product::<f64>(&atoms, 50, 8).unwrap();
        assert!(ens.paths().all(|p| p == [0.0, 1.0, 2.0, 3.0, 4.0]));
        let two = vec![MarginalSpec::TwoPoint { c: 1.0, d: 0.5 }; 4];
        let ens = sample_product::<f64>(&two, 500, 8).unwrap();
        assert!(ens.values().iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn marginal_cdf_examples() {
        assert_eq!(marginal_cdf(&MarginalSpec::standard_normal(), 0.0), (0.5, 0.5));
        assert_eq!(marginal_cdf(&MarginalSpec::PointMass { x: 0.0 }, 0.0), (1.0, 0.0));
        assert_eq!(marginal_cdf(&MarginalSpec::TwoPoint { c: 1.0, d: 0.5 }, 1.0), (1.0, 0.5));
        let mix = MarginalSpec::MixtureAtomContinuous {
            atom: 0.0,
            weight: 0.25,
            continuous: Box::new(MarginalSpec::Uniform { a: -1.0, b: 1.0 }),
        };
        assert_eq!(marginal_cdf(&mix, 0.0), (0.25 + 0.375, 0.375));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = [
            ProcessKind::SymmetricStable { alpha: 2.5 },
            ProcessKind::Poisson { lambda: 0.0 },
            ProcessKind::ProductSequence { marginals: vec![] },
            ProcessKind::ProductSequence { marginals: vec![MarginalSpec::Gaussian { mu: 0.0, sigma: 0.0 }] },
        ];
        for kind in bad {
            assert!(simulate::<f64>(&ProcessModel::new(kind), 10, 4, 0).is_err());
        }
        let sheet = ProcessModel::new(ProcessKind::BrownianSheet);
        assert!(matches!(simulate::<f64>(&sheet, 1 << 20, 1024, 0), Err(Error::ResourceCap(_))));
    }

    #[test]
    fn model_smoothing_equals_post_hoc_smoothing() {
        let d = SmoothingDensity::laplace(0.7).unwrap();
        let direct = simulate::<f64>(&ProcessModel::smoothed(ProcessKind::BrownianMotion, d), 100, 8, 13).unwrap();
        let raw = simulate::<f64>(&ProcessModel::brownian(), 100, 8, 13).unwrap();
        let post = crate::smoothing::smooth_ensemble(&raw, d, 13).unwrap();
        assert_eq!(direct, post);
    }

    #[test]
    fn bridge_refinement_keeps_coarse_values() {
        let ens = simulate::<f64>(&ProcessModel::brownian(), 50, 4, 1).unwrap();
        let fine = refine_bridge(&ens, 2).unwrap();
        assert_eq!(fine.width(), 9);
        for j in 0..50 {
            for k in 0..5 {
                assert_eq!(fine.path(j)[2 * k], ens.path(j)[k]);
            }
        }
    }

    #[test]
    fn f32_paths_round_f64_paths() {
        let a = simulate::<f64>(&ProcessModel::brownian(), 20, 8, 3).unwrap();
        let b = simulate::<f32>(&ProcessModel::brownian(), 20, 8, 3).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(*x as f32, *y);
        }
    }
}
