//! Functions on finite grids, the pointwise orders, sup-norm margins and
//! sup-norm ε-nets of the supported function families.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Finite index set: strictly increasing points of `[0, 1]`, or a
/// rectangular lattice of `[0, 1]²` stored row-major (first axis outer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Line { points: Vec<f64> },
    Lattice { axis1: Vec<f64>, axis2: Vec<f64> },
}

fn check_axis(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid("grid must contain at least one point"));
    }
    if points.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
        return Err(Error::invalid("grid points must lie in [0, 1]"));
    }
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid points must be strictly increasing"));
    }
    Ok(())
}

fn uniform_axis(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

impl Grid {
    pub fn line(points: Vec<f64>) -> Result<Self> {
        check_axis(&points)?;
        Ok(Grid::Line { points })
    }

    pub fn lattice(axis1: Vec<f64>, axis2: Vec<f64>) -> Result<Self> {
        check_axis(&axis1)?;
        check_axis(&axis2)?;
        Ok(Grid::Lattice { axis1, axis2 })
    }

    /// `{0, 1/steps, ..., 1}`: `steps + 1` points including the origin.
    pub fn uniform(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Grid::Line { points: uniform_axis(steps) })
    }

    /// Uniform lattice `{0, 1/steps, ..., 1}²`.
    pub fn uniform_lattice(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("lattice needs at least one step per axis"));
        }
        Ok(Grid::Lattice { axis1: uniform_axis(steps), axis2: uniform_axis(steps) })
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Line { points } => points.len(),
            Grid::Lattice { axis1, axis2 } => axis1.len() * axis2.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        match self {
            Grid::Line { .. } => 1,
            Grid::Lattice { .. } => 2,
        }
    }

    /// Coordinates of point `i`; the second entry is 0 on a line grid.
    pub fn point(&self, i: usize) -> (f64, f64) {
        match self {
            Grid::Line { points } => (points[i], 0.0),
            Grid::Lattice { axis1, axis2 } => {
                let w = axis2.len();
                (axis1[i / w], axis2[i % w])
            }
        }
    }

    pub fn line_points(&self) -> Option<&[f64]> {
        match self {
            Grid::Line { points } => Some(points),
            Grid::Lattice { .. } => None,
        }
    }

    /// True when the grid contains the origin as its first point.
    pub fn has_origin(&self) -> bool {
        self.point(0) == (0.0, 0.0)
    }
}

/// A real function on a finite grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Arc<Grid>,
    values: Vec<T>,
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: Arc<Grid>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for a grid of {} points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid function values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![T::of(c); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| {
                let (s, t) = grid.point(i);
                T::of(f(s, t))
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> T {
        self.values[i]
    }

    /// `Some(c)` when every value equals `c`.
    pub fn as_constant(&self) -> Option<f64> {
        let first = self.values[0];
        self.values.iter().all(|v| *v == first).then(|| first.as_f64())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("functions live on different grids".into()))
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn shifted(&self, delta: f64) -> Self {
        let d = T::of(delta);
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| *v + d).collect() }
    }

    pub fn negated(&self) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| -*v).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> GridFunction<U> {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}

/// Sorted, distinct positions into a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSubset {
    indices: Vec<usize>,
}

impl IndexSubset {
    pub fn new(mut indices: Vec<usize>, grid_len: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Domain("index subset must not be empty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("index subset contains duplicates"));
        }
        if let Some(&last) = indices.last() {
            if last >= grid_len {
                return Err(Error::invalid(format!("index {last} out of bounds for grid of {grid_len} points")));
            }
        }
        Ok(Self { indices })
    }

    pub fn full(grid_len: usize) -> Self {
        Self { indices: (0..grid_len).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_subset_of(&self, other: &IndexSubset) -> bool {
        self.indices.iter().all(|i| other.indices.binary_search(i).is_ok())
    }

    pub fn fits(&self, grid_len: usize) -> bool {
        self.indices.last().is_some_and(|&i| i < grid_len)
    }
}

/// Outcome of comparing a path with a query function on an index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dominance {
    /// `x(t) >= h(t)` for every `t`.
    pub above: bool,
    /// `x(t) <= h(t)` for every `t`.
    pub below: bool,
}

/// Single pass over `idx` (or all points), stopping once both orders fail.
#[inline]
pub(crate) fn dominance_on<T: PartialOrd + Copy>(x: &[T], h: &[T], idx: Option<&[usize]>) -> Dominance {
    let mut above = true;
    let mut below = true;
    let mut visit = |a: T, b: T| {
        if a < b {
            above = false;
        }
        if a > b {
            below = false;
        }
        above || below
    };
    match idx {
        None => {
            for (a, b) in x.iter().zip(h) {
                if !visit(*a, *b) {
                    break;
                }
            }
        }
        Some(idx) => {
            for &i in idx {
                if !visit(x[i], h[i]) {
                    break;
                }
            }
        }
    }
    Dominance { above, below }
}

pub fn compare<T: Scalar>(x: &GridFunction<T>, h: &GridFunction<T>, subset: &IndexSubset) -> Result<Dominance> {
    x.check_same_grid(h)?;
    if !subset.fits(x.len()) {
        return Err(Error::Domain("index subset does not fit the grid".into()));
    }
    Ok(dominance_on(&x.values, &h.values, Some(subset.indices())))
}

pub fn sup_norm<T: Scalar>(x: &GridFunction<T>) -> f64 {
    x.values.iter().fold(0.0, |m, v| m.max(v.as_f64().abs()))
}

pub fn sup_distance<T: Scalar>(x: &GridFunction<T>, h: &GridFunction<T>) -> Result<f64> {
    x.check_same_grid(h)?;
    Ok(x.values.iter().zip(&h.values).fold(0.0, |m, (a, b)| m.max((a.as_f64() - b.as_f64()).abs())))
}

/// `min_t (x(t) - h(t))`; nonnegative exactly when `x ⪰ h`.
pub fn lower_margin<T: Scalar>(x: &GridFunction<T>, h: &GridFunction<T>) -> Result<f64> {
    x.check_same_grid(h)?;
    Ok(margin_of(&x.values, &h.values))
}

#[inline]
pub(crate) fn margin_of<T: Scalar>(x: &[T], h: &[T]) -> f64 {
    x.iter().zip(h).fold(f64::INFINITY, |m, (a, b)| m.min(a.as_f64() - b.as_f64()))
}

/// Sup-norm compact function families with computable ε-nets.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind<T> {
    /// Constant functions with values in `[-radius, radius]`.
    Constants {
        radius: f64,
    },
    FiniteList(Vec<GridFunction<T>>),
    /// `|f| <= radius`, `|f(s) - f(t)| <= lipschitz |s - t|` (line grids only).
    LipschitzBall {
        radius: f64,
        lipschitz: f64,
    },
    /// Lipschitz ball whose derivative is additionally `slope_lipschitz`-Lipschitz.
    SmoothBall {
        radius: f64,
        lipschitz: f64,
        slope_lipschitz: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec<T> {
    grid: Arc<Grid>,
    kind: FamilyKind<T>,
}

#[derive(Debug, Clone)]
pub struct EpsilonNet<T> {
    pub centers: Vec<GridFunction<T>>,
    pub count: usize,
}

/// Upper limit on explicitly enumerated net centers.
pub const MAX_NET_CENTERS: usize = 1_000_000;

/// Lattice description of a Lipschitz-ball net: knot positions, the band of
/// admissible lattice levels and the largest level move between knots.
struct LatticeNet {
    knots: Vec<usize>,
    level_min: i64,
    level_max: i64,
    max_moves: Vec<i64>,
}

impl<T: Scalar> FamilySpec<T> {
    pub fn new(grid: Arc<Grid>, kind: FamilyKind<T>) -> Result<Self> {
        match &kind {
            FamilyKind::Constants { radius } => check_radius(*radius)?,
            FamilyKind::FiniteList(fs) => {
                if fs.is_empty() {
                    return Err(Error::invalid("finite-list family must not be empty"));
                }
                if fs.iter().any(|f| !same_grid(f.grid(), &grid)) {
                    return Err(Error::GridMismatch("family member on a foreign grid".into()));
                }
            }
            FamilyKind::LipschitzBall { radius, lipschitz } => {
                check_radius(*radius)?;
                check_lipschitz(*lipschitz)?;
            }
            FamilyKind::SmoothBall { radius, lipschitz, slope_lipschitz } => {
                check_radius(*radius)?;
                check_lipschitz(*lipschitz)?;
                check_lipschitz(*slope_lipschitz)?;
            }
        }
        Ok(Self { grid, kind })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> &FamilyKind<T> {
        &self.kind
    }

    /// Draw one member at random (used to probe net coverage).
    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GridFunction<T>> {
        match &self.kind {
            FamilyKind::Constants { radius } => {
                Ok(GridFunction::constant(self.grid.clone(), rng.random_range(-*radius..=*radius)))
            }
            FamilyKind::FiniteList(fs) => Ok(fs[rng.random_range(0..fs.len())].clone()),
            FamilyKind::LipschitzBall { radius, lipschitz } => {
                let t = self.line_points()?;
                let mut v = rng.random_range(-*radius..=*radius);
                let mut values = vec![T::of(v)];
                for w in t.windows(2) {
                    let step = lipschitz * (w[1] - w[0]);
                    v = (v + rng.random_range(-1.0..=1.0) * step).clamp(-*radius, *radius);
                    values.push(T::of(v));
                }
                GridFunction::new(self.grid.clone(), values)
            }
            FamilyKind::SmoothBall { radius, lipschitz, slope_lipschitz } => {
                let t = self.line_points()?;
                // Bounded slope walk, then scaled and shifted into [-radius, radius].
                let mut slope: f64 = rng.random_range(-*lipschitz..=*lipschitz);
                let mut raw = vec![0.0];
                for w in t.windows(2) {
                    let dt = w[1] - w[0];
                    raw.push(raw[raw.len() - 1] + slope * dt);
                    slope =
                        (slope + rng.random_range(-1.0..=1.0) * slope_lipschitz * dt).clamp(-*lipschitz, *lipschitz);
                }
                let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                let scale = if hi - lo > 2.0 * radius { 2.0 * radius / (hi - lo) } else { 1.0 };
                let room = 2.0 * radius - (hi - lo) * scale;
                let base = -radius + rng.random_range(0.0..=room.max(0.0));
                let values = raw.iter().map(|v| T::of(((v - lo) * scale + base).clamp(-*radius, *radius))).collect();
                GridFunction::new(self.grid.clone(), values)
            }
        }
    }

    fn line_points(&self) -> Result<&[f64]> {
        self.grid.line_points().ok_or_else(|| Error::invalid("Lipschitz families are supported on line grids only"))
    }

    fn lattice_net(&self, radius: f64, lipschitz: f64, eps: f64) -> Result<LatticeNet> {
        let t = self.line_points()?;
        let reach = if lipschitz > 0.0 { eps / lipschitz } else { f64::INFINITY };
        let mut knots = vec![0usize];
        let mut i = 0;
        while i + 1 < t.len() {
            let mut j = i + 1;
            while j + 1 < t.len() && t[j + 1] - t[i] <= reach * (1.0 + 1e-12) {
                j += 1;
            }
            knots.push(j);
            i = j;
        }
        let max_moves = knots
            .windows(2)
            .map(|w| {
                let span = lipschitz * (t[w[1]] - t[w[0]]) / eps;
                (span - 1e-9).ceil().max(0.0) as i64
            })
            .collect();
        Ok(LatticeNet {
            knots,
            level_min: (-radius / eps).round() as i64,
            level_max: (radius / eps).round() as i64,
            max_moves,
        })
    }

    /// Natural log of the net size used by [`epsilon_net`], computed without
    /// enumerating centers.
    pub fn log_covering_number(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        match &self.kind {
            FamilyKind::Constants { radius } => Ok((constants_count(*radius, eps) as f64).ln()),
            FamilyKind::FiniteList(_) => Ok((epsilon_net(self, eps)?.count as f64).ln()),
            FamilyKind::LipschitzBall { radius, lipschitz } | FamilyKind::SmoothBall { radius, lipschitz, .. } => {
                Ok(log_walk_count(&self.lattice_net(*radius, *lipschitz, eps)?))
            }
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("family radius must be positive, got {r}")))
    }
}

fn check_lipschitz(l: f64) -> Result<()> {
    if l.is_finite() && l >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("Lipschitz constants must be nonnegative, got {l}")))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("eps must be positive, got {eps}")))
    }
}

fn constants_count(radius: f64, eps: f64) -> usize {
    ((radius / eps) - 1e-9).ceil().max(1.0) as usize
}

fn log_walk_count(net: &LatticeNet) -> f64 {
    let width = (net.level_max - net.level_min + 1) as usize;
    if net.max_moves.len() > 64 && net.max_moves.iter().all(|&k| k == 1) {
        return log_unit_walk_count(width, net.max_moves.len());
    }
    log_walk_count_dp(net, width)
}

/// `log(1ᵀ Tⁿ 1)` for `T = I + A`, `A` the adjacency of a path on `width`
/// vertices, from the sine eigenbasis of `T`.
fn log_unit_walk_count(width: usize, steps: usize) -> f64 {
    let w1 = (width + 1) as f64;
    let n = steps as f64;
    // Odd j only: the eigenvector sum vanishes for even j.
    let terms: Vec<(f64, f64)> = (1..=width)
        .step_by(2)
        .filter_map(|j| {
            let theta = j as f64 * std::f64::consts::PI / w1;
            let lambda = 1.0 + 2.0 * theta.cos();
            let half = 0.5 * theta;
            let v_sum = (width as f64 * half).sin() * (w1 * half).sin() / half.sin();
            let weight = 2.0 / w1 * v_sum * v_sum;
            (lambda != 0.0 && weight > 0.0).then(|| {
                let sign = if lambda < 0.0 && steps % 2 == 1 { -1.0 } else { 1.0 };
                (sign, n * lambda.abs().ln() + weight.ln())
            })
        })
        .collect();
    let top = terms.iter().fold(f64::NEG_INFINITY, |m, t| m.max(t.1));
    top + terms.iter().map(|(s, l)| s * (l - top).exp()).sum::<f64>().ln()
}

fn log_walk_count_dp(net: &LatticeNet, width: usize) -> f64 {
    let mut counts = vec![1.0f64; width];
    let mut log_scale = 0.0;
    let mut prefix = vec![0.0f64; width + 1];
    for &k in &net.max_moves {
        for (i, c) in counts.iter().enumerate() {
            prefix[i + 1] = prefix[i] + c;
        }
        let k = k as usize;
        for (i, c) in counts.iter_mut().enumerate() {
            let lo = i.saturating_sub(k);
            let hi = (i + k + 1).min(width);
            *c = prefix[hi] - prefix[lo];
        }
        let top = counts.iter().fold(0.0f64, |m, c| m.max(*c));
        counts.iter_mut().for_each(|c| *c /= top);
        log_scale += top.ln();
    }
    log_scale + counts.iter().sum::<f64>().ln()
}

/// Sup-norm ε-net of a family.
///
/// Constants are covered by an evenly spaced set of `⌈R/ε⌉` levels. Lipschitz
/// balls use value-lattice quantization with step ε at knots spaced at most
/// `ε/L` apart, linear interpolation between knots, and only the lattice
/// levels reachable by rounding a member. Smooth balls reuse the net of the
/// enclosing Lipschitz ball.
pub fn epsilon_net<T: Scalar>(family: &FamilySpec<T>, eps: f64) -> Result<EpsilonNet<T>> {
    check_eps(eps)?;
    let grid = family.grid.clone();
    let centers = match &family.kind {
        FamilyKind::Constants { radius } => {
            let count = constants_count(*radius, eps);
            if count > MAX_NET_CENTERS {
                return Err(Error::ResourceCap(format!("constants net needs {count} centers")));
            }
            let start = -(count as f64) * eps + eps;
            (0..count).map(|k| GridFunction::constant(grid.clone(), start + 2.0 * eps * k as f64)).collect()
        }
        FamilyKind::FiniteList(fs) => {
            let mut centers: Vec<GridFunction<T>> = Vec::new();
            for f in fs {
                let covered = centers.iter().any(|c| sup_distance(c, f).map(|d| d <= eps).unwrap_or(false));
                if !covered {
                    centers.push(f.clone());
                }
            }
            centers
        }
        FamilyKind::LipschitzBall { radius, lipschitz } | FamilyKind::SmoothBall { radius, lipschitz, .. } => {
            let net = family.lattice_net(*radius, *lipschitz, eps)?;
            let log_count = log_walk_count(&net);
            if log_count > (MAX_NET_CENTERS as f64).ln() {
                return Err(Error::ResourceCap(format!("Lipschitz net needs about e^{log_count:.1} centers")));
            }
            enumerate_lattice_walks(&net, family.line_points()?, eps)
                .into_iter()
                .map(|values| GridFunction::new(grid.clone(), values))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let count = centers.len();
    Ok(EpsilonNet { centers, count })
}

fn enumerate_lattice_walks<T: Scalar>(net: &LatticeNet, t: &[f64], eps: f64) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut levels = Vec::with_capacity(net.knots.len());
    fn recurse<T: Scalar>(net: &LatticeNet, t: &[f64], eps: f64, levels: &mut Vec<i64>, out: &mut Vec<Vec<T>>) {
        let depth = levels.len();
        if depth == net.knots.len() {
            out.push(interpolate_knots(net, t, eps, levels));
            return;
        }
        let (lo, hi) = if depth == 0 {
            (net.level_min, net.level_max)
        } else {
            let prev = levels[depth - 1];
            let k = net.max_moves[depth - 1];
            ((prev - k).max(net.level_min), (prev + k).min(net.level_max))
        };
        for level in lo..=hi {
            levels.push(level);
            recurse(net, t, eps, levels, out);
            levels.pop();
        }
    }
    recurse(net, t, eps, &mut levels, &mut out);
    out
}

fn interpolate_knots<T: Scalar>(net: &LatticeNet, t: &[f64], eps: f64, levels: &[i64]) -> Vec<T> {
    let mut values = vec![T::zero(); t.len()];
    values[net.knots[0]] = T::of(levels[0] as f64 * eps);
    for (w, lv) in net.knots.windows(2).zip(levels.windows(2)) {
        let (a, b) = (w[0], w[1]);
        let (va, vb) = (lv[0] as f64 * eps, lv[1] as f64 * eps);
        for (i, slot) in values.iter_mut().enumerate().take(b + 1).skip(a + 1) {
            let frac = (t[i] - t[a]) / (t[b] - t[a]);
            *slot = T::of(va + frac * (vb - va));
        }
    }
    values
}

/// Entropy integral `∫ sqrt(log N(ε)) ε^{-1/2} dε` over `[eps_min, eps_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyIntegral {
    pub value: f64,
    /// Gain from halving `eps_min` relative to the gain from the previous halving:
    /// `∫[eps_min/2, eps_min] / ∫[eps_min, 2 eps_min]`. About `2^{-1/2}` for an
    /// `ε^{-1/2}` integrand and 1 for `ε^{-1}`.
    pub growth_factor: f64,
    pub divergence_flag: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EntropyOptions {
    /// Quadrature nodes per decade of ε (trapezoid in `log ε`).
    pub nodes_per_decade: usize,
    /// `growth_factor` above which the integral is flagged as divergent.
    pub divergence_factor: f64,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self { nodes_per_decade: 64, divergence_factor: 0.85 }
    }
}

pub fn entropy_integral<T: Scalar>(family: &FamilySpec<T>, eps_min: f64, eps_max: f64) -> Result<EntropyIntegral> {
    entropy_integral_with(family, eps_min, eps_max, EntropyOptions::default())
}

pub fn entropy_integral_with<T: Scalar>(
    family: &FamilySpec<T>,
    eps_min: f64,
    eps_max: f64,
    opts: EntropyOptions,
) -> Result<EntropyIntegral> {
    if !(eps_min > 0.0 && eps_min < eps_max && eps_max.is_finite()) {
        return Err(Error::invalid(format!(
            "entropy integral needs 0 < eps_min < eps_max, got [{eps_min}, {eps_max}]"
        )));
    }
    let value = entropy_quadrature(family, eps_min, eps_max, opts.nodes_per_decade)?;
    let below = entropy_quadrature(family, 0.5 * eps_min, eps_min, opts.nodes_per_decade)?;
    let above = entropy_quadrature(family, eps_min, 2.0 * eps_min, opts.nodes_per_decade)?;
    let growth_factor = if above > 0.0 {
        below / above
    } else if below > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(EntropyIntegral { value, growth_factor, divergence_flag: growth_factor > opts.divergence_factor })
}

/// Trapezoid rule in `u = log ε`.
fn entropy_quadrature<T: Scalar>(family: &FamilySpec<T>, lo: f64, hi: f64, nodes_per_decade: usize) -> Result<f64> {
    let (u0, u1) = (lo.ln(), hi.ln());
    let decades = (u1 - u0) / std::f64::consts::LN_10;
    let panels = ((decades * nodes_per_decade as f64).ceil() as usize).max(8);
    let du = (u1 - u0) / panels as f64;
    let mut value = 0.0;
    for i in 0..=panels {
        let eps = (u0 + du * i as f64).exp();
        let w = if i == 0 || i == panels { 0.5 } else { 1.0 };
        let g = family.log_covering_number(eps)?.max(0.0).sqrt() / eps.sqrt();
        value += w * g * eps;
    }
    Ok(value * du)
}
