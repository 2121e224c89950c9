//! Monte Carlo checks of the smoothing bounds: the margin-probability
//! Lipschitz bound and the positivity floor of smoothed depth.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridfn::Grid;
use crate::models::ProcessModel;
use crate::rng::{self, DOMAIN_REFINE};
use crate::smoothing::{positivity_floor, SmoothingDensity};
use crate::{Error, Result};

/// Stream index offset for the random test functions of these checks.
const CHECK_STREAM: u64 = 0xc4ec;

fn smoothing_of(model: &ProcessModel) -> Result<SmoothingDensity> {
    model.validate()?;
    model.smoothing.ok_or_else(|| Error::invalid("check needs a smoothed model"))
}

fn simulate_rows(model: &ProcessModel, grid: &Grid, n: usize, seed: u64) -> Vec<f64> {
    let w = grid.len();
    let mut values = vec![0.0; n * w];
    values.par_chunks_mut(w).enumerate().for_each(|(i, row)| model.fill_path(grid, seed, i as u64, row));
    values
}

/// Random Lipschitz function `a + b·t + c·sin(2π f t + φ)` on a line grid,
/// rescaled so its sup norm is at most `bound`.
fn random_lipschitz<R: Rng>(rng: &mut R, times: &[f64], bound: f64) -> Vec<f64> {
    let a = rng.random_range(-1.0..1.0);
    let b = rng.random_range(-1.0..1.0);
    let c = rng.random_range(-1.0..1.0);
    let f = rng.random_range(0.5..3.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let h: Vec<f64> = times.iter().map(|t| a + b * t + c * (std::f64::consts::TAU * f * t + phi).sin()).collect();
    let sup = h.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let scale = if sup > bound { bound / sup } else { 1.0 };
    h.into_iter().map(|v| v * scale).collect()
}

fn line_times(grid: &Grid) -> Result<Vec<f64>> {
    grid.line_points().map(<[f64]>::to_vec).ok_or_else(|| Error::invalid("check needs a one-parameter grid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginTrial {
    pub delta: f64,
    pub x: f64,
    pub p1: f64,
    pub p2: f64,
    pub bound: f64,
}

impl MarginTrial {
    pub fn holds(&self) -> bool {
        (self.p1 - self.p2).abs() <= self.bound
    }
}

/// `|P̂(W_{h1} ≥ x) − P̂(W_{h2} ≥ x)|` against `2‖h1 − h2‖∞ ∫|f′_Z|` plus
/// three binomial standard errors, over random `(h1, h2, x)` triples.
/// `W_h` is the minimum of `X − h` over the grid.
pub fn margin_check(model: &ProcessModel, m: usize, n: usize, trials: usize, seed: u64) -> Result<Vec<MarginTrial>> {
    let z = smoothing_of(model)?;
    let grid = model.default_grid(m)?;
    let times = line_times(&grid)?;
    let values = simulate_rows(model, &grid, n, seed);
    let w = grid.len();
    let mut rng = rng::stream(seed, DOMAIN_REFINE, CHECK_STREAM);
    let g = z.grad_l1();
    let triples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..trials)
        .map(|_| {
            let h1 = random_lipschitz(&mut rng, &times, 2.0);
            let size = rng.random_range(0.0..0.5);
            let bump = random_lipschitz(&mut rng, &times, size);
            let h2 = h1.iter().zip(&bump).map(|(a, b)| a + b).collect();
            (h1, h2, rng.random_range(-1.5..1.5))
        })
        .collect();
    Ok(triples
        .par_iter()
        .map(|(h1, h2, x)| {
            let exceed = |h: &[f64]| {
                values
                    .chunks(w)
                    .filter(|row| row.iter().zip(h).map(|(v, c)| v - c).fold(f64::INFINITY, f64::min) >= *x)
                    .count() as f64
                    / n as f64
            };
            let (p1, p2) = (exceed(h1), exceed(h2));
            let delta = h1.iter().zip(h2).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
            let se = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / n as f64).sqrt();
            MarginTrial { delta, x: *x, p1, p2, bound: 2.0 * delta * g + 3.0 * se }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityTrial {
    pub h_sup: f64,
    pub depth: f64,
    pub se: f64,
    pub floor: f64,
}

impl PositivityTrial {
    /// Positive depth that is not significantly below the floor.
    pub fn holds(&self) -> bool {
        self.depth > 0.0 && self.depth + 3.0 * self.se >= self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// Median of `‖Y‖∞` over the unsmoothed paths.
    pub c: f64,
    pub trials: Vec<PositivityTrial>,
}

/// Empirical depth of random Lipschitz `h` with `‖h‖∞ ≤ 2` against the
/// floor `½ P(Z ≥ 2c + ‖h‖∞)`. The unsmoothed paths share the seed, so `c`
/// is estimated from the same draws of `Y`.
pub fn positivity_check(
    model: &ProcessModel,
    m: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<PositivityReport> {
    let z = smoothing_of(model)?;
    let grid = model.default_grid(m)?;
    let times = line_times(&grid)?;
    let w = grid.len();
    let raw = ProcessModel::new(model.process.clone());
    let mut sups: Vec<f64> = simulate_rows(&raw, &grid, n, seed)
        .chunks(w)
        .map(|row| row.iter().fold(0.0f64, |s, v| s.max(v.abs())))
        .collect();
    sups.sort_by(f64::total_cmp);
    // Slightly above the median so that P(‖Y‖∞ ≤ c) > 1/2.
    let c = sups[(n / 2).min(n - 1)];
    let values = simulate_rows(model, &grid, n, seed);
    let mut rng = rng::stream(seed, DOMAIN_REFINE, CHECK_STREAM + 1);
    let trials = (0..trials)
        .map(|_| {
            let h = random_lipschitz(&mut rng, &times, 2.0);
            let (mut above, mut below) = (0u64, 0u64);
            for row in values.chunks(w) {
                let d = crate::gridfn::dominance_on(row, &h, None);
                above += u64::from(d.above);
                below += u64::from(d.below);
            }
            let depth = above.min(below) as f64 / n as f64;
            let h_sup = h.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            PositivityTrial {
                h_sup,
                depth,
                se: (depth * (1.0 - depth) / n as f64).sqrt(),
                floor: positivity_floor(z, c, h_sup),
            }
        })
        .collect();
    Ok(PositivityReport { c, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ProcessKind;

    fn smoothed_bm() -> ProcessModel {
        ProcessModel::smoothed(ProcessKind::BrownianMotion, SmoothingDensity::gaussian(1.0).unwrap())
    }

    #[test]
    fn margin_bound_holds_on_small_run() {
        let trials = margin_check(&smoothed_bm(), 16, 5_000, 10, 3).unwrap();
        assert_eq!(trials.len(), 10);
        assert!(trials.iter().all(MarginTrial::holds), "{trials:?}");
        assert!(margin_check(&ProcessModel::brownian(), 16, 10, 1, 3).is_err());
    }

    #[test]
    fn positivity_small_run() {
        let r = positivity_check(&smoothed_bm(), 16, 5_000, 5, 2).unwrap();
        assert!(r.c > 0.5 && r.c < 3.0, "{}", r.c);
        assert!(r.trials.iter().all(|t| t.h_sup <= 2.0 + 1e-12 && t.holds()), "{r:?}");
    }
}
