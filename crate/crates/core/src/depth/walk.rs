//! Grid-exact side probabilities for (smoothed) Brownian motion.
//!
//! `P(Z + B(t_k) >= h_k for all k)` is computed by a backward recursion on
//! the survival function `u_k(w) = P(W_j >= 0 for j >= k | W_k = w)` of the
//! walk `W_k = Z + B(t_k) - h_k`. Each `u_k` is piecewise linear on a uniform
//! spatial mesh of `[0, L]` and equals 1 beyond `L`; one backward step
//! integrates the interpolant exactly against the Gaussian transition density.

use crate::smoothing::SmoothingDensity;
use crate::special::{normal_cdf, normal_pdf, normal_sf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct WalkOptions {
    /// Mesh width is the smallest step standard deviation divided by this.
    pub dx_ratio: f64,
    /// Combine the mesh with its halving to cancel the `O(dx²)` error.
    pub extrapolate: bool,
    /// Domain length in standard deviations of the total walk variance.
    pub width_sd: f64,
    /// Transition kernels are cut at this many step standard deviations.
    pub kernel_sd: f64,
    pub max_nodes: usize,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self { dx_ratio: 8.0, extrapolate: true, width_sd: 9.0, kernel_sd: 10.0, max_nodes: 400_000 }
    }
}

/// Survival function on the mesh `i * dx`, `i = 0..=nodes`.
#[derive(Debug, Clone)]
pub struct SurvivalCurve {
    dx: f64,
    values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn length(&self) -> f64 {
        self.dx * (self.values.len() - 1) as f64
    }

    pub fn eval(&self, w: f64) -> f64 {
        if w < 0.0 {
            return 0.0;
        }
        let x = w / self.dx;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return if i + 1 == self.values.len() && x == i as f64 { self.values[i] } else { 1.0 };
        }
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// `∫_0^∞ u(w) g(w) dw` given the density `g` and its upper tail `sf`;
    /// Simpson's rule on each cell, `u = 1` beyond the mesh.
    pub fn integrate(&self, g: impl Fn(f64) -> f64, sf: impl Fn(f64) -> f64) -> f64 {
        let dx = self.dx;
        let mut acc = 0.0;
        let mut g_left = g(0.0);
        for (i, pair) in self.values.windows(2).enumerate() {
            let a = i as f64 * dx;
            let g_mid = g(a + 0.5 * dx);
            let g_right = g(a + dx);
            let u_mid = 0.5 * (pair[0] + pair[1]);
            acc += dx / 6.0 * (pair[0] * g_left + 4.0 * u_mid * g_mid + pair[1] * g_right);
            g_left = g_right;
        }
        acc + sf(self.length())
    }
}

/// `∫_{a}^{b} (linear from va to vb) φ_σ(y) dy` in coordinates centred on the
/// Gaussian mean.
fn segment(a: f64, b: f64, va: f64, vb: f64, sigma: f64) -> f64 {
    let (za, zb) = (a / sigma, b / sigma);
    if za > 40.0 || zb < -40.0 {
        return 0.0;
    }
    let slope = (vb - va) / (b - a);
    let alpha = va - slope * a;
    let d_phi = if za > 0.0 { normal_sf(za) - normal_sf(zb) } else { normal_cdf(zb) - normal_cdf(za) };
    let d_pdf = normal_pdf(zb) - normal_pdf(za);
    alpha * d_phi - slope * sigma * d_pdf
}

/// Transition weights for one backward step with standard deviation `sigma`
/// and barrier drift `drift` (`h_{k+1} - h_k`).
struct StepKernel {
    sigma: f64,
    drift: f64,
    offset_min: i64,
    interior: Vec<f64>,
    first: Vec<f64>,
    last: Vec<f64>,
    tail: Vec<f64>,
}

impl StepKernel {
    fn new(sigma: f64, drift: f64, dx: f64, nodes: usize, opts: &WalkOptions) -> Self {
        let n = nodes as i64;
        let reach = opts.kernel_sd * sigma + dx;
        let offset_min = (((-reach - drift) / dx).floor() as i64).max(-n);
        let offset_max = (((reach - drift) / dx).ceil() as i64).min(n);
        // Hat at node i seen from target node j: centre (i - j) dx + drift.
        let interior = (offset_min..=offset_max)
            .map(|o| {
                let c = o as f64 * dx + drift;
                segment(c - dx, c, 0.0, 1.0, sigma) + segment(c, c + dx, 1.0, 0.0, sigma)
            })
            .collect();
        let length = nodes as f64 * dx;
        let mut first = Vec::with_capacity(nodes + 1);
        let mut last = Vec::with_capacity(nodes + 1);
        let mut tail = Vec::with_capacity(nodes + 1);
        for j in 0..=nodes {
            let mu = j as f64 * dx - drift;
            first.push(segment(-mu, dx - mu, 1.0, 0.0, sigma));
            last.push(segment(length - dx - mu, length - mu, 0.0, 1.0, sigma));
            tail.push(normal_sf((length - mu) / sigma));
        }
        Self { sigma, drift, offset_min, interior, first, last, tail }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let nodes = u.len() - 1;
        let width = self.interior.len() as i64;
        for (j, slot) in out.iter_mut().enumerate() {
            let lo = (j as i64 + self.offset_min).max(1);
            let hi = (j as i64 + self.offset_min + width - 1).min(nodes as i64 - 1);
            let mut acc = u[0] * self.first[j] + u[nodes] * self.last[j] + self.tail[j];
            if lo <= hi {
                let k0 = (lo - j as i64 - self.offset_min) as usize;
                let len = (hi - lo + 1) as usize;
                acc += u[lo as usize..lo as usize + len]
                    .iter()
                    .zip(&self.interior[k0..k0 + len])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
            *slot = acc.clamp(0.0, 1.0);
        }
    }
}

/// One constraint time with the barrier value there.
fn validate(times: &[f64], barrier: &[f64]) -> Result<()> {
    if times.is_empty() || times.len() != barrier.len() {
        return Err(Error::invalid("walk oracle needs matching, non-empty times and barrier"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("walk oracle times must be nonnegative and increasing"));
    }
    if barrier.iter().any(|h| !h.is_finite()) {
        return Err(Error::invalid("barrier values must be finite"));
    }
    Ok(())
}

/// Survival curve of the walk started at the first constraint time.
fn survival(times: &[f64], barrier: &[f64], opts: &WalkOptions) -> Result<SurvivalCurve> {
    let steps: Vec<(f64, f64)> =
        times.windows(2).zip(barrier.windows(2)).map(|(t, h)| ((t[1] - t[0]).sqrt(), h[1] - h[0])).collect();
    let min_sigma = steps.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let total_sd = (times[times.len() - 1] - times[0]).sqrt();
    let (lo, hi) = barrier.iter().fold((0.0f64, 0.0f64), |(a, b), h| (a.min(*h - barrier[0]), b.max(*h - barrier[0])));
    let length = opts.width_sd * total_sd + (hi - lo);
    let dx = (min_sigma / opts.dx_ratio).min(length / 64.0);
    let nodes = (length / dx).ceil() as usize;
    if nodes > opts.max_nodes {
        return Err(Error::ResourceCap(format!("walk oracle needs {nodes} mesh nodes (cap {})", opts.max_nodes)));
    }
    let mut u = vec![1.0; nodes + 1];
    let mut next = vec![0.0; nodes + 1];
    let mut kernel: Option<StepKernel> = None;
    for &(sigma, drift) in steps.iter().rev() {
        let reuse = kernel.as_ref().is_some_and(|k| k.sigma == sigma && k.drift == drift);
        if !reuse {
            kernel = Some(StepKernel::new(sigma, drift, dx, nodes, opts));
        }
        kernel.as_ref().expect("kernel set above").apply(&u, &mut next);
        std::mem::swap(&mut u, &mut next);
    }
    Ok(SurvivalCurve { dx, values: u })
}

/// Law of `Z + B(t)` (Z absent when `density` is `None`).
struct StartLaw {
    density: Option<SmoothingDensity>,
    var: f64,
}

impl StartLaw {
    fn gaussian_sd(&self) -> Option<f64> {
        match self.density {
            None => Some(self.var.sqrt()),
            Some(SmoothingDensity::Gaussian { sigma }) => Some((sigma * sigma + self.var).sqrt()),
            Some(_) if self.var == 0.0 => None,
            Some(_) => None,
        }
    }

    const NODES: usize = 201;

    fn convolve(&self, f: impl Fn(f64) -> f64) -> f64 {
        let s = self.var.sqrt();
        let h = 20.0 / (Self::NODES - 1) as f64;
        (0..Self::NODES)
            .map(|i| {
                let y = -10.0 + h * i as f64;
                let w = if i == 0 || i == Self::NODES - 1 { 0.5 } else { 1.0 };
                w * h * normal_pdf(y) * f(s * y)
            })
            .sum()
    }

    fn pdf(&self, x: f64) -> f64 {
        if let Some(sd) = self.gaussian_sd() {
            return normal_pdf(x / sd) / sd;
        }
        let d = self.density.expect("non-Gaussian start has a density");
        if self.var == 0.0 {
            d.pdf(x)
        } else {
            self.convolve(|y| d.pdf(x - y))
        }
    }

    fn sf(&self, x: f64) -> f64 {
        if let Some(sd) = self.gaussian_sd() {
            return normal_sf(x / sd);
        }
        let d = self.density.expect("non-Gaussian start has a density");
        if self.var == 0.0 {
            d.sf(x)
        } else {
            self.convolve(|y| d.sf(x - y))
        }
    }
}

fn above_from_curve(curve: Option<&SurvivalCurve>, law: &StartLaw, shift: f64) -> f64 {
    if law.density.is_none() && law.var == 0.0 {
        // Point mass of W at -shift.
        return match curve {
            Some(c) => c.eval(-shift),
            None => (shift <= 0.0) as u8 as f64,
        };
    }
    match curve {
        Some(c) => c.integrate(|w| law.pdf(w + shift), |l| law.sf(l + shift)),
        None => law.sf(shift),
    }
}

/// Run `f` at the configured mesh, extrapolating when requested.
fn richardson(opts: &WalkOptions, f: impl Fn(&WalkOptions) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let plain = WalkOptions { extrapolate: false, ..*opts };
    let coarse = f(&plain)?;
    if !opts.extrapolate {
        return Ok(coarse);
    }
    let fine = f(&WalkOptions { dx_ratio: 2.0 * opts.dx_ratio, ..plain })?;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| ((4.0 * f - c) / 3.0).clamp(0.0, 1.0)).collect())
}

/// `P(Z + B(t_k) >= h_k for all k)`.
pub fn brownian_above(
    density: Option<SmoothingDensity>,
    times: &[f64],
    barrier: &[f64],
    opts: &WalkOptions,
) -> Result<f64> {
    validate(times, barrier)?;
    Ok(richardson(opts, |o| above_once(density, times, barrier, o).map(|p| vec![p]))?[0])
}

fn above_once(density: Option<SmoothingDensity>, times: &[f64], barrier: &[f64], opts: &WalkOptions) -> Result<f64> {
    let curve = if times.len() > 1 { Some(survival(times, barrier, opts)?) } else { None };
    let law = StartLaw { density, var: times[0] };
    Ok(above_from_curve(curve.as_ref(), &law, barrier[0]))
}

/// `(P(X ⪰ h), P(X ⪯ h))` for `X = Z + B` on the given times; the lower side
/// uses the symmetry of `B` and `Z`.
pub fn brownian_sides(
    density: Option<SmoothingDensity>,
    times: &[f64],
    barrier: &[f64],
    opts: &WalkOptions,
) -> Result<(f64, f64)> {
    let above = brownian_above(density, times, barrier, opts)?;
    let flipped: Vec<f64> = barrier.iter().map(|h| -h).collect();
    let below = brownian_above(density, times, &flipped, opts)?;
    Ok((above, below))
}

/// Side probabilities of many constant levels, sharing one backward pass.
pub fn brownian_constant_sides(
    density: Option<SmoothingDensity>,
    times: &[f64],
    levels: &[f64],
    opts: &WalkOptions,
) -> Result<Vec<(f64, f64)>> {
    let zeros = vec![0.0; times.len()];
    validate(times, &zeros)?;
    let law = StartLaw { density, var: times[0] };
    let flat = richardson(opts, |o| {
        let curve = if times.len() > 1 { Some(survival(times, &zeros, o)?) } else { None };
        Ok(levels
            .iter()
            .flat_map(|&c| [above_from_curve(curve.as_ref(), &law, c), above_from_curve(curve.as_ref(), &law, -c)])
            .collect())
    })?;
    Ok(flat.chunks(2).map(|p| (p[0], p[1])).collect())
}

/// Continuum depth of `h ≡ 0` for `Z + B` on `[0, 1]`: by the reflection
/// principle `P(Z ≥ sup(-B)) = E[P(Z ≥ |N|)]`.
pub fn smoothed_brownian_zero_depth(density: SmoothingDensity) -> Result<f64> {
    if let SmoothingDensity::Gaussian { sigma } = density {
        return Ok(sigma.atan() / std::f64::consts::PI);
    }
    crate::special::adaptive_simpson(|x| 2.0 * normal_pdf(x) * density.sf(x), 0.0, 40.0, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::sparre_andersen_exact;

    fn uniform_times(m: usize) -> Vec<f64> {
        (0..=m).map(|i| i as f64 / m as f64).collect()
    }

    #[test]
    fn unsmoothed_walk_reproduces_sparre_andersen() {
        for m in [1usize, 2, 10, 64, 256] {
            let t = uniform_times(m);
            let p = brownian_above(None, &t, &vec![0.0; m + 1], &WalkOptions::default()).unwrap();
            let exact = sparre_andersen_exact(m as u64);
            assert!((p - exact).abs() < 2e-6 * exact, "m {m}: {p} vs {exact}");
        }
    }

    #[test]
    fn single_time_reduces_to_marginal() {
        let z = SmoothingDensity::gaussian(1.0).unwrap();
        let p = brownian_above(Some(z), &[0.5], &[0.3], &WalkOptions::default()).unwrap();
        assert!((p - normal_sf(0.3 / 1.5f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn two_times_match_bivariate_normal_orthant() {
        // P(B(1/2) >= 0, B(1) >= 0) = 1/4 + asin(1/sqrt 2)/(2π) = 3/8.
        let p = brownian_above(None, &[0.5, 1.0], &[0.0, 0.0], &WalkOptions::default()).unwrap();
        assert!((p - 0.375).abs() < 1e-7, "{p}");
    }

    #[test]
    fn smoothed_depth_approaches_quarter_from_above() {
        let z = SmoothingDensity::gaussian(1.0).unwrap();
        let mut last = 1.0;
        for m in [4usize, 16, 64, 256] {
            let t = uniform_times(m);
            let sides = brownian_constant_sides(Some(z), &t, &[0.0], &WalkOptions::default()).unwrap();
            let (a, b) = sides[0];
            assert!((a - b).abs() < 1e-12);
            assert!(a < last && a > 0.25, "m {m}: {a}");
            last = a;
        }
        assert!(last - 0.25 < 0.02);
        assert!((smoothed_brownian_zero_depth(z).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn general_barrier_agrees_with_constant_levels() {
        let z = SmoothingDensity::gaussian(0.8).unwrap();
        let t = uniform_times(16);
        let opts = WalkOptions::default();
        let shared = brownian_constant_sides(Some(z), &t, &[-0.4, 0.7], &opts).unwrap();
        for (c, (a, b)) in [-0.4, 0.7].iter().zip(shared) {
            let (a2, b2) = brownian_sides(Some(z), &t, &[*c; 17], &opts).unwrap();
            assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_start_law_matches_quadrature() {
        let z = SmoothingDensity::laplace(1.0).unwrap();
        let law = StartLaw { density: Some(z), var: 0.25 };
        let direct =
            crate::special::adaptive_simpson(|y| normal_pdf(y / 0.5) / 0.5 * z.sf(0.7 - y), -6.0, 6.0, 1e-12).unwrap();
        assert!((law.sf(0.7) - direct).abs() < 1e-6);
    }
}
