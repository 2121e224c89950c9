//! Summary statistics and the log-tail regression.

use serde::{Deserialize, Serialize};

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Distribution summary of one statistic at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: u64,
    pub reps: usize,
    pub mean: f64,
    pub median: f64,
    pub q95: f64,
    pub q99: f64,
    pub max: f64,
}

impl ErrorRow {
    pub fn from_values(n: u64, values: &[f64]) -> Self {
        let s = sorted(values);
        Self {
            n,
            reps: values.len(),
            mean: mean(values),
            median: quantile_sorted(&s, 0.5),
            q95: quantile_sorted(&s, 0.95),
            q99: quantile_sorted(&s, 0.99),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub r: f64,
    pub exceedance: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// `-slope` of `log P̂(S ≥ r)` against `r²`.
    pub alpha: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fewest positive-exceedance points accepted for a tail fit.
pub const MIN_TAIL_POINTS: usize = 4;

pub fn tail_table(samples: &[f64], r_grid: &[f64]) -> Vec<TailPoint> {
    r_grid
        .iter()
        .map(|&r| {
            let count = samples.iter().filter(|s| **s >= r).count() as u64;
            TailPoint { r, exceedance: count as f64 / samples.len() as f64, count }
        })
        .collect()
}

/// Regress `log exceedance` on `r²` over points with positive exceedance.
pub fn fit_tail(points: &[TailPoint]) -> Option<TailFit> {
    let used: Vec<&TailPoint> = points.iter().filter(|p| p.count > 0).collect();
    if used.len() < MIN_TAIL_POINTS {
        return None;
    }
    let x: Vec<f64> = used.iter().map(|p| p.r * p.r).collect();
    let y: Vec<f64> = used.iter().map(|p| p.exceedance.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Some(TailFit {
        alpha: -fit.slope,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        points: used.len(),
    })
}

/// Evenly spaced `r` values between two sample quantiles.
pub fn auto_r_grid(samples: &[f64], points: usize, q_lo: f64, q_hi: f64) -> Vec<f64> {
    let s = sorted(samples);
    let lo = quantile_sorted(&s, q_lo);
    let hi = quantile_sorted(&s, q_hi);
    if points < 2 || hi <= lo {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_and_moments() {
        let v = [3.0, 1.0, 2.0, 4.0];
        let s = sorted(&v);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(mean(&v), 2.5);
        assert!((variance(&v) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_line_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_tail_fit_recovers_alpha() {
        // Exceedances of exp(-2 r²) give alpha = 2.
        let pts: Vec<TailPoint> = (1..8)
            .map(|i| {
                let r = 0.2 * i as f64;
                TailPoint { r, exceedance: (-2.0 * r * r).exp(), count: 1 }
            })
            .collect();
        let fit = fit_tail(&pts).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-12);
        assert!(fit_tail(&pts[..3]).is_none());
    }
}
