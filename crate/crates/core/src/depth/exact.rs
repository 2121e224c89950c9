//! Closed-form depths for independent-coordinate (product) models and the
//! zero-depth criterion for infinite product sequences.

use serde::{Deserialize, Serialize};

use crate::models::MarginalSpec;
use crate::special::{ln_gamma, normal_cdf, normal_sf};
use crate::{Error, Result};

/// `C(2m, m) / 4^m`: probability that a symmetric continuous random walk
/// stays nonnegative for `m` steps.
pub fn sparre_andersen_exact(m: u64) -> f64 {
    let m = m as f64;
    (ln_gamma(2.0 * m + 1.0) - 2.0 * ln_gamma(m + 1.0) - m * 4f64.ln()).exp()
}

/// `(P(Z ≥ a), P(Z ≤ a))`, each evaluated from its own tail.
fn tails(spec: &MarginalSpec, a: f64) -> (f64, f64) {
    let at = |x: f64| (if a <= x { 1.0 } else { 0.0 }, if a >= x { 1.0 } else { 0.0 });
    match spec {
        MarginalSpec::Gaussian { mu, sigma } => {
            let z = (a - mu) / sigma;
            (normal_sf(z), normal_cdf(z))
        }
        MarginalSpec::PointMass { x } => at(*x),
        MarginalSpec::TwoPoint { c, d } => {
            let parts = [(-c, *d), (0.0, 1.0 - 2.0 * d), (*c, *d)];
            parts.iter().fold((0.0, 0.0), |(ge, le), (x, w)| {
                let (g, l) = at(*x);
                (ge + w * g, le + w * l)
            })
        }
        MarginalSpec::Uniform { a: lo, b: hi } => {
            let f = ((a - lo) / (hi - lo)).clamp(0.0, 1.0);
            (1.0 - f, f)
        }
        MarginalSpec::MixtureAtomContinuous { atom, weight, continuous } => {
            let (g, l) = at(*atom);
            let (cg, cl) = tails(continuous, a);
            (weight * g + (1.0 - weight) * cg, weight * l + (1.0 - weight) * cl)
        }
    }
}

/// The two products whose minimum is the depth of `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductSides {
    /// `∏ P(Z_t ≥ a_t)`.
    pub upper: f64,
    /// `∏ P(Z_t ≤ a_t)`.
    pub lower: f64,
}

impl ProductSides {
    pub fn depth(&self) -> f64 {
        self.upper.min(self.lower)
    }
}

fn log_sides(marginals: &[MarginalSpec], a: &[f64]) -> Result<(f64, f64)> {
    if marginals.len() != a.len() {
        return Err(Error::GridMismatch(format!("{} marginals but {} query values", marginals.len(), a.len())));
    }
    let mut up = 0.0;
    let mut lo = 0.0;
    for (spec, x) in marginals.iter().zip(a) {
        spec.validate()?;
        let (ge, le) = tails(spec, *x);
        up += ge.ln();
        lo += le.ln();
    }
    Ok((up, lo))
}

pub fn product_sides(marginals: &[MarginalSpec], a: &[f64]) -> Result<ProductSides> {
    let (up, lo) = log_sides(marginals, a)?;
    Ok(ProductSides { upper: up.exp(), lower: lo.exp() })
}

/// `min(∏ F_t(a_t), ∏ (1 − F_t^−(a_t)))` for independent coordinates,
/// accumulated in log space.
pub fn exact_product_depth(marginals: &[MarginalSpec], a: &[f64]) -> Result<f64> {
    let (up, lo) = log_sides(marginals, a)?;
    Ok(up.min(lo).exp())
}

/// Off-atom probabilities `q_k = P(Z_t ≠ a_t)` for the coordinates after the
/// explicit list (`k = 0, 1, ...`). `below_share` is the part of `q_k` lying
/// strictly below `a_t`; the rest lies strictly above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailModel {
    /// The explicit list is the whole sequence.
    None,
    /// `q_k = q`.
    Constant { q: f64, below_share: f64 },
    /// `q_k = first · ratio^k`.
    Geometric { first: f64, ratio: f64, below_share: f64 },
    /// `q_k = scale · (k + 1)^(−power)`.
    PowerLaw { scale: f64, power: f64, below_share: f64 },
}

impl TailModel {
    fn validate(&self) -> Result<()> {
        let share_ok = |s: f64| (0.0..=1.0).contains(&s);
        let ok = match *self {
            TailModel::None => true,
            TailModel::Constant { q, below_share } => (0.0..=1.0).contains(&q) && share_ok(below_share),
            TailModel::Geometric { first, ratio, below_share } => {
                (0.0..=1.0).contains(&first) && (0.0..1.0).contains(&ratio) && share_ok(below_share)
            }
            TailModel::PowerLaw { scale, power, below_share } => {
                (0.0..=1.0).contains(&scale) && power.is_finite() && power > 0.0 && share_ok(below_share)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent tail model {self:?}")))
        }
    }

    fn below_share(&self) -> f64 {
        match *self {
            TailModel::None => 0.0,
            TailModel::Constant { below_share, .. }
            | TailModel::Geometric { below_share, .. }
            | TailModel::PowerLaw { below_share, .. } => below_share,
        }
    }

    fn term(&self, k: u64) -> f64 {
        match *self {
            TailModel::None => 0.0,
            TailModel::Constant { q, .. } => q,
            TailModel::Geometric { first, ratio, .. } => first * ratio.powf(k as f64),
            TailModel::PowerLaw { scale, power, .. } => scale * ((k + 1) as f64).powf(-power),
        }
    }

    /// Whether `Σ_k q_k` diverges.
    pub fn diverges(&self) -> bool {
        match *self {
            TailModel::None | TailModel::Geometric { .. } => false,
            TailModel::Constant { q, .. } => q > 0.0,
            TailModel::PowerLaw { scale, power, .. } => scale > 0.0 && power <= 1.0,
        }
    }

    /// `Σ_k ln(1 − share · q_k)` for a convergent tail.
    fn log_product(&self, share: f64) -> f64 {
        const EXPLICIT_TERMS: u64 = 1_000_000;
        match *self {
            TailModel::None => 0.0,
            TailModel::Constant { .. } => 0.0,
            TailModel::Geometric { .. } => {
                let mut sum = 0.0;
                for k in 0.. {
                    let q = share * self.term(k);
                    if q < 1e-20 || k >= EXPLICIT_TERMS {
                        break;
                    }
                    sum += (-q).ln_1p();
                }
                sum
            }
            TailModel::PowerLaw { scale, power, .. } => {
                let mut sum = 0.0;
                for k in 0..EXPLICIT_TERMS {
                    sum += (-share * self.term(k)).ln_1p();
                }
                // Remaining terms are below 1e-6 · scale, so ln(1 − x) ≈ −x and
                // the sum is the integral tail of k^(−power).
                let k0 = EXPLICIT_TERMS as f64 + 0.5;
                sum - share * scale * k0.powf(1.0 - power) / (power - 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ZeroDepthVerdict {
    /// `P(Z_t ≥ a_t) = 0` or `P(Z_t ≤ a_t) = 0` at the 1-based coordinate `t`.
    ZeroByBoundary {
        coordinate: usize,
        side: Side,
    },
    /// `Σ P(Z_t ≠ a_t)` diverges; partial sums over growing prefixes.
    ZeroByDivergence {
        partial_sums: Vec<f64>,
    },
    Positive {
        value: f64,
    },
}

impl ZeroDepthVerdict {
    pub fn is_zero(&self) -> bool {
        !matches!(self, ZeroDepthVerdict::Positive { .. })
    }
}

/// Decide whether the depth of the sequence `a` is zero under independent
/// coordinates: an explicit prefix of marginals followed by `tail`.
pub fn nasc_verdict(marginals: &[MarginalSpec], a: &[f64], tail: TailModel) -> Result<ZeroDepthVerdict> {
    tail.validate()?;
    if marginals.len() != a.len() {
        return Err(Error::GridMismatch(format!("{} marginals but {} query values", marginals.len(), a.len())));
    }
    let mut off_atom = Vec::with_capacity(marginals.len());
    for (t, (spec, x)) in marginals.iter().zip(a).enumerate() {
        spec.validate()?;
        let (ge, le) = tails(spec, *x);
        if ge <= 0.0 {
            return Ok(ZeroDepthVerdict::ZeroByBoundary { coordinate: t + 1, side: Side::Above });
        }
        if le <= 0.0 {
            return Ok(ZeroDepthVerdict::ZeroByBoundary { coordinate: t + 1, side: Side::Below });
        }
        // P(Z ≠ a) = P(Z > a) + P(Z < a) = (1 − le) + (1 − ge).
        off_atom.push((1.0 - le) + (1.0 - ge));
    }
    if tail.diverges() {
        let explicit: f64 = off_atom.iter().sum();
        let partial_sums = [0u64, 10, 100, 1000, 10_000]
            .iter()
            .map(|&k| explicit + (0..k).map(|j| tail.term(j)).sum::<f64>())
            .collect();
        return Ok(ZeroDepthVerdict::ZeroByDivergence { partial_sums });
    }
    let (up, lo) = log_sides(marginals, a)?;
    let share = tail.below_share();
    let up = up + tail.log_product(share);
    let lo = lo + tail.log_product(1.0 - share);
    Ok(ZeroDepthVerdict::Positive { value: up.min(lo).exp() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_ratio(m: u64) -> f64 {
        // Independent product form: ∏_{k=1..m} (2k − 1) / (2k).
        (1..=m).map(|k| (2 * k - 1) as f64 / (2 * k) as f64).product()
    }

    #[test]
    fn sparre_andersen_values() {
        assert!((sparre_andersen_exact(1) - 0.5).abs() < 1e-14);
        assert!((sparre_andersen_exact(10) - 184756.0 / 1048576.0).abs() < 1e-13);
        let s100 = sparre_andersen_exact(100);
        assert!((s100 - 0.056348).abs() < 5e-7);
        assert!(s100 < 1.0 / (100.0 * std::f64::consts::PI).sqrt());
        for m in [2, 7, 64, 500] {
            assert!((sparre_andersen_exact(m) / binomial_ratio(m) - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn product_depth_examples() {
        let normals = vec![MarginalSpec::standard_normal(); 10];
        let d = exact_product_depth(&normals, &[0.0; 10]).unwrap();
        assert!((d / 2f64.powi(-10) - 1.0).abs() <= 1e-12);

        let atoms: Vec<_> = (0..5).map(|t| MarginalSpec::PointMass { x: t as f64 }).collect();
        let a: Vec<f64> = (0..5).map(|t| t as f64).collect();
        assert_eq!(exact_product_depth(&atoms, &a).unwrap(), 1.0);

        let mut mixed = vec![MarginalSpec::standard_normal(); 3];
        mixed.extend(vec![MarginalSpec::PointMass { x: 0.0 }; 7]);
        assert!((exact_product_depth(&mixed, &[0.0; 10]).unwrap() - 0.125).abs() < 1e-15);

        assert!(exact_product_depth(&normals, &[0.0; 3]).is_err());
    }

    #[test]
    fn product_depth_sign_symmetry() {
        let specs = vec![
            MarginalSpec::standard_normal(),
            MarginalSpec::TwoPoint { c: 1.0, d: 0.3 },
            MarginalSpec::Uniform { a: -2.0, b: 2.0 },
            MarginalSpec::Gaussian { mu: 0.0, sigma: 3.0 },
        ];
        for a in [[0.3, -1.0, 0.5, 2.0], [0.0, 1.0, -1.5, 0.1]] {
            let neg: Vec<f64> = a.iter().map(|x| -x).collect();
            assert_eq!(exact_product_depth(&specs, &a).unwrap(), exact_product_depth(&specs, &neg).unwrap());
        }
    }

    #[test]
    fn long_products_do_not_underflow_to_garbage() {
        let normals = vec![MarginalSpec::standard_normal(); 3000];
        let d = exact_product_depth(&normals, &vec![0.0; 3000]).unwrap();
        assert_eq!(d, 0.0);
        let (up, _) = log_sides(&normals, &vec![0.0; 3000]).unwrap();
        assert!((up - 3000.0 * 0.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn verdict_divergence_for_continuous_marginals() {
        let normals = vec![MarginalSpec::standard_normal(); 5];
        let v = nasc_verdict(&normals, &[0.2; 5], TailModel::Constant { q: 1.0, below_share: 0.5 }).unwrap();
        match v {
            ZeroDepthVerdict::ZeroByDivergence { partial_sums } => {
                assert!(partial_sums.windows(2).all(|w| w[1] > w[0]));
                assert!((partial_sums[4] - 10_005.0).abs() < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
        let harmonic = TailModel::PowerLaw { scale: 0.5, power: 1.0, below_share: 0.5 };
        assert!(nasc_verdict(&[], &[], harmonic).unwrap().is_zero());
    }

    #[test]
    fn verdict_boundary_witness() {
        let specs = vec![
            MarginalSpec::standard_normal(),
            MarginalSpec::standard_normal(),
            MarginalSpec::Uniform { a: 0.0, b: 1.0 },
        ];
        let v = nasc_verdict(&specs, &[0.0, 0.0, 2.0], TailModel::None).unwrap();
        assert_eq!(v, ZeroDepthVerdict::ZeroByBoundary { coordinate: 3, side: Side::Above });
    }

    #[test]
    fn verdict_positive_for_summable_atoms() {
        // P(Z_t = 0) = 1 − 2^(−t) with a symmetric Gaussian remainder.
        let m = 8;
        let specs: Vec<_> = (1..=m)
            .map(|t| MarginalSpec::MixtureAtomContinuous {
                atom: 0.0,
                weight: 1.0 - 0.5f64.powi(t),
                continuous: Box::new(MarginalSpec::standard_normal()),
            })
            .collect();
        let tail = TailModel::Geometric { first: 0.5f64.powi(m + 1), ratio: 0.5, below_share: 0.5 };
        let v = nasc_verdict(&specs, &[0.0; 8], tail).unwrap();
        let oracle: f64 = (1..400).map(|t| 1.0 - 0.5 * 0.5f64.powi(t)).product();
        match v {
            ZeroDepthVerdict::Positive { value } => assert!((value - oracle).abs() < 1e-13, "{value} {oracle}"),
            other => panic!("unexpected {other:?}"),
        }
        let direct = exact_product_depth(&specs, &[0.0; 8]).unwrap();
        let head: f64 = (1..=8).map(|t| 1.0 - 0.5 * 0.5f64.powi(t)).product();
        assert!((direct - head).abs() < 1e-14);
    }

    #[test]
    fn power_law_tail_product() {
        let tail = TailModel::PowerLaw { scale: 0.5, power: 2.0, below_share: 0.5 };
        let v = nasc_verdict(&[], &[], tail).unwrap();
        // ∏ (1 − 1/(4k²)) = sin(π/2)/(π/2) = 2/π.
        match v {
            ZeroDepthVerdict::Positive { value } => assert!((value - 2.0 / std::f64::consts::PI).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        assert!(nasc_verdict(&[], &[], TailModel::Geometric { first: 0.1, ratio: 1.0, below_share: 0.5 }).is_err());
    }
}
