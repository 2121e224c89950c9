//! Additive smoothing `X(t) = Y(t) + Z` by one independent real variable per
//! path, the smoothing densities, and the total-variation shift bounds that
//! make the smoothed depth Lipschitz in `h`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::models::PathEnsemble;
use crate::rng::{self, DOMAIN_SMOOTHING};
use crate::special::{adaptive_simpson_split, normal_cdf, normal_pdf, normal_sf};
use crate::{Error, Result, Scalar};

/// Strictly positive, symmetric, unimodal density for the smoothing variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensitySpec", into = "DensitySpec")]
pub enum SmoothingDensity {
    Gaussian { sigma: f64 },
    Laplace { b: f64 },
    Cauchy { gamma: f64 },
}

/// Wire form: `{"family": "gaussian" | "laplace" | "cauchy", "scale": number}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub family: DensityFamily,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityFamily {
    Gaussian,
    Laplace,
    Cauchy,
}

impl TryFrom<DensitySpec> for SmoothingDensity {
    type Error = Error;

    fn try_from(spec: DensitySpec) -> Result<Self> {
        SmoothingDensity::new(spec.family, spec.scale)
    }
}

impl From<SmoothingDensity> for DensitySpec {
    fn from(d: SmoothingDensity) -> Self {
        let family = match d {
            SmoothingDensity::Gaussian { .. } => DensityFamily::Gaussian,
            SmoothingDensity::Laplace { .. } => DensityFamily::Laplace,
            SmoothingDensity::Cauchy { .. } => DensityFamily::Cauchy,
        };
        DensitySpec { family, scale: d.scale() }
    }
}

impl std::str::FromStr for DensityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DensityFamily::Gaussian),
            "laplace" => Ok(DensityFamily::Laplace),
            "cauchy" => Ok(DensityFamily::Cauchy),
            other => Err(Error::invalid(format!("unknown density family `{other}`"))),
        }
    }
}

/// Quadrature window half-width, in units of the family scale.
pub const QUADRATURE_HALF_WIDTH: f64 = 20.0;
pub const QUADRATURE_TOL: f64 = 1e-9;

impl SmoothingDensity {
    pub fn new(family: DensityFamily, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("density scale must be positive, got {scale}")));
        }
        Ok(match family {
            DensityFamily::Gaussian => SmoothingDensity::Gaussian { sigma: scale },
            DensityFamily::Laplace => SmoothingDensity::Laplace { b: scale },
            DensityFamily::Cauchy => SmoothingDensity::Cauchy { gamma: scale },
        })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(DensityFamily::Gaussian, sigma)
    }

    pub fn laplace(b: f64) -> Result<Self> {
        Self::new(DensityFamily::Laplace, b)
    }

    pub fn cauchy(gamma: f64) -> Result<Self> {
        Self::new(DensityFamily::Cauchy, gamma)
    }

    pub fn scale(&self) -> f64 {
        match *self {
            SmoothingDensity::Gaussian { sigma } => sigma,
            SmoothingDensity::Laplace { b } => b,
            SmoothingDensity::Cauchy { gamma } => gamma,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            SmoothingDensity::Gaussian { sigma } => normal_pdf(x / sigma) / sigma,
            SmoothingDensity::Laplace { b } => (-x.abs() / b).exp() / (2.0 * b),
            SmoothingDensity::Cauchy { gamma } => 1.0 / (PI * gamma * (1.0 + (x / gamma).powi(2))),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            SmoothingDensity::Gaussian { sigma } => -x / (sigma * sigma) * self.pdf(x),
            SmoothingDensity::Laplace { b } => -x.signum() / b * self.pdf(x),
            SmoothingDensity::Cauchy { gamma } => {
                let u = x / gamma;
                -2.0 * u / (PI * gamma * gamma * (1.0 + u * u).powi(2))
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            self.sf(-x)
        } else {
            1.0 - self.sf(x)
        }
    }

    /// Upper tail `P(Z > x)`.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            SmoothingDensity::Gaussian { sigma } => normal_sf(x / sigma),
            SmoothingDensity::Laplace { b } => {
                if x >= 0.0 {
                    0.5 * (-x / b).exp()
                } else {
                    1.0 - 0.5 * (x / b).exp()
                }
            }
            SmoothingDensity::Cauchy { gamma } => 0.5 - (x / gamma).atan() / PI,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SmoothingDensity::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            SmoothingDensity::Laplace { b } => {
                let u: f64 = rng.random_range(-0.5..0.5);
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            SmoothingDensity::Cauchy { gamma } => {
                let u: f64 = rng.random_range(-0.5..0.5);
                gamma * (PI * u).tan()
            }
        }
    }

    /// `∫|f'|`, which equals `2 f(0)` for symmetric unimodal densities.
    pub fn grad_l1(&self) -> f64 {
        2.0 * self.pdf(0.0)
    }

    /// Non-smooth points of the density.
    fn kinks(&self) -> Vec<f64> {
        match self {
            SmoothingDensity::Laplace { .. } => vec![0.0],
            _ => vec![],
        }
    }

    /// `∫ f` over the quadrature window plus the closed-form tail mass.
    pub fn total_mass_by_quadrature(&self) -> Result<f64> {
        let w = QUADRATURE_HALF_WIDTH * self.scale();
        let core = adaptive_simpson_split(|x| self.pdf(x), -w, w, &self.kinks(), QUADRATURE_TOL)?;
        Ok(core + 2.0 * self.sf(w))
    }

    /// `∫|f'|` over the quadrature window plus the tail contribution `2 f(w)`
    /// (the density is monotone beyond the window).
    pub fn grad_l1_by_quadrature(&self) -> Result<f64> {
        let w = QUADRATURE_HALF_WIDTH * self.scale();
        let core = adaptive_simpson_split(|x| self.derivative(x).abs(), -w, w, &[0.0], QUADRATURE_TOL)?;
        Ok(core + 2.0 * self.pdf(w))
    }
}

/// Add one draw `Z_j` to every value of path `j`.
pub fn smooth_ensemble<T: Scalar>(
    ens: &PathEnsemble<T>,
    density: SmoothingDensity,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    if ens.is_smoothed() {
        return Err(Error::Domain("ensemble is already smoothed".into()));
    }
    let mut out = ens.clone();
    out.add_per_path(|j| T::of(density.sample(&mut rng::stream(seed, DOMAIN_SMOOTHING, j as u64))));
    out.mark_smoothed(density, seed);
    Ok(out)
}

/// Total-variation shift of a density against its `grad_l1` bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftCheck {
    /// `∫|f(x + δ) − f(x)| dx`.
    pub lhs: f64,
    /// `|δ| ∫|f'|`.
    pub rhs: f64,
    /// `2 |δ| ∫|f'|`, the bound on the shift of the margin tail.
    pub w3_bound: f64,
}

impl ShiftCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + QUADRATURE_TOL
    }
}

pub fn tv_shift_check(density: SmoothingDensity, delta: f64) -> Result<ShiftCheck> {
    if !delta.is_finite() {
        return Err(Error::invalid("shift must be finite"));
    }
    let g = density.grad_l1();
    if delta == 0.0 {
        return Ok(ShiftCheck { lhs: 0.0, rhs: 0.0, w3_bound: 0.0 });
    }
    let d = delta.abs();
    let w = QUADRATURE_HALF_WIDTH * density.scale() + d;
    // The integrand is symmetric in the sign of delta (x -> -x - delta).
    let mut breaks = vec![-d / 2.0];
    for k in density.kinks() {
        breaks.push(k);
        breaks.push(k - d);
    }
    let core = adaptive_simpson_split(|x| (density.pdf(x + d) - density.pdf(x)).abs(), -w, w, &breaks, QUADRATURE_TOL)?;
    // Beyond the window both tails are monotone, so the integrand has one sign.
    let right = (density.sf(w) - density.sf(w + d)).abs();
    let left = (density.cdf(-w + d) - density.cdf(-w)).abs();
    let lhs = core + right + left;
    Ok(ShiftCheck { lhs, rhs: d * g, w3_bound: 2.0 * d * g })
}

/// Lower bound `∫_{2c + ‖h‖∞}^∞ ½ f_Z` on `P(X ⪰ h)` for a smoothed process
/// whose unsmoothed part satisfies `P(‖Y‖∞ ≤ c) > 1/2`.
pub fn positivity_floor(density: SmoothingDensity, c: f64, h_sup: f64) -> f64 {
    0.5 * density.sf(2.0 * c + h_sup)
}

/// Closed-form `∫|f(x + δ) − f(x)|` for the Gaussian family: `2(2Φ(|δ|/2σ) − 1)`.
pub fn gaussian_tv_shift(sigma: f64, delta: f64) -> f64 {
    2.0 * (2.0 * normal_cdf(delta.abs() / (2.0 * sigma)) - 1.0)
}
