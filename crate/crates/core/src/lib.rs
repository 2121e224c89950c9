//! Half-region depth for stochastic processes observed on finite grids.
//!
//! The crate simulates the classical process examples (Brownian motion,
//! symmetric stable, Poisson and friends), computes empirical and exact
//! half-region depths, applies the additive smoothing transform that restores
//! positive depth, and runs the Monte Carlo experiments that check the
//! consistency, rate and finite-subset limit behaviour of the empirical depth.
//!
//! Path values are generic over [`Scalar`] (`f32` or `f64`); analytic oracles
//! and probabilities are always `f64`.

pub mod analysis;
pub mod depth;
mod error;
pub mod gridfn;
pub mod io;
pub mod models;
pub mod rng;
pub mod smoothing;
pub mod special;

pub use error::{Error, Result};
pub use gridfn::{Dominance, FamilyKind, FamilySpec, Grid, GridFunction, IndexSubset};
pub use models::{MarginalSpec, PathEnsemble, ProcessKind, ProcessModel};
pub use smoothing::SmoothingDensity;

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type used for path values: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Debug + Display + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type GridFunction64 = GridFunction<f64>;
pub type GridFunction32 = GridFunction<f32>;
pub type PathEnsemble64 = PathEnsemble<f64>;
pub type PathEnsemble32 = PathEnsemble<f32>;
pub type FamilySpec64 = FamilySpec<f64>;
