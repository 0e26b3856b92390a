//! Floating-point scalar abstraction shared by the market, rank and metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

/// Real scalar the simulation is generic over; implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Uniform draw from `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` constant, rounding to the nearest representable value.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
