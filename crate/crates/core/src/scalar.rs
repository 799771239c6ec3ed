//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the geometry and bandit math is generic over.
///
/// Implemented for `f32` and `f64`; everything the kernels need (ordering,
/// `ln`, `sqrt`, conversions from counts) comes from `num-traits`.
pub trait Scalar: Float + FromPrimitive + Debug + Display + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + 'static {}
