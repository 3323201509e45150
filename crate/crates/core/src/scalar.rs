//! Scalar abstraction: every load, rate, and coordinate in this crate is
//! generic over a floating-point type. `f64` is the default used by the
//! aliases at the crate root; `f32` works wherever its precision suffices.

use rand::distributions::uniform::SampleUniform;
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar for load dynamics and geometry: f32 or f64.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + ndarray::ScalarOperand
    + SampleUniform
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal (tolerances, constants).
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert into the scalar type")
    }

    /// Conversion from a count or index.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert into the scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
