//! Scalar abstraction so the learning code runs on f32 or f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the tree, network, and boosting math.
pub trait Scalar:
    Float + Sum + Debug + Display + Serialize + DeserializeOwned + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self {
        num_traits::cast(x).expect("finite f64 converts to scalar")
    }

    fn to_f64(self) -> f64 {
        num_traits::cast(self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
