use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type that costs are computed in.
///
/// Implemented for `f32`, `f64` and `Ratio<i64>` through the blanket impl.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static
{
    fn from_minutes(minutes: u32) -> Self {
        Self::from_u32(minutes).expect("minute count representable in scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn ratio(numer: u32, denom: u32) -> Self {
        Self::from_u32(numer).expect("numerator representable")
            / Self::from_u32(denom).expect("denominator representable")
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static
{
}
