//! Scalar abstraction for the statistic kernels.
//!
//! The rank and likelihood machinery is written against [`Real`] so the same
//! code runs on `f32` or `f64`. Concrete `f64` aliases for every public type
//! live at the crate root; the simulation and calibration layers are pinned
//! to `f64` because their file formats are.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + FromStr + Display + Debug + Send + Sync + 'static
{
    /// Nearest integer with ties rounded to even, as an `i64`.
    ///
    /// This is the single rounding rule used for the likelihood window
    /// bounds; keeping it here ensures every caller agrees on tie handling.
    fn round_ties_even_i64(self) -> i64;
}

impl Real for f32 {
    fn round_ties_even_i64(self) -> i64 {
        self.round_ties_even() as i64
    }
}

impl Real for f64 {
    fn round_ties_even_i64(self) -> i64 {
        self.round_ties_even() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_round_to_even() {
        assert_eq!(2.5f64.round_ties_even_i64(), 2);
        assert_eq!(3.5f64.round_ties_even_i64(), 4);
        assert_eq!(4.5f64.round_ties_even_i64(), 4);
        assert_eq!((-2.5f64).round_ties_even_i64(), -2);
        assert_eq!(2.4f64.round_ties_even_i64(), 2);
        assert_eq!(2.6f32.round_ties_even_i64(), 3);
    }
}
