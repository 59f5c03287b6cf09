//! Scalar abstractions shared by the planning arithmetic.
//!
//! Netting and lot-sizing only need ring operations, an ordering and a
//! "round up to a multiple" primitive, so they are written against
//! [`Quantity`] and work unchanged for integer pieces, floating-point
//! quantities and exact rationals. The simulation itself instantiates them
//! with [`crate::Pieces`].

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, Num};

/// A planning quantity: pieces, fractional quantities or exact rationals.
pub trait Quantity: Num + Copy + PartialOrd + Debug {
    /// Smallest `k * step` with integer `k >= 0` such that `k * step >= self`.
    ///
    /// `step` must be strictly positive.
    fn round_up_to_multiple(self, step: Self) -> Self;

    fn max_zero(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

macro_rules! int_quantity {
    ($($t:ty),*) => {$(
        impl Quantity for $t {
            fn round_up_to_multiple(self, step: Self) -> Self {
                if self <= 0 {
                    return 0;
                }
                let k = self / step + if self % step == 0 { 0 } else { 1 };
                k * step
            }
        }
    )*};
}

int_quantity!(i32, i64, i128);

macro_rules! float_quantity {
    ($($t:ty),*) => {$(
        impl Quantity for $t {
            fn round_up_to_multiple(self, step: Self) -> Self {
                if self <= 0.0 {
                    return 0.0;
                }
                Float::ceil(self / step) * step
            }
        }
    )*};
}

float_quantity!(f32, f64);

impl<T> Quantity for Ratio<T>
where
    T: num_integer::Integer + Copy + Debug,
{
    fn round_up_to_multiple(self, step: Self) -> Self {
        if self <= <Self as num_traits::Zero>::zero() {
            return <Self as num_traits::Zero>::zero();
        }
        (self / step).ceil() * step
    }
}
