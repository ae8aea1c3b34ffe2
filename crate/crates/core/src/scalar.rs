//! Scalar abstraction shared by every numeric module.
//!
//! All bound and key-rate algebra is written against [`Scalar`], so the same
//! code runs in `f64` (the default used by the CLI) and `f32`. Tolerances are
//! part of the trait because a `1e-12` check is meaningless in single
//! precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type usable by the analysis.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Largest probability mass allowed beyond a source's truncation point.
    fn tail_tolerance() -> Self;

    /// Tolerance on `sum(p) + tail == 1`.
    fn normalization_tolerance() -> Self;

    /// Relative slack used when comparing ratios in the decoy condition.
    fn ratio_epsilon() -> Self;

    /// Tolerance for Hermiticity, trace and eigenvalue checks on 2x2 states.
    fn matrix_tolerance() -> Self;

    /// Absolute threshold below which a bound denominator is treated as zero.
    fn degenerate_threshold() -> Self;

    /// Converts an `f64` literal. Panics only if the literal is not representable,
    /// which cannot happen for finite literals and the two supported types.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal converts")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Scalar for f64 {
    fn tail_tolerance() -> Self {
        1e-10
    }
    fn normalization_tolerance() -> Self {
        1e-12
    }
    fn ratio_epsilon() -> Self {
        1e-12
    }
    fn matrix_tolerance() -> Self {
        1e-12
    }
    fn degenerate_threshold() -> Self {
        1e-15
    }
}

impl Scalar for f32 {
    fn tail_tolerance() -> Self {
        1e-6
    }
    fn normalization_tolerance() -> Self {
        1e-5
    }
    fn ratio_epsilon() -> Self {
        1e-5
    }
    fn matrix_tolerance() -> Self {
        1e-5
    }
    fn degenerate_threshold() -> Self {
        1e-12
    }
}

/// Clamps `value` into `[lo, hi]`, reporting whether it moved.
pub(crate) fn clamp_flagged<T: Scalar>(value: T, lo: T, hi: T) -> (T, bool) {
    if value < lo {
        (lo, true)
    } else if value > hi {
        (hi, true)
    } else {
        (value, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(f64::half() * f64::two(), 1.0);
    }

    #[test]
    fn clamp_reports_movement() {
        assert_eq!(clamp_flagged(-0.1, 0.0, 1.0), (0.0, true));
        assert_eq!(clamp_flagged(0.3, 0.0, 1.0), (0.3, false));
        assert_eq!(clamp_flagged(1.5f32, 0.0, 1.0), (1.0, true));
    }
}
