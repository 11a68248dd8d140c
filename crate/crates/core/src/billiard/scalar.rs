//! Scalar abstraction for the collision geometry.
//!
//! The collision kernel is generic over the arithmetic type so the same
//! code drives production `f64` runs and high-precision verification.
//! Chaotic expansion multiplies rounding errors by a factor per
//! collision, so checks that retrace tens of collisions (time reversal,
//! mirror symmetry) are meaningless in double precision; they run on a
//! 512-bit float instead.

use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, RoundingMode, Word};

/// Arithmetic required by the collision kernel: field operations, order,
/// square root. Only `f64` values enter (configs and states are `f64`),
/// so `from_f64` is exact for any type with at least 53 mantissa bits.
pub trait Real:
    Clone
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }

    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

/// Default precision (bits) of [`BigReal`]. At roughly 1.5 decimal
/// digits lost per collision, 512 bits keep a 100-collision retrace far
/// below any 1e-8 tolerance.
pub const BIG_PRECISION: usize = 512;

const RM: RoundingMode = RoundingMode::ToEven;

/// 512-bit software float for verification runs.
#[derive(Debug, Clone)]
pub struct BigReal(BigFloat);

impl PartialEq for BigReal {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(std::cmp::Ordering::Equal)
    }
}

impl PartialOrd for BigReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl Add for BigReal {
    type Output = BigReal;
    fn add(self, rhs: BigReal) -> BigReal {
        BigReal(self.0.add(&rhs.0, BIG_PRECISION, RM))
    }
}

impl Sub for BigReal {
    type Output = BigReal;
    fn sub(self, rhs: BigReal) -> BigReal {
        BigReal(self.0.sub(&rhs.0, BIG_PRECISION, RM))
    }
}

impl Mul for BigReal {
    type Output = BigReal;
    fn mul(self, rhs: BigReal) -> BigReal {
        BigReal(self.0.mul(&rhs.0, BIG_PRECISION, RM))
    }
}

impl Div for BigReal {
    type Output = BigReal;
    fn div(self, rhs: BigReal) -> BigReal {
        BigReal(self.0.div(&rhs.0, BIG_PRECISION, RM))
    }
}

impl Neg for BigReal {
    type Output = BigReal;
    fn neg(self) -> BigReal {
        BigReal(self.0.neg())
    }
}

impl Real for BigReal {
    fn from_f64(v: f64) -> Self {
        BigReal(BigFloat::from_f64(v, BIG_PRECISION))
    }

    fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        if self.0.is_zero() {
            return 0.0;
        }
        match self.0.as_raw_parts() {
            None => f64::NAN,
            Some((words, _prec, sign, exp, _inexact)) => {
                // Normalized mantissa in [1/2, 1), most significant word
                // last; three words are plenty for a double.
                let bits = Word::BITS as i32;
                let mut m = 0.0f64;
                let mut weight = 2.0f64.powi(-bits);
                for w in words.iter().rev().take(3) {
                    m += *w as f64 * weight;
                    weight *= 2.0f64.powi(-bits);
                }
                let v = m * 2.0f64.powi(exp);
                if sign.is_negative() {
                    -v
                } else {
                    v
                }
            }
        }
    }

    fn sqrt(&self) -> Self {
        BigReal(self.0.sqrt(BIG_PRECISION, RM))
    }

    fn abs(&self) -> Self {
        BigReal(self.0.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trip() {
        for v in [0.0, 1.0, -0.3, 0.7071067811865476, 1e-12, -2.5e3] {
            let b = BigReal::from_f64(v);
            assert_eq!(b.to_f64(), v, "round trip of {v}");
        }
    }

    #[test]
    fn arithmetic_matches_f64_at_double_scale() {
        let a = BigReal::from_f64(0.3);
        let b = BigReal::from_f64(0.4);
        let s = (a.clone() * a + b.clone() * b).sqrt();
        assert!((s.to_f64() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exactness_beyond_double() {
        // (1 + 2^-60) - 1 survives at 512 bits.
        let one = BigReal::from_f64(1.0);
        let tiny = BigReal::from_f64(2.0f64.powi(-60));
        let d = (one.clone() + tiny.clone()) - one;
        assert_eq!(d.to_f64(), 2.0f64.powi(-60));
    }

    #[test]
    fn ordering_and_abs() {
        let a = BigReal::from_f64(-0.25);
        assert!(a < BigReal::zero());
        assert_eq!(a.abs().to_f64(), 0.25);
    }
}
