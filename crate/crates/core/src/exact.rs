//! Exact dyadic rationals.
//!
//! Every finite binary floating-point value, and every finite sum or product
//! of such values, is a dyadic rational `±n·2^k`. [`ExactReal`] stores exactly
//! that and never rounds, which makes it the oracle type for the rounding and
//! adder checks.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// An exact value `(-1)^negative · magnitude · 2^exp2`.
///
/// The representation is canonical: the magnitude is odd, or the magnitude is
/// zero and `exp2 == 0`. The sign of zero is kept so that `-0` survives a trip
/// through the oracle, but comparisons treat `-0 == +0`.
#[derive(Clone, Debug)]
pub struct ExactReal {
    negative: bool,
    magnitude: BigUint,
    exp2: i64,
}

impl ExactReal {
    pub fn zero() -> Self {
        Self { negative: false, magnitude: BigUint::zero(), exp2: 0 }
    }

    pub fn signed_zero(negative: bool) -> Self {
        Self { negative, ..Self::zero() }
    }

    /// `(-1)^negative · magnitude · 2^exp2`.
    pub fn from_parts(negative: bool, magnitude: impl Into<BigUint>, exp2: i64) -> Self {
        Self::canonical(negative, magnitude.into(), exp2)
    }

    pub fn from_u64(v: u64) -> Self {
        Self::from_parts(false, v, 0)
    }

    pub fn from_i64(v: i64) -> Self {
        Self::from_parts(v < 0, v.unsigned_abs(), 0)
    }

    /// `2^k`.
    pub fn pow2(k: i64) -> Self {
        Self::from_parts(false, 1u32, k)
    }

    /// Exact conversion of a finite `f64`. Returns `None` for NaN or infinity.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        let bits = v.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        Some(Self::from_parts(negative, mant, exp))
    }

    fn canonical(negative: bool, mut magnitude: BigUint, mut exp2: i64) -> Self {
        if magnitude.is_zero() {
            return Self::signed_zero(negative);
        }
        let tz = magnitude.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            magnitude >>= tz;
            exp2 += tz as i64;
        }
        Self { negative, magnitude, exp2 }
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    /// Odd part of the magnitude (zero for zero).
    pub fn magnitude(&self) -> &BigUint {
        &self.magnitude
    }

    pub fn exp2(&self) -> i64 {
        self.exp2
    }

    pub fn abs(&self) -> Self {
        Self { negative: false, ..self.clone() }
    }

    /// Multiply by `2^k`, exactly.
    pub fn scale_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        Self { exp2: self.exp2 + k, ..self.clone() }
    }

    /// `floor(log2 |self|)`, or `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.magnitude.bits() as i64 - 1 + self.exp2)
        }
    }

    /// Splits `|self|` into `(floor(|self|), |self| - floor(|self|))`.
    pub fn split_abs(&self) -> (BigUint, ExactReal) {
        if self.exp2 >= 0 {
            return (&self.magnitude << self.exp2 as u64, Self::zero());
        }
        let shift = (-self.exp2) as u64;
        let int = &self.magnitude >> shift;
        let mask = (BigUint::one() << shift) - 1u32;
        let frac = &self.magnitude & mask;
        (int, Self::canonical(false, frac, self.exp2))
    }

    /// `floor(|self| · 2^k)` as an integer.
    pub fn floor_abs_scaled(&self, k: i64) -> BigUint {
        self.abs().scale_pow2(k).split_abs().0
    }

    /// Nearest `f64` (ties-to-even), saturating to infinity. Meant for
    /// reporting; exact comparisons stay in `ExactReal`.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return if self.negative { -0.0 } else { 0.0 };
        }
        let bits = self.magnitude.bits() as i64;
        // Keep 64 leading bits plus a sticky bit; f64 conversion of u64 rounds
        // to nearest-even, and the sticky bit breaks false ties.
        let (top, exp) = if bits > 64 {
            let shift = (bits - 63) as u64;
            let top = (&self.magnitude >> shift).to_u64().unwrap_or(u64::MAX);
            let sticky = self.magnitude.trailing_zeros().map_or(false, |tz| tz < shift);
            ((top << 1) | sticky as u64, self.exp2 + shift as i64 - 1)
        } else {
            (self.magnitude.to_u64().unwrap_or(0), self.exp2)
        };
        let v = scale_f64(top as f64, exp);
        if self.negative {
            -v
        } else {
            v
        }
    }

    fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let la = self.floor_log2().unwrap();
        let lb = other.floor_log2().unwrap();
        if la != lb {
            return la.cmp(&lb);
        }
        let e = self.exp2.min(other.exp2);
        let a = &self.magnitude << (self.exp2 - e) as u64;
        let b = &other.magnitude << (other.exp2 - e) as u64;
        a.cmp(&b)
    }
}

fn scale_f64(mut v: f64, mut exp: i64) -> f64 {
    // Step in chunks so intermediate powers never overflow or flush early.
    while exp > 0 {
        let s = exp.min(1000);
        v *= 2f64.powi(s as i32);
        exp -= s;
    }
    while exp < 0 {
        let s = (-exp).min(1000);
        v *= 2f64.powi(-(s as i32));
        exp += s;
    }
    v
}

impl PartialEq for ExactReal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExactReal {}

impl PartialOrd for ExactReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactReal {
    fn cmp(&self, other: &Self) -> Ordering {
        let sa = if self.is_zero() { 0 } else if self.negative { -1 } else { 1 };
        let sb = if other.is_zero() { 0 } else if other.negative { -1 } else { 1 };
        match (sa as i32).cmp(&sb) {
            Ordering::Equal if sa == 0 => Ordering::Equal,
            Ordering::Equal if sa > 0 => self.cmp_abs(other),
            Ordering::Equal => other.cmp_abs(self),
            ord => ord,
        }
    }
}

impl Neg for ExactReal {
    type Output = ExactReal;
    fn neg(self) -> ExactReal {
        ExactReal { negative: !self.negative, ..self }
    }
}

impl Neg for &ExactReal {
    type Output = ExactReal;
    fn neg(self) -> ExactReal {
        -self.clone()
    }
}

impl Add for &ExactReal {
    type Output = ExactReal;
    fn add(self, rhs: &ExactReal) -> ExactReal {
        if rhs.is_zero() {
            if self.is_zero() {
                // IEEE convention for exact zero sums: -0 only if both are -0.
                return ExactReal::signed_zero(self.negative && rhs.negative);
            }
            return self.clone();
        }
        if self.is_zero() {
            return rhs.clone();
        }
        let e = self.exp2.min(rhs.exp2);
        let a = &self.magnitude << (self.exp2 - e) as u64;
        let b = &rhs.magnitude << (rhs.exp2 - e) as u64;
        if self.negative == rhs.negative {
            ExactReal::canonical(self.negative, a + b, e)
        } else {
            match a.cmp(&b) {
                Ordering::Equal => ExactReal::zero(),
                Ordering::Greater => ExactReal::canonical(self.negative, a - b, e),
                Ordering::Less => ExactReal::canonical(rhs.negative, b - a, e),
            }
        }
    }
}

impl Add for ExactReal {
    type Output = ExactReal;
    fn add(self, rhs: ExactReal) -> ExactReal {
        &self + &rhs
    }
}

impl Sub for &ExactReal {
    type Output = ExactReal;
    fn sub(self, rhs: &ExactReal) -> ExactReal {
        self + &(-rhs)
    }
}

impl Sub for ExactReal {
    type Output = ExactReal;
    fn sub(self, rhs: ExactReal) -> ExactReal {
        &self - &rhs
    }
}

impl Mul for &ExactReal {
    type Output = ExactReal;
    fn mul(self, rhs: &ExactReal) -> ExactReal {
        let negative = self.negative != rhs.negative;
        if self.is_zero() || rhs.is_zero() {
            return ExactReal::signed_zero(negative);
        }
        ExactReal::canonical(negative, &self.magnitude * &rhs.magnitude, self.exp2 + rhs.exp2)
    }
}

impl Mul for ExactReal {
    type Output = ExactReal;
    fn mul(self, rhs: ExactReal) -> ExactReal {
        &self * &rhs
    }
}

impl std::iter::Sum for ExactReal {
    fn sum<I: Iterator<Item = ExactReal>>(iter: I) -> Self {
        iter.fold(ExactReal::zero(), |acc, x| &acc + &x)
    }
}

impl fmt::Display for ExactReal {
    /// Prints as `±n*2^k` when not an integer, else as a plain integer.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.negative { "-" } else { "" };
        if self.exp2 >= 0 {
            write!(f, "{sign}{}", &self.magnitude << self.exp2 as u64)
        } else {
            write!(f, "{sign}{}*2^{}", self.magnitude, self.exp2)
        }
    }
}
