//! Parameterized minifloat formats and their bit-level encoding.
//!
//! Encodings are IEEE-754 style: a sign bit, a biased exponent field and a
//! fraction field. The all-ones exponent is reserved for infinities and NaN,
//! the all-zeros exponent for zeros and subnormals. The bias is always
//! `2^(E-1) - 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::exact::ExactReal;
use crate::Error;

/// A binary floating-point format with `exp_bits` exponent bits and
/// `man_bits` stored fraction bits (precision `p = man_bits + 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    exp_bits: u32,
    man_bits: u32,
    subnormals: bool,
}

impl FloatFormat {
    pub const E3M2: FloatFormat = FloatFormat::new_unchecked(3, 2, true);
    pub const E4M3: FloatFormat = FloatFormat::new_unchecked(4, 3, true);
    pub const E5M2: FloatFormat = FloatFormat::new_unchecked(5, 2, true);
    pub const E6M5: FloatFormat = FloatFormat::new_unchecked(6, 5, true);
    pub const BINARY16: FloatFormat = FloatFormat::new_unchecked(5, 10, true);
    pub const BFLOAT16: FloatFormat = FloatFormat::new_unchecked(8, 7, true);
    pub const BINARY32: FloatFormat = FloatFormat::new_unchecked(8, 23, true);

    const fn new_unchecked(exp_bits: u32, man_bits: u32, subnormals: bool) -> Self {
        Self { exp_bits, man_bits, subnormals }
    }

    /// Requires `2 <= E <= 11`, `1 <= M <= 24` and `E + M + 1 <= 36`.
    pub fn new(exp_bits: u32, man_bits: u32, subnormals: bool) -> Result<Self, Error> {
        if !(2..=11).contains(&exp_bits) || !(1..=24).contains(&man_bits) || exp_bits + man_bits + 1 > 36 {
            return Err(Error::BadFormat(format!("E{exp_bits}M{man_bits}")));
        }
        Ok(Self::new_unchecked(exp_bits, man_bits, subnormals))
    }

    /// Same format with the given subnormal policy.
    pub const fn with_subnormals(self, subnormals: bool) -> Self {
        Self { subnormals, ..self }
    }

    pub const fn exp_bits(self) -> u32 {
        self.exp_bits
    }

    pub const fn man_bits(self) -> u32 {
        self.man_bits
    }

    /// Whether subnormal results are kept. When false they are flushed to a
    /// signed zero on output and on input to the arithmetic units.
    pub const fn subnormals(self) -> bool {
        self.subnormals
    }

    /// Precision `p`, counting the implicit bit.
    pub const fn precision(self) -> u32 {
        self.man_bits + 1
    }

    pub const fn width(self) -> u32 {
        1 + self.exp_bits + self.man_bits
    }

    pub const fn bias(self) -> i32 {
        (1 << (self.exp_bits - 1)) - 1
    }

    pub const fn emax(self) -> i32 {
        self.bias()
    }

    pub const fn emin(self) -> i32 {
        1 - self.emax()
    }

    /// Machine epsilon `2^(1-p)` as an exact value.
    pub fn epsilon(self) -> ExactReal {
        ExactReal::pow2(1 - self.precision() as i64)
    }

    pub(crate) const fn exp_field_max(self) -> u64 {
        (1 << self.exp_bits) - 1
    }

    pub(crate) const fn frac_mask(self) -> u64 {
        (1 << self.man_bits) - 1
    }

    /// `2^(p-1)`, the implicit bit as a significand integer.
    pub(crate) const fn hidden_bit(self) -> u64 {
        1 << self.man_bits
    }

    /// Number of distinct bit patterns.
    pub const fn encodings(self) -> u64 {
        1 << self.width()
    }

    pub fn positive_infinity(self) -> PackedFloat {
        PackedFloat::from_bits_unchecked(self.exp_field_max() << self.man_bits, self)
    }

    pub fn infinity(self, negative: bool) -> PackedFloat {
        self.positive_infinity().with_sign(negative)
    }

    /// The canonical quiet NaN: sign 0, top fraction bit set.
    pub fn nan(self) -> PackedFloat {
        let bits = (self.exp_field_max() << self.man_bits) | (1 << (self.man_bits - 1));
        PackedFloat::from_bits_unchecked(bits, self)
    }

    pub fn zero(self, negative: bool) -> PackedFloat {
        PackedFloat::from_bits_unchecked(0, self).with_sign(negative)
    }

    pub fn max_finite(self) -> PackedFloat {
        PackedFloat::from_bits_unchecked(((self.exp_field_max() - 1) << self.man_bits) | self.frac_mask(), self)
    }

    pub fn min_normal(self) -> PackedFloat {
        PackedFloat::from_bits_unchecked(1 << self.man_bits, self)
    }

    pub fn min_subnormal(self) -> PackedFloat {
        PackedFloat::from_bits_unchecked(1, self)
    }

    /// Iterator over every bit pattern of the format.
    pub fn all_encodings(self) -> impl Iterator<Item = PackedFloat> {
        (0..self.encodings()).map(move |b| PackedFloat::from_bits_unchecked(b, self))
    }

    /// Every finite encoding (zeros, subnormals and normals, both signs).
    pub fn finite_encodings(self) -> impl Iterator<Item = PackedFloat> {
        self.all_encodings().filter(|x| x.is_finite())
    }

    /// Decodes `bits`. Fails if `bits` does not fit in the format width.
    pub fn packed(self, bits: u64) -> Result<PackedFloat, Error> {
        PackedFloat::new(bits, self)
    }

    /// Round-to-nearest-even conversion of an `f64`, for building operands.
    pub fn from_f64(self, v: f64) -> PackedFloat {
        crate::rounding::round_f64_rn(v, self)
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}M{}{}", self.exp_bits, self.man_bits, if self.subnormals { "" } else { "ns" })
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    /// Parses `E<e>M<m>` with an optional `ns` suffix for "no subnormals".
    /// A few aliases are accepted: `fp16`, `bf16`, `fp32`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let lower = s.trim().to_ascii_lowercase();
        let (body, subnormals) = match lower.strip_suffix("ns") {
            Some(b) => (b, false),
            None => (lower.as_str(), true),
        };
        let fmt = match body {
            "fp16" | "binary16" => FloatFormat::BINARY16,
            "bf16" | "bfloat16" => FloatFormat::BFLOAT16,
            "fp32" | "binary32" => FloatFormat::BINARY32,
            _ => {
                let bad = || Error::BadFormat(s.to_string());
                let rest = body.strip_prefix('e').ok_or_else(bad)?;
                let (e, m) = rest.split_once('m').ok_or_else(bad)?;
                let e: u32 = e.parse().map_err(|_| bad())?;
                let m: u32 = m.parse().map_err(|_| bad())?;
                FloatFormat::new(e, m, true)?
            }
        };
        Ok(fmt.with_subnormals(subnormals))
    }
}

impl Serialize for FloatFormat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FloatClass {
    Zero,
    Subnormal,
    Normal,
    Inf,
    NaN,
}

/// A bit pattern tagged with its format.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackedFloat {
    bits: u64,
    format: FloatFormat,
}

impl PackedFloat {
    pub fn new(bits: u64, format: FloatFormat) -> Result<Self, Error> {
        if bits >> format.width() != 0 {
            return Err(Error::BitsOutOfRange { bits, width: format.width() });
        }
        Ok(Self { bits, format })
    }

    pub(crate) const fn from_bits_unchecked(bits: u64, format: FloatFormat) -> Self {
        Self { bits, format }
    }

    pub const fn bits(self) -> u64 {
        self.bits
    }

    pub const fn format(self) -> FloatFormat {
        self.format
    }

    pub fn sign(self) -> bool {
        self.bits >> (self.format.width() - 1) == 1
    }

    fn exp_field(self) -> u64 {
        (self.bits >> self.format.man_bits) & self.format.exp_field_max()
    }

    fn frac_field(self) -> u64 {
        self.bits & self.format.frac_mask()
    }

    pub fn with_sign(self, negative: bool) -> Self {
        let sign_bit = 1u64 << (self.format.width() - 1);
        let bits = if negative { self.bits | sign_bit } else { self.bits & !sign_bit };
        Self { bits, ..self }
    }

    pub fn negate(self) -> Self {
        self.with_sign(!self.sign())
    }

    pub fn class(self) -> FloatClass {
        match (self.exp_field(), self.frac_field()) {
            (0, 0) => FloatClass::Zero,
            (0, _) => FloatClass::Subnormal,
            (e, 0) if e == self.format.exp_field_max() => FloatClass::Inf,
            (e, _) if e == self.format.exp_field_max() => FloatClass::NaN,
            _ => FloatClass::Normal,
        }
    }

    pub fn is_nan(self) -> bool {
        self.class() == FloatClass::NaN
    }

    pub fn is_finite(self) -> bool {
        !matches!(self.class(), FloatClass::Inf | FloatClass::NaN)
    }

    pub fn is_zero(self) -> bool {
        self.class() == FloatClass::Zero
    }

    pub fn decode(self) -> UnpackedFloat {
        decode(self)
    }

    /// Exact value; fails for infinities and NaN.
    pub fn to_real(self) -> Result<ExactReal, Error> {
        self.decode().to_real()
    }

    /// Nearest `f64` (exact for every format with `p <= 53`).
    pub fn to_f64(self) -> f64 {
        match self.class() {
            FloatClass::NaN => f64::NAN,
            FloatClass::Inf if self.sign() => f64::NEG_INFINITY,
            FloatClass::Inf => f64::INFINITY,
            _ => self.decode().to_real().map(|x| x.to_f64()).unwrap_or(f64::NAN),
        }
    }

    /// Applies the format's subnormal policy: when subnormals are disabled a
    /// subnormal operand reads as a zero of the same sign.
    pub fn flushed(self) -> Self {
        if !self.format.subnormals && self.class() == FloatClass::Subnormal {
            self.format.zero(self.sign())
        } else {
            self
        }
    }

    /// `sign|exponent|fraction` in binary.
    pub fn bit_groups(self) -> String {
        let f = self.format;
        format!(
            "{}|{:0ew$b}|{:0mw$b}",
            self.sign() as u8,
            self.exp_field(),
            self.frac_field(),
            ew = f.exp_bits as usize,
            mw = f.man_bits as usize
        )
    }
}

/// Serialized as the raw bit pattern.
impl Serialize for PackedFloat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.bits)
    }
}

impl fmt::Debug for PackedFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]={}", self.format, self.bit_groups(), self.to_f64())
    }
}

impl fmt::Display for PackedFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Sign, exponent and integer significand of a value.
///
/// The value is `(-1)^sign · 2^exponent · significand · 2^(1-p)`. Zero, Inf
/// and NaN carry no numeric exponent or significand (both are zero).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnpackedFloat {
    pub sign: bool,
    pub exponent: i32,
    pub significand: u64,
    pub class: FloatClass,
    pub format: FloatFormat,
}

impl UnpackedFloat {
    /// A finite, nonzero value from sign, exponent and significand; the class
    /// is derived. `significand` must be below `2^p`.
    pub fn finite(sign: bool, exponent: i32, significand: u64, format: FloatFormat) -> Self {
        let class = if significand == 0 {
            FloatClass::Zero
        } else if significand < format.hidden_bit() {
            FloatClass::Subnormal
        } else {
            FloatClass::Normal
        };
        let (exponent, significand) = if class == FloatClass::Zero { (0, 0) } else { (exponent, significand) };
        Self { sign, exponent, significand, class, format }
    }

    pub fn special(sign: bool, class: FloatClass, format: FloatFormat) -> Self {
        Self { sign, exponent: 0, significand: 0, class, format }
    }

    pub fn to_real(&self) -> Result<ExactReal, Error> {
        match self.class {
            FloatClass::Inf | FloatClass::NaN => Err(Error::NonFinite),
            FloatClass::Zero => Ok(ExactReal::signed_zero(self.sign)),
            _ => Ok(ExactReal::from_parts(
                self.sign,
                self.significand,
                self.exponent as i64 - self.format.man_bits as i64,
            )),
        }
    }

    pub fn encode(&self) -> Result<PackedFloat, Error> {
        encode(self, self.format)
    }
}

pub fn decode(pf: PackedFloat) -> UnpackedFloat {
    let f = pf.format;
    let sign = pf.sign();
    match pf.class() {
        class @ (FloatClass::Zero | FloatClass::Inf | FloatClass::NaN) => UnpackedFloat::special(sign, class, f),
        FloatClass::Subnormal => UnpackedFloat {
            sign,
            exponent: f.emin(),
            significand: pf.frac_field(),
            class: FloatClass::Subnormal,
            format: f,
        },
        FloatClass::Normal => UnpackedFloat {
            sign,
            exponent: pf.exp_field() as i32 - f.bias(),
            significand: pf.frac_field() | f.hidden_bit(),
            class: FloatClass::Normal,
            format: f,
        },
    }
}

/// Packs `uf` into `fmt`. Subnormals become signed zeros when `fmt` does not
/// support them. Values outside the format's range are rejected; rounding
/// belongs to the caller.
pub fn encode(uf: &UnpackedFloat, fmt: FloatFormat) -> Result<PackedFloat, Error> {
    let sign_bit = (uf.sign as u64) << (fmt.width() - 1);
    let bits = match uf.class {
        FloatClass::Zero => 0,
        FloatClass::Inf => fmt.positive_infinity().bits,
        FloatClass::NaN => return Ok(fmt.nan()),
        FloatClass::Normal => {
            if uf.exponent < fmt.emin()
                || uf.exponent > fmt.emax()
                || uf.significand < fmt.hidden_bit()
                || uf.significand >= fmt.hidden_bit() << 1
            {
                return Err(Error::NotRepresentable);
            }
            (((uf.exponent + fmt.bias()) as u64) << fmt.man_bits) | (uf.significand & fmt.frac_mask())
        }
        FloatClass::Subnormal => {
            if uf.exponent != fmt.emin() || uf.significand == 0 || uf.significand >= fmt.hidden_bit() {
                return Err(Error::NotRepresentable);
            }
            if fmt.subnormals {
                uf.significand
            } else {
                0
            }
        }
    };
    Ok(PackedFloat::from_bits_unchecked(sign_bit | bits, fmt))
}
