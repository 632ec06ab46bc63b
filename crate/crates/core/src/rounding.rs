//! Definition-level rounding of exact values into a format.
//!
//! These functions work on [`ExactReal`] and are slow but obviously correct;
//! they are the oracles the hardware models are checked against.
//!
//! Stochastic rounding follows the comparison form: with `ε_x` the residual
//! of the significand in units of the last place and `X` an `r`-bit draw read
//! as a fraction, the value rounds up iff `X < ε_x`. The residual is first
//! truncated to `r` fractional bits, so with a uniform draw it rounds up in
//! exactly `2^r · ε_x'` of the `2^r` cases.

use num_traits::ToPrimitive;

use crate::exact::ExactReal;
use crate::format::{FloatFormat, PackedFloat, UnpackedFloat};
use crate::rng::RandomDraw;
use crate::Error;

/// `|x| = 2^exponent · (truncated + residual) · 2^(1-p)` with `residual` in
/// `[0, 1)`. `exponent` is pinned to `e_min` below the normal range, where
/// `truncated < 2^(p-1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub negative: bool,
    pub exponent: i64,
    /// `tr(m) / ε` as an integer in `[0, 2^p)`.
    pub truncated: u64,
    /// `ε_x ∈ [0, 1)`.
    pub residual: ExactReal,
}

impl Decomposition {
    /// `tr(m)` as an exact value in `[0, 2)`.
    pub fn truncated_significand(&self, fmt: FloatFormat) -> ExactReal {
        ExactReal::from_parts(false, self.truncated, 1 - fmt.precision() as i64)
    }

    /// `floor(2^r · ε_x)`, the number of `r`-bit draws that round up.
    pub fn residual_units(&self, r: u32) -> u64 {
        self.residual.floor_abs_scaled(r as i64).to_u64().expect("residual < 1")
    }
}

pub fn decompose(x: &ExactReal, fmt: FloatFormat) -> Result<Decomposition, Error> {
    let log2 = x.floor_log2().ok_or(Error::ZeroInput)?;
    let exponent = log2.max(fmt.emin() as i64);
    let scaled = x.abs().scale_pow2(fmt.precision() as i64 - 1 - exponent);
    let (int, residual) = scaled.split_abs();
    let truncated = int.to_u64().expect("scaled significand < 2^p");
    Ok(Decomposition { negative: x.is_negative(), exponent, truncated, residual })
}

/// How [`round_exact`] picks between the two neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefMode {
    Truncate,
    NearestEven,
    /// Round up iff `draw < 2^r · ε_x'`.
    Stochastic(RandomDraw),
}

/// A rounded value plus what happened on the way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rounded {
    pub value: PackedFloat,
    pub rounded_up: bool,
    pub inexact: bool,
    pub overflow: bool,
}

/// Rounds `x` into `fmt`. Overflow goes to a signed infinity; subnormal
/// results become signed zeros when the format has no subnormals.
pub fn round_exact(x: &ExactReal, fmt: FloatFormat, mode: RefMode) -> Rounded {
    if x.is_zero() {
        return Rounded { value: fmt.zero(x.is_negative()), rounded_up: false, inexact: false, overflow: false };
    }
    let d = decompose(x, fmt).expect("nonzero");
    let inexact = !d.residual.is_zero();
    let up = match mode {
        RefMode::Truncate => false,
        RefMode::NearestEven => {
            let half = ExactReal::pow2(-1);
            d.residual > half || (d.residual == half && d.truncated & 1 == 1)
        }
        RefMode::Stochastic(draw) => (draw.value() as u64) < d.residual_units(draw.bits()),
    };
    let mut r = pack_rounded(d.negative, d.exponent, d.truncated + up as u64, fmt);
    r.rounded_up = up;
    r.inexact |= inexact;
    r
}

/// Packs `(-1)^negative · 2^exponent · significand · 2^(1-p)` where
/// `significand <= 2^p` (the upper bound arises after a round-up carry) and
/// `exponent >= e_min`.
pub(crate) fn pack_rounded(negative: bool, mut exponent: i64, mut significand: u64, fmt: FloatFormat) -> Rounded {
    let hidden = 1u64 << fmt.man_bits();
    if significand == hidden << 1 {
        significand >>= 1;
        exponent += 1;
    }
    debug_assert!(significand < hidden << 1);
    debug_assert!(exponent >= fmt.emin() as i64);
    let mut out = Rounded { value: fmt.zero(negative), rounded_up: false, inexact: false, overflow: false };
    if significand >= hidden && exponent > fmt.emax() as i64 {
        out.value = fmt.infinity(negative);
        out.overflow = true;
        out.inexact = true;
        return out;
    }
    let uf = UnpackedFloat::finite(negative, exponent as i32, significand, fmt);
    out.value = uf.encode().expect("in range by construction");
    if uf.class == crate::FloatClass::Subnormal && !fmt.subnormals() {
        out.inexact = true;
    }
    out
}

/// Rounds `(-1)^negative · mantissa · 2^exp2` into `fmt` without big
/// integers. Agrees with [`round_exact`] on every input.
pub fn round_scaled(negative: bool, mantissa: u128, exp2: i64, fmt: FloatFormat, mode: RefMode) -> Rounded {
    if mantissa == 0 {
        return Rounded { value: fmt.zero(negative), rounded_up: false, inexact: false, overflow: false };
    }
    let p = fmt.precision() as i64;
    let log2 = exp2 + 127 - mantissa.leading_zeros() as i64;
    let exponent = log2.max(fmt.emin() as i64);
    // Bits of the mantissa below the last place of the result.
    let drop = exponent - (p - 1) - exp2;
    let (truncated, rem) = if drop <= 0 {
        ((mantissa << -drop) as u64, 0)
    } else if drop >= 128 {
        (0, mantissa)
    } else {
        ((mantissa >> drop) as u64, mantissa & ((1u128 << drop) - 1))
    };
    let up = match mode {
        _ if rem == 0 => false,
        RefMode::Truncate => false,
        RefMode::NearestEven => {
            let half_bit = drop - 1;
            if half_bit >= 128 {
                false
            } else {
                let half = 1u128 << half_bit;
                rem > half || (rem == half && truncated & 1 == 1)
            }
        }
        RefMode::Stochastic(draw) => {
            let r = draw.bits() as i64;
            let units = if drop >= r {
                if drop - r >= 128 {
                    0
                } else {
                    rem >> (drop - r)
                }
            } else {
                rem << (r - drop)
            };
            (draw.value() as u128) < units
        }
    };
    let mut out = pack_rounded(negative, exponent, truncated + up as u64, fmt);
    out.rounded_up = up;
    out.inexact |= rem != 0;
    out
}

/// Rounds an `f64` with IEEE specials.
pub fn round_f64(v: f64, fmt: FloatFormat, mode: RefMode) -> Rounded {
    let plain = |value| Rounded { value, rounded_up: false, inexact: false, overflow: false };
    if v.is_nan() {
        return plain(fmt.nan());
    }
    if v.is_infinite() {
        return plain(fmt.infinity(v < 0.0));
    }
    let bits = v.to_bits();
    let negative = bits >> 63 == 1;
    let exp_field = ((bits >> 52) & 0x7FF) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp2) = if exp_field == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp_field - 1075) };
    round_scaled(negative, mantissa as u128, exp2, fmt, mode)
}

/// Stochastic rounding by comparison with the draw.
pub fn round_sr_reference(x: &ExactReal, fmt: FloatFormat, draw: RandomDraw) -> PackedFloat {
    round_exact(x, fmt, RefMode::Stochastic(draw)).value
}

pub fn round_rn_even(x: &ExactReal, fmt: FloatFormat) -> PackedFloat {
    round_exact(x, fmt, RefMode::NearestEven).value
}

pub fn round_truncate(x: &ExactReal, fmt: FloatFormat) -> PackedFloat {
    round_exact(x, fmt, RefMode::Truncate).value
}

/// `2^r · ε_x'` for `x`: how many of the `2^r` draws round `x` up. Zero for
/// zero and for representable values.
pub fn expected_up_count(x: &ExactReal, fmt: FloatFormat, r: u32) -> u64 {
    match decompose(x, fmt) {
        Ok(d) => d.residual_units(r),
        Err(_) => 0,
    }
}

/// The two rounding candidates `(down, up)` of `x` under `r`-bit SR. They are
/// equal when `x` is representable after truncating its residual to `r` bits.
pub fn sr_neighbours(x: &ExactReal, fmt: FloatFormat, r: u32) -> (PackedFloat, PackedFloat) {
    let max = RandomDraw::new(((1u64 << r) - 1) as u32, r).expect("r <= 32");
    let zero = RandomDraw::new(0, r).expect("r <= 32");
    (round_sr_reference(x, fmt, max), round_sr_reference(x, fmt, zero))
}

/// Round-to-nearest-even conversion of an `f64`, with IEEE specials.
pub fn round_f64_rn(v: f64, fmt: FloatFormat) -> PackedFloat {
    round_f64(v, fmt, RefMode::NearestEven).value
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: FloatFormat = FloatFormat::E6M5;

    fn ex(v: f64) -> ExactReal {
        ExactReal::from_f64(v).unwrap()
    }

    fn draw(v: u32, r: u32) -> RandomDraw {
        RandomDraw::new(v, r).unwrap()
    }

    #[test]
    fn decompose_examples() {
        let d = decompose(&ex(1.0 + 2f64.powi(-6)), F).unwrap();
        assert_eq!((d.exponent, d.truncated), (0, 32));
        assert_eq!(d.residual, ex(0.5));
        assert_eq!(d.truncated_significand(F), ex(1.0));

        let d = decompose(&ex(1.5), F).unwrap();
        assert!(d.residual.is_zero());

        let d = decompose(&ex(2f64.powi(-40)), F).unwrap();
        assert_eq!(d.exponent, -30);
        assert_eq!(d.truncated, 0);
        // m = 2^-10, so the residual in units of ε = 2^-5 is 2^-5.
        assert_eq!(d.residual, ex(2f64.powi(-5)));

        assert_eq!(decompose(&ExactReal::zero(), F), Err(Error::ZeroInput));
    }

    #[test]
    fn decomposition_identity() {
        for v in [3.0, -7.25, 1.0 / 3.0, 1e-12, 123456.789] {
            let x = ex(v);
            let d = decompose(&x, F).unwrap();
            let eps = F.epsilon();
            let m = &d.truncated_significand(F) + &(&d.residual * &eps);
            let back = (&m * &ExactReal::pow2(d.exponent)).abs();
            assert_eq!(back, x.abs());
        }
    }

    #[test]
    fn discrete_sr_law_quarter_residual() {
        // ε_x = 1/4, r = 4: draws 0..=3 round up.
        let x = ex(1.0 + 2f64.powi(-7));
        let up = ex(1.0 + 2f64.powi(-5));
        let ups: Vec<u32> =
            (0..16).filter(|&v| round_sr_reference(&x, F, draw(v, 4)).to_real().unwrap() == up).collect();
        assert_eq!(ups, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sr_half_residual_r9() {
        let x = ex(1.0 + 2f64.powi(-6));
        let up = F.from_f64(1.03125);
        let n = (0..512).filter(|&v| round_sr_reference(&x, F, draw(v, 9)) == up).count();
        assert_eq!(n, 256);
        assert_eq!(expected_up_count(&x, F, 9), 256);
    }

    #[test]
    fn residual_is_truncated_to_r_bits() {
        // ε_x = 1/4 + 2^-10 truncates to 1/4 with r = 4.
        let x = ex(1.0 + 2f64.powi(-7) + 2f64.powi(-15));
        assert_eq!(expected_up_count(&x, F, 4), 4);
        assert_eq!(expected_up_count(&x, F, 12), 1024 + 4);
    }

    #[test]
    fn rn_examples() {
        assert_eq!(round_rn_even(&ex(1.0 + 2f64.powi(-6)), F).to_f64(), 1.0);
        assert_eq!(round_rn_even(&ex(1.0 + 2f64.powi(-6) + 2f64.powi(-12)), F).to_f64(), 1.03125);
        assert_eq!(round_rn_even(&ex(1.25), F).to_f64(), 1.25);
        // Tie with odd truncation rounds up to even.
        assert_eq!(round_rn_even(&ex(1.03125 + 2f64.powi(-6)), F).to_f64(), 1.0625);
    }

    #[test]
    fn truncate_examples() {
        let v = 1.0 + 2f64.powi(-6);
        assert_eq!(round_truncate(&ex(v), F).to_f64(), 1.0);
        assert_eq!(round_truncate(&ex(-v), F).to_f64(), -1.0);
        assert_eq!(round_truncate(&ex(1.96875), F).to_f64(), 1.96875);
    }

    #[test]
    fn overflow_and_zero() {
        let max = F.max_finite().to_f64();
        assert_eq!(round_rn_even(&ex(max * 1.5), F), F.infinity(false));
        assert_eq!(round_truncate(&ex(-max * 1.5), F), F.infinity(true));
        // A quarter ulp above max: RN stays, SR up goes to infinity.
        let above = ex(max + 2f64.powi(24));
        assert_eq!(round_rn_even(&above, F), F.max_finite());
        let (down, up) = sr_neighbours(&above, F, 13);
        assert_eq!((down, up), (F.max_finite(), F.infinity(false)));
        assert_eq!(round_rn_even(&ExactReal::signed_zero(true), F), F.zero(true));
    }

    #[test]
    fn subnormal_flush_on_output() {
        let ns = F.with_subnormals(false);
        let tiny = ex(3.0 * 2f64.powi(-34));
        assert_eq!(round_rn_even(&tiny, F).to_f64(), 3.0 * 2f64.powi(-34));
        let r = round_exact(&tiny, ns, RefMode::NearestEven);
        assert_eq!(r.value, ns.zero(false));
        assert!(r.inexact);
        assert_eq!(round_rn_even(&(-tiny), ns), ns.zero(true));
    }

    #[test]
    fn scaled_matches_exact() {
        let fmts = [F, F.with_subnormals(false), FloatFormat::E5M2, FloatFormat::E3M2, FloatFormat::BINARY16];
        let mut seed = 0x1234_5678_9abc_def0u64;
        for _ in 0..20_000 {
            seed = crate::rng::mix64(seed);
            let m = (seed >> 20) as u128 >> (seed % 40);
            let e = (seed % 120) as i64 - 80;
            let neg = seed & 1 == 1;
            let x = ExactReal::from_parts(neg, m as u64, e);
            for fmt in fmts {
                let modes = [
                    RefMode::Truncate,
                    RefMode::NearestEven,
                    RefMode::Stochastic(draw((seed >> 7) as u32 & 511, 9)),
                    RefMode::Stochastic(draw((seed >> 9) as u32 & 3, 2)),
                ];
                for mode in modes {
                    assert_eq!(round_scaled(neg, m, e, fmt, mode), round_exact(&x, fmt, mode), "{x} {fmt} {mode:?}");
                }
            }
        }
    }

    #[test]
    fn f64_to_e5m2() {
        let f = FloatFormat::E5M2;
        assert_eq!(f.from_f64(1.0).bits(), 0b0_01111_00);
        assert_eq!(f.from_f64(-2.0).bits(), 0b1_10000_00);
        assert_eq!(f.from_f64(1.0 + 0.125 + 2f64.powi(-6)).to_f64(), 1.25);
        assert_eq!(f.from_f64(70000.0), f.infinity(false));
        assert!(f.from_f64(f64::NAN).is_nan());
    }
}
