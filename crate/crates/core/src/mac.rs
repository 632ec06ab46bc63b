//! Exact widening multiplier feeding a rounding accumulator.
//!
//! A `p_m`-bit multiplier format produces products with at most `2·p_m`
//! significant bits; with one more exponent bit the accumulator format holds
//! every product of two finite inputs exactly (E5M2 inputs give E6M5
//! products). The accumulator adds each product to the running value with
//! the configured rounding, consuming one random draw per SR step.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::adder::{add_with, AddFlags};
use crate::format::{FloatClass, FloatFormat, PackedFloat};
use crate::rng::{Lfsr, UniformSource, DEFAULT_WIDTH};
use crate::rounding::{round_scaled, RefMode};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundMode {
    Rn,
    SrLazy,
    SrEager,
    Truncate,
}

impl RoundMode {
    pub fn is_stochastic(self) -> bool {
        matches!(self, RoundMode::SrLazy | RoundMode::SrEager)
    }

    pub fn name(self) -> &'static str {
        match self {
            RoundMode::Rn => "rn",
            RoundMode::SrLazy => "sr-lazy",
            RoundMode::SrEager => "sr-eager",
            RoundMode::Truncate => "truncate",
        }
    }
}

impl fmt::Display for RoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoundMode {
    type Err = Error;

    /// Accepts `rn`, `sr` (lazy), `sr-lazy`, `sr-eager`, `truncate`/`tr`.
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rn" => Ok(RoundMode::Rn),
            "sr" | "sr-lazy" | "lazy" => Ok(RoundMode::SrLazy),
            "sr-eager" | "eager" => Ok(RoundMode::SrEager),
            "truncate" | "tr" | "rz" => Ok(RoundMode::Truncate),
            other => Err(Error::Parse(format!("unknown rounding mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MacConfig {
    pub mult_format: FloatFormat,
    pub acc_format: FloatFormat,
    pub mode: RoundMode,
    /// Random bits per rounding.
    pub r: u32,
    pub seed: u64,
    /// LFSR width; `None` uses `max(16, r)`.
    pub lfsr_width: Option<u32>,
}

impl MacConfig {
    /// Derives the accumulator (`p_a = 2·p_m`, `E_a = E_m + 1`) and the
    /// default `r = p_a + 3`.
    pub fn new(mult_format: FloatFormat, mode: RoundMode) -> Self {
        let acc = FloatFormat::new(
            mult_format.exp_bits() + 1,
            2 * mult_format.precision() - 1,
            mult_format.subnormals(),
        )
        .expect("widened format in range");
        Self { mult_format, acc_format: acc, mode, r: acc.precision() + 3, seed: 1, lfsr_width: None }
    }

    /// E5M2 inputs, E6M5 accumulator.
    pub fn fp8(mode: RoundMode) -> Self {
        Self::new(FloatFormat::E5M2, mode)
    }

    /// Overrides the accumulator format and resets `r` to its default.
    pub fn with_acc_format(self, acc_format: FloatFormat) -> Self {
        Self { acc_format, r: acc_format.precision() + 3, ..self }
    }

    pub fn with_r(self, r: u32) -> Self {
        Self { r, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_mode(self, mode: RoundMode) -> Self {
        Self { mode, ..self }
    }

    pub fn with_lfsr_width(self, width: u32) -> Self {
        Self { lfsr_width: Some(width), ..self }
    }

    /// Sets the subnormal policy of both formats.
    pub fn with_subnormals(self, on: bool) -> Self {
        Self {
            mult_format: self.mult_format.with_subnormals(on),
            acc_format: self.acc_format.with_subnormals(on),
            ..self
        }
    }

    pub fn subnormals(&self) -> bool {
        self.acc_format.subnormals()
    }

    pub fn effective_lfsr_width(&self) -> u32 {
        self.lfsr_width.unwrap_or(DEFAULT_WIDTH.max(self.r))
    }

    pub fn validate(&self) -> Result<(), Error> {
        let w = self.effective_lfsr_width();
        if !(4..=32).contains(&w) {
            return Err(Error::BadWidth(w));
        }
        if self.mode.is_stochastic() && !(1..=w).contains(&self.r) {
            return Err(Error::BadR { r: self.r, max: w });
        }
        Ok(())
    }

    /// The random stream for a given seed.
    pub fn lfsr(&self, seed: u64) -> Lfsr {
        Lfsr::from_seed_with_width(seed, self.effective_lfsr_width())
    }
}

/// Product in the accumulator format plus whether it had to be rounded or
/// overflowed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Product {
    pub value: PackedFloat,
    pub inexact: bool,
    pub overflow: bool,
}

/// `a · b` in `acc_format`. Exact whenever the product is in range, which
/// always holds for the derived accumulator format. Overridden narrower
/// accumulators round to nearest.
pub fn multiply(a: PackedFloat, b: PackedFloat, acc_format: FloatFormat) -> Product {
    let (a, b) = (a.flushed(), b.flushed());
    let negative = a.sign() != b.sign();
    let plain = |value| Product { value, inexact: false, overflow: false };
    use FloatClass::*;
    match (a.class(), b.class()) {
        (NaN, _) | (_, NaN) => plain(acc_format.nan()),
        (Inf, Zero) | (Zero, Inf) => plain(acc_format.nan()),
        (Inf, _) | (_, Inf) => plain(acc_format.infinity(negative)),
        (Zero, _) | (_, Zero) => plain(acc_format.zero(negative)),
        _ => {
            let (ua, ub) = (a.decode(), b.decode());
            let mant = ua.significand as u128 * ub.significand as u128;
            let exp2 = (ua.exponent - ua.format.man_bits() as i32 + ub.exponent - ub.format.man_bits() as i32) as i64;
            let r = round_scaled(negative, mant, exp2, acc_format, RefMode::NearestEven);
            Product { value: r.value, inexact: r.inexact, overflow: r.overflow }
        }
    }
}

pub fn multiply_exact(a: PackedFloat, b: PackedFloat, cfg: &MacConfig) -> PackedFloat {
    multiply(a, b, cfg.acc_format).value
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacStep {
    pub acc: PackedFloat,
    pub flags: AddFlags,
}

/// `acc + a·b`, drawing `cfg.r` bits from `rng` iff the mode is stochastic.
pub fn mac_step(acc: PackedFloat, a: PackedFloat, b: PackedFloat, cfg: &MacConfig, rng: &mut impl UniformSource) -> MacStep {
    let prod = multiply(a, b, cfg.acc_format);
    let draw = cfg.mode.is_stochastic().then(|| rng.next_draw(cfg.r));
    let out = add_with(cfg.mode, acc, prod.value, draw);
    let mut flags = out.flags;
    flags.overflow |= prod.overflow;
    flags.inexact |= prod.inexact;
    MacStep { acc: out.result, flags }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MacStats {
    pub steps: u64,
    pub round_ups: u64,
    pub overflows: u64,
    pub inexact_steps: u64,
}

impl MacStats {
    fn record(&mut self, f: &AddFlags) {
        self.steps += 1;
        self.round_ups += f.rounded_up as u64;
        self.overflows += f.overflow as u64;
        self.inexact_steps += f.inexact as u64;
    }
}

/// Left-to-right chain of [`mac_step`] starting from `init`.
pub fn accumulate_from<'a>(
    init: PackedFloat,
    pairs: impl IntoIterator<Item = (PackedFloat, PackedFloat)>,
    cfg: &MacConfig,
    rng: &mut impl UniformSource,
) -> (PackedFloat, MacStats) {
    let mut acc = init;
    let mut stats = MacStats::default();
    for (a, b) in pairs {
        let step = mac_step(acc, a, b, cfg, rng);
        acc = step.acc;
        stats.record(&step.flags);
    }
    (acc, stats)
}

/// Chain from `+0` with an LFSR seeded from `cfg.seed`.
pub fn accumulate(
    pairs: impl IntoIterator<Item = (PackedFloat, PackedFloat)>,
    cfg: &MacConfig,
) -> (PackedFloat, MacStats) {
    let mut rng = cfg.lfsr(cfg.seed);
    accumulate_from(cfg.acc_format.zero(false), pairs, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::FixedDraws;

    fn m(x: f64) -> PackedFloat {
        let p = FloatFormat::E5M2.from_f64(x);
        assert_eq!(p.to_f64(), x);
        p
    }

    #[test]
    fn derived_accumulator() {
        let c = MacConfig::fp8(RoundMode::SrLazy);
        assert_eq!(c.acc_format, FloatFormat::E6M5);
        assert_eq!(c.r, 9);
        assert_eq!(c.effective_lfsr_width(), 16);
        assert_eq!(c.with_r(20).effective_lfsr_width(), 20);
        assert!(c.with_r(20).with_lfsr_width(16).validate().is_err());
    }

    #[test]
    fn products() {
        let c = MacConfig::fp8(RoundMode::Rn);
        assert_eq!(multiply_exact(m(1.5), m(1.5), &c).to_f64(), 2.25);
        assert_eq!(multiply_exact(m(1.75), m(1.75), &c).to_f64(), 3.0625);
        let big = m(1.75 * 2f64.powi(15));
        assert_eq!(multiply_exact(big, big, &c).to_f64(), 3.0625 * 2f64.powi(30));
        let inf = FloatFormat::E5M2.infinity(false);
        assert!(multiply_exact(inf, m(0.0), &c).is_nan());
        assert_eq!(multiply_exact(inf, m(-2.0), &c), FloatFormat::E6M5.infinity(true));
        assert_eq!(multiply_exact(m(-0.0), m(2.0), &c), FloatFormat::E6M5.zero(true));
    }

    #[test]
    fn swamped_step() {
        let acc = FloatFormat::E6M5.from_f64(256.0);
        let c = MacConfig::fp8(RoundMode::Rn);
        let mut src = FixedDraws::new(vec![0]);
        assert_eq!(mac_step(acc, m(1.0), m(2f64.powi(-8)), &c, &mut src).acc.to_f64(), 256.0);
    }

    #[test]
    fn accumulate_basics() {
        for mode in [RoundMode::Rn, RoundMode::SrLazy, RoundMode::SrEager, RoundMode::Truncate] {
            let c = MacConfig::fp8(mode);
            let (v, s) = accumulate([], &c);
            assert_eq!((v, s.steps), (FloatFormat::E6M5.zero(false), 0));
            let (v, _) = accumulate([(m(1.5), m(1.5)), (m(-1.5), m(1.5))], &c);
            assert_eq!(v.to_f64(), 0.0);
            let (v, s) = accumulate([(m(1.5), m(1.5))], &c);
            assert_eq!(v.to_f64(), 2.25);
            assert_eq!(s.inexact_steps, 0);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("sr".parse::<RoundMode>().unwrap(), RoundMode::SrLazy);
        assert_eq!("SR-EAGER".parse::<RoundMode>().unwrap(), RoundMode::SrEager);
        assert!("nearest".parse::<RoundMode>().is_err());
    }
}
