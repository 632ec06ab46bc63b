use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srmac_core::adder::add_rn;
use srmac_core::rounding::{decompose, expected_up_count, round_exact, round_rn_even, round_sr_reference, round_truncate, RefMode};
use srmac_core::{ExactReal, FloatFormat, PackedFloat, RandomDraw};

fn formats() -> impl Strategy<Value = FloatFormat> {
    (2u32..=8, 1u32..=10, any::<bool>()).prop_map(|(e, m, s)| FloatFormat::new(e, m, s).unwrap())
}

fn exact_value() -> impl Strategy<Value = ExactReal> {
    (any::<bool>(), 1u64..(1 << 40), -90i64..60).prop_map(|(s, m, e)| ExactReal::from_parts(s, m, e))
}

fn up_neighbour(x: &ExactReal, fmt: FloatFormat, r: u32) -> PackedFloat {
    round_sr_reference(x, fmt, RandomDraw::new(0, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn representable_values_are_fixed_points(fmt in formats(), bits in any::<u64>(), v in 0u32..64) {
        let x = fmt.packed(bits % fmt.encodings()).unwrap();
        prop_assume!(x.is_finite());
        let x = x.flushed();
        let real = x.to_real().unwrap();
        let r = 6;
        prop_assert_eq!(round_rn_even(&real, fmt), x);
        prop_assert_eq!(round_truncate(&real, fmt), x);
        prop_assert_eq!(round_sr_reference(&real, fmt, RandomDraw::new(v, r).unwrap()), x);
    }

    #[test]
    fn sr_brackets_and_counts(fmt in formats(), x in exact_value(), r in 1u32..=10) {
        let down = round_truncate(&x, fmt);
        let up = up_neighbour(&x, fmt, r);
        let mut ups = 0u64;
        for d in RandomDraw::all(r) {
            let v = round_sr_reference(&x, fmt, d);
            prop_assert!(v == down || v == up);
            ups += (v == up && up != down) as u64;
        }
        if up != down {
            prop_assert_eq!(ups, expected_up_count(&x, fmt, r));
        }
    }

    #[test]
    fn sr_mean_is_truncated_value(x in exact_value(), r in 1u32..=8) {
        // Unbounded-range format so that no overflow or flush interferes.
        let fmt = FloatFormat::new(11, 4, true).unwrap();
        let d = decompose(&x, fmt).unwrap();
        let total: ExactReal = RandomDraw::all(r).map(|dr| round_sr_reference(&x, fmt, dr).to_real().unwrap()).sum();
        let mean = total.scale_pow2(-(r as i64));
        // tr(x) + sign · ε · 2^e · ε_x', with ε_x' the r-bit truncated residual.
        let ulp = ExactReal::pow2(d.exponent - fmt.man_bits() as i64);
        let trunc = &round_truncate(&x, fmt).to_real().unwrap();
        let step = &ulp * &ExactReal::from_parts(x.is_negative(), d.residual_units(r), -(r as i64));
        prop_assert_eq!(mean, trunc + &step);
    }

    #[test]
    fn decomposition_identity(fmt in formats(), x in exact_value()) {
        let d = decompose(&x, fmt).unwrap();
        prop_assert!(d.residual < ExactReal::from_u64(1));
        let m = &d.truncated_significand(fmt) + &(&d.residual * &fmt.epsilon());
        prop_assert_eq!(&m * &ExactReal::pow2(d.exponent), x.abs());
        if d.exponent > fmt.emin() as i64 {
            prop_assert!(d.truncated >= 1 << fmt.man_bits());
        }
    }

    #[test]
    fn no_subnormal_outputs_without_support(fmt in formats(), x in exact_value()) {
        let fmt = fmt.with_subnormals(false);
        for mode in [RefMode::NearestEven, RefMode::Truncate] {
            prop_assert_ne!(round_exact(&x, fmt, mode).value.class(), srmac_core::FloatClass::Subnormal);
        }
    }

    #[test]
    fn rn_picks_a_nearest_neighbour(fmt in formats(), x in exact_value()) {
        // Flushing makes zero a possible result that is not a neighbour.
        let fmt = fmt.with_subnormals(true);
        let rn = round_rn_even(&x, fmt);
        if !rn.is_finite() {
            return Ok(());
        }
        let down = round_truncate(&x, fmt);
        let up = up_neighbour(&x, fmt, 30);
        prop_assert!(rn == down || rn == up);
        if up.is_finite() && down != up {
            let dd = (&x - &down.to_real().unwrap()).abs();
            let du = (&up.to_real().unwrap() - &x).abs();
            let chosen = if rn == down { &dd } else { &du };
            prop_assert!(chosen <= &dd && chosen <= &du);
        }
    }
}

#[test]
fn rn_agrees_with_native_binary32_addition() {
    let fmt = FloatFormat::BINARY32;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1_000_000u32 {
        let a = f32::from_bits(rng.random());
        let b = if i % 2 == 0 {
            f32::from_bits(rng.random())
        } else {
            // Close exponents exercise the rounding logic much more often.
            a * rng.random_range(-4.0f32..4.0)
        };
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        let want = a + b;
        let x = fmt.packed(a.to_bits() as u64).unwrap();
        let y = fmt.packed(b.to_bits() as u64).unwrap();
        let got = add_rn(x, y).result;
        if want.is_nan() {
            assert!(got.is_nan());
        } else {
            assert_eq!(got.bits(), want.to_bits() as u64, "{a:e} + {b:e}");
        }
    }
}

#[test]
fn rn_agrees_with_binary16_reference() {
    use half::f16;
    let fmt = FloatFormat::BINARY16;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1_000_000u32 {
        let a = f16::from_bits(rng.random());
        let b = f16::from_bits(rng.random());
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        // Sums of two binary16 values are exact in f64. The reference
        // converts from f32 only, since its f64 path rounds twice.
        let sum = a.to_f64() + b.to_f64();
        if (sum as f32) as f64 != sum {
            continue;
        }
        let want = f16::from_f32(sum as f32);
        let got = add_rn(fmt.packed(a.to_bits() as u64).unwrap(), fmt.packed(b.to_bits() as u64).unwrap()).result;
        if want.to_f64() == 0.0 {
            assert_eq!(got.to_f64(), 0.0);
        } else {
            assert_eq!(got.bits(), want.to_bits() as u64, "{a} + {b}");
        }
        let v = f32::from_bits(rng.random());
        if !v.is_nan() {
            assert_eq!(fmt.from_f64(v as f64).bits(), f16::from_f32(v).to_bits() as u64, "{v:e}");
        }
    }
}

#[test]
fn binary32_conversion_agrees_with_casts() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1_000_000u32 {
        let v = f64::from_bits(rng.random());
        if v.is_nan() {
            continue;
        }
        assert_eq!(FloatFormat::BINARY32.from_f64(v).bits(), (v as f32).to_bits() as u64, "{v:e}");
    }
}

#[test]
fn sr_quarter_residual_rounds_up_in_four_of_sixteen() {
    let fmt = FloatFormat::E6M5;
    let x = ExactReal::from_f64(1.0 + 2f64.powi(-7)).unwrap();
    assert_eq!(expected_up_count(&x, fmt, 4), 4);
    let up = fmt.from_f64(1.03125);
    let ups: Vec<u32> = RandomDraw::all(4).filter(|&d| round_sr_reference(&x, fmt, d) == up).map(|d| d.value()).collect();
    assert_eq!(ups, vec![0, 1, 2, 3]);
}
