use rayon::prelude::*;
use srmac_core::adder::{add_rn, add_sr_eager, add_sr_eager_with, add_sr_lazy, add_truncate, EagerFaults};
use srmac_core::rounding::{expected_up_count, round_rn_even, round_truncate, sr_neighbours};
use srmac_core::verify::{equivalence_sweep, equivalence_sweep_with, exact_sum, SweepScope};
use srmac_core::{FloatFormat, PackedFloat, RandomDraw};

fn finite_pairs(fmt: FloatFormat) -> Vec<(PackedFloat, PackedFloat)> {
    let xs: Vec<_> = fmt.finite_encodings().collect();
    xs.iter().flat_map(|&x| xs.iter().map(move |&y| (x, y))).collect()
}

fn expected_sum(x: PackedFloat, y: PackedFloat, round: impl Fn(&srmac_core::ExactReal) -> PackedFloat) -> PackedFloat {
    let fmt = x.format();
    let s = exact_sum(x, y).unwrap();
    if s.is_zero() {
        // Exact cancellation gives +0 unless both operands are -0.
        let both_neg = x.flushed().sign() && y.flushed().sign() && x.flushed().is_zero() && y.flushed().is_zero();
        fmt.zero(both_neg)
    } else {
        round(&s)
    }
}

#[test]
fn eager_equals_lazy_e3m2_all_r() {
    for r in 1..=8 {
        for fmt in [FloatFormat::E3M2, FloatFormat::E3M2.with_subnormals(false)] {
            let rep = equivalence_sweep(fmt, r, SweepScope::ExhaustiveFormat).unwrap();
            assert!(rep.passed(), "r={r} {fmt}: {rep:?}");
        }
    }
}

#[test]
fn eager_equals_lazy_e4m3_r6() {
    let rep = equivalence_sweep(FloatFormat::E4M3, 6, SweepScope::ExhaustiveFormat).unwrap();
    assert_eq!(rep.cases, 256 * 256 * 64);
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn eager_equals_lazy_e6m5_sampled() {
    let rep = equivalence_sweep(FloatFormat::E6M5, 9, SweepScope::Sampled { n: 10_000_000, seed: 11 }).unwrap();
    assert!(rep.passed(), "{rep:?}");
    let rep = equivalence_sweep(FloatFormat::E6M5, 15, SweepScope::Sampled { n: 2_000_000, seed: 12 }).unwrap();
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn mutants_are_caught() {
    for faults in [
        EagerFaults { skip_g_substitution: true, ..Default::default() },
        EagerFaults { wrong_tail_carry: true, ..Default::default() },
        EagerFaults { drop_low_propagate: true, ..Default::default() },
    ] {
        let rep = equivalence_sweep_with(FloatFormat::E4M3, 6, SweepScope::ExhaustiveFormat, |x, y, d| {
            add_sr_eager_with(x, y, d, faults)
        })
        .unwrap();
        assert!(rep.mismatches > 0, "{faults:?} went unnoticed");
        if faults.skip_g_substitution {
            let t = rep.first.unwrap().lazy_trace.unwrap();
            assert_ne!(t.normalization, srmac_core::adder::Normalization::CarryRightShift);
        }
    }
}

/// Up-count law and bracketing for every finite pair and every draw.
fn check_probability_law(fmt: FloatFormat, r: u32) {
    finite_pairs(fmt).par_iter().for_each(|&(x, y)| {
        let s = exact_sum(x, y).unwrap();
        let expected = expected_up_count(&s, fmt, r);
        let (down, up) = if s.is_zero() { (add_rn(x, y).result, add_rn(x, y).result) } else { sr_neighbours(&s, fmt, r) };
        let mut ups = [0u64; 2];
        for d in RandomDraw::all(r) {
            for (k, out) in [add_sr_lazy(x, y, d), add_sr_eager(x, y, d)].into_iter().enumerate() {
                assert!(out.result == down || out.result == up, "{x:?}+{y:?} draw {d:?}: {:?}", out.result);
                if up != down {
                    assert_eq!(out.result == up, out.flags.rounded_up);
                }
                ups[k] += out.flags.rounded_up as u64;
            }
        }
        assert_eq!(ups, [expected, expected], "{x:?} + {y:?}, r={r}");
    });
}

#[test]
fn probability_law_exhaustive_small_formats() {
    for r in 1..=7 {
        check_probability_law(FloatFormat::E3M2, r);
        check_probability_law(FloatFormat::E3M2.with_subnormals(false), r);
    }
    check_probability_law(FloatFormat::E4M3, 6);
    check_probability_law(FloatFormat::new(4, 1, true).unwrap(), 4);
}

#[test]
fn rn_and_truncate_match_oracle_exhaustive() {
    for fmt in [
        FloatFormat::E3M2,
        FloatFormat::E4M3,
        FloatFormat::E5M2,
        FloatFormat::E4M3.with_subnormals(false),
        FloatFormat::new(2, 3, true).unwrap(),
    ] {
        finite_pairs(fmt).par_iter().for_each(|&(x, y)| {
            assert_eq!(add_rn(x, y).result, expected_sum(x, y, |s| round_rn_even(s, fmt)), "{x:?} + {y:?}");
            assert_eq!(add_truncate(x, y).result, expected_sum(x, y, |s| round_truncate(s, fmt)), "{x:?} + {y:?}");
        });
    }
}

#[test]
fn commutativity_exhaustive_e3m2() {
    let fmt = FloatFormat::E3M2;
    let all: Vec<_> = fmt.all_encodings().collect();
    for &x in &all {
        for &y in &all {
            assert_eq!(add_rn(x, y).result, add_rn(y, x).result);
            for d in RandomDraw::all(5) {
                assert_eq!(add_sr_lazy(x, y, d).result, add_sr_lazy(y, x, d).result);
                assert_eq!(add_sr_eager(x, y, d).result, add_sr_eager(y, x, d).result);
            }
        }
    }
}
