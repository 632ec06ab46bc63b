//! Oracle checks for the adders: the exact SR up-count law, lazy/eager
//! equivalence sweeps, and generation of input pairs covering every
//! datapath trace.

use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adder::{add_rn, add_sr_eager, add_sr_lazy, AddOutcome, AddTrace, EffectiveOp, Normalization, Path};
use crate::exact::ExactReal;
use crate::format::{FloatClass, FloatFormat, PackedFloat};
use crate::rng::{mix64, Lfsr, RandomDraw, UniformSource, DEFAULT_WIDTH};
use crate::rounding::{expected_up_count, sr_neighbours};
use crate::Error;

/// Exact sum of two finite values, after the input flush policy. Zero sums
/// are `-0` only when both operands are `-0`.
pub fn exact_sum(x: PackedFloat, y: PackedFloat) -> Result<ExactReal, Error> {
    Ok(&x.flushed().to_real()? + &y.flushed().to_real()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DrawSpace {
    Exhaustive { size: u64 },
    Sampled { n: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrawMode {
    Exhaustive,
    Sampled { n: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityReport {
    pub x: u64,
    pub y: u64,
    pub format: FloatFormat,
    pub r: u32,
    /// `2^r · ε_x'` of the exact sum.
    pub expected_up_count: u64,
    pub lazy_up_count: u64,
    pub eager_up_count: u64,
    pub draw_space: DrawSpace,
    /// Accepted deviation of the observed count (zero when exhaustive).
    pub tolerance: f64,
    pub passed: bool,
    /// First draw where a result was not one of the two SR neighbours or the
    /// adders disagreed.
    pub offending_draw: Option<u32>,
}

/// Runs the SR adders over the draw space and compares the number of
/// round-ups (rounding carries) with the exact law. Every result must also
/// be one of the two SR neighbours of the exact sum and agree with the
/// carry. Exhaustive mode demands exact equality;
/// sampled mode accepts a 6-sigma binomial deviation.
pub fn probability_check(x: PackedFloat, y: PackedFloat, r: u32, mode: DrawMode) -> Result<ProbabilityReport, Error> {
    let fmt = x.format();
    let exact = exact_sum(x, y)?;
    let expected = expected_up_count(&exact, fmt, r);
    let (down, up) = if exact.is_zero() {
        let z = crate::adder::add_truncate(x, y).result;
        (z, z)
    } else {
        sr_neighbours(&exact, fmt, r)
    };
    let mut lazy_ups = 0;
    let mut eager_ups = 0;
    let mut offending = None;
    let mut run = |d: RandomDraw| {
        let lazy = add_sr_lazy(x, y, d);
        let eager = add_sr_eager(x, y, d);
        lazy_ups += lazy.flags.rounded_up as u64;
        eager_ups += eager.flags.rounded_up as u64;
        // Both neighbours coincide when truncation already overflows.
        let consistent = |o: &AddOutcome| {
            (o.result == up || o.result == down) && (up == down || (o.result == up) == o.flags.rounded_up)
        };
        if offending.is_none() && (lazy.result != eager.result || !consistent(&lazy)) {
            offending = Some(d.value());
        }
    };
    let (space, n, tolerance) = match mode {
        DrawMode::Exhaustive => {
            RandomDraw::all(r).for_each(&mut run);
            (DrawSpace::Exhaustive { size: 1 << r }, 1u64 << r, 0.0)
        }
        DrawMode::Sampled { n, seed } => {
            let mut lfsr = Lfsr::from_seed_with_width(seed, DEFAULT_WIDTH.max(r));
            for _ in 0..n {
                run(lfsr.next_draw(r));
            }
            let q = expected as f64 / (1u64 << r) as f64;
            (DrawSpace::Sampled { n, seed }, n, 6.0 * (n as f64 * q * (1.0 - q)).sqrt())
        }
    };
    let target = expected as f64 * n as f64 / (1u64 << r) as f64;
    let within = |obs: u64| match mode {
        DrawMode::Exhaustive => obs == expected,
        DrawMode::Sampled { .. } => (obs as f64 - target).abs() <= tolerance,
    };
    let passed = offending.is_none() && within(lazy_ups) && within(eager_ups);
    Ok(ProbabilityReport {
        x: x.bits(),
        y: y.bits(),
        format: fmt,
        r,
        expected_up_count: expected,
        lazy_up_count: lazy_ups,
        eager_up_count: eager_ups,
        draw_space: space,
        tolerance,
        passed,
        offending_draw: offending,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepScope {
    /// Every `(x, y, draw)` over the whole format.
    ExhaustiveFormat,
    Sampled { n: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub x: u64,
    pub y: u64,
    pub draw: u32,
    pub lazy_bits: u64,
    pub eager_bits: u64,
    pub lazy_trace: Option<AddTrace>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub format: FloatFormat,
    pub r: u32,
    pub cases: u64,
    pub mismatches: u64,
    pub first: Option<Counterexample>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Compares `eager` against [`add_sr_lazy`] bit for bit.
pub fn equivalence_sweep(fmt: FloatFormat, r: u32, scope: SweepScope) -> Result<EquivalenceReport, Error> {
    equivalence_sweep_with(fmt, r, scope, add_sr_eager)
}

/// [`equivalence_sweep`] against an arbitrary candidate adder.
pub fn equivalence_sweep_with<F>(fmt: FloatFormat, r: u32, scope: SweepScope, eager: F) -> Result<EquivalenceReport, Error>
where
    F: Fn(PackedFloat, PackedFloat, RandomDraw) -> AddOutcome + Sync,
{
    if !(1..=31).contains(&r) {
        return Err(Error::BadR { r, max: 31 });
    }
    let check = |x: PackedFloat, y: PackedFloat, d: RandomDraw| -> Option<Counterexample> {
        let lazy = add_sr_lazy(x, y, d);
        let eag = eager(x, y, d);
        (lazy.result != eag.result).then(|| Counterexample {
            x: x.bits(),
            y: y.bits(),
            draw: d.value(),
            lazy_bits: lazy.result.bits(),
            eager_bits: eag.result.bits(),
            lazy_trace: lazy.trace,
        })
    };
    // (cases, mismatches, first) per work unit, merged in unit order.
    type Part = (u64, u64, Option<Counterexample>);
    let merge = |a: Part, b: Part| (a.0 + b.0, a.1 + b.1, a.2.or(b.2));
    let (cases, mismatches, first) = match scope {
        SweepScope::ExhaustiveFormat => {
            if fmt.encodings() > 1 << 8 {
                return Err(Error::BadFormat(format!("{fmt} is too wide for an exhaustive sweep")));
            }
            let parts: Vec<Part> = (0..fmt.encodings())
                .into_par_iter()
                .map(|xb| {
                    let x = fmt.packed(xb).expect("in range");
                    let mut part: Part = (0, 0, None);
                    for y in fmt.all_encodings() {
                        for d in RandomDraw::all(r) {
                            part.0 += 1;
                            if let Some(c) = check(x, y, d) {
                                part.1 += 1;
                                part.2.get_or_insert(c);
                            }
                        }
                    }
                    part
                })
                .collect();
            parts.into_iter().fold((0, 0, None), merge)
        }
        SweepScope::Sampled { n, seed } => {
            const CHUNK: u64 = 1 << 14;
            let chunks = n.div_ceil(CHUNK);
            let parts: Vec<Part> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(c)));
                    let len = CHUNK.min(n - c * CHUNK);
                    let mut part: Part = (0, 0, None);
                    for _ in 0..len {
                        let (x, y) = biased_pair(fmt, r, &mut rng);
                        let d = RandomDraw::new(rng.random_range(0..1u32 << r), r).expect("fits");
                        part.0 += 1;
                        if let Some(cx) = check(x, y, d) {
                            part.1 += 1;
                            part.2.get_or_insert(cx);
                        }
                    }
                    part
                })
                .collect();
            parts.into_iter().fold((0, 0, None), merge)
        }
    };
    Ok(EquivalenceReport { format: fmt, r, cases, mismatches, first })
}

/// A random operand pair whose exponents are usually close enough for the
/// addend to overlap the rounding window; uniform encodings otherwise.
pub fn biased_pair(fmt: FloatFormat, r: u32, rng: &mut impl Rng) -> (PackedFloat, PackedFloat) {
    let width = fmt.width();
    let x = fmt.packed(rng.random_range(0..fmt.encodings())).expect("in range");
    let y = match rng.random_range(0..8u32) {
        0 | 1 => fmt.packed(rng.random_range(0..fmt.encodings())).expect("in range"),
        k => {
            let ef = (x.bits() >> fmt.man_bits()) & ((1 << fmt.exp_bits()) - 1);
            let span = (fmt.precision() + r + 2) as i64;
            let spread = if k == 2 { 1 } else { span };
            let field = (ef as i64 + rng.random_range(-spread..=spread)).clamp(0, (1 << fmt.exp_bits()) - 1);
            let frac = match k {
                3 => (1 << fmt.man_bits()) - 1,
                _ => rng.random_range(0..1u64 << fmt.man_bits()),
            };
            let sign = rng.random_range(0..2u64);
            let bits = (sign << (width - 1)) | ((field as u64) << fmt.man_bits()) | frac;
            fmt.packed(bits).expect("in range")
        }
    };
    (x, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    Exact,
    Inexact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    None,
    MantissaAllOnes,
    ExponentMax,
    SubnormalEdge,
}

/// Datapath trace class of an input pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TraceCoverageTag {
    pub path: Path,
    pub op: EffectiveOp,
    pub normalization: Normalization,
    pub rounding: Rounding,
    pub boundary: Boundary,
}

impl TraceCoverageTag {
    /// Every combination of the five coordinates.
    pub fn all() -> Vec<TraceCoverageTag> {
        let mut out = Vec::new();
        for path in [Path::Far, Path::Close] {
            for op in [EffectiveOp::Add, EffectiveOp::Sub] {
                for normalization in [
                    Normalization::CarryRightShift,
                    Normalization::None,
                    Normalization::LeftShift1,
                    Normalization::LeftShiftK,
                ] {
                    for rounding in [Rounding::Exact, Rounding::Inexact] {
                        for boundary in [
                            Boundary::None,
                            Boundary::MantissaAllOnes,
                            Boundary::ExponentMax,
                            Boundary::SubnormalEdge,
                        ] {
                            out.push(TraceCoverageTag { path, op, normalization, rounding, boundary });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Tags a pair of finite nonzero operands; `None` for pairs that never reach
/// the datapath (specials and zeros).
pub fn classify(x: PackedFloat, y: PackedFloat) -> Option<TraceCoverageTag> {
    let fmt = x.format();
    let (xf, yf) = (x.flushed(), y.flushed());
    if !xf.is_finite() || !yf.is_finite() || xf.is_zero() || yf.is_zero() {
        return None;
    }
    let out = add_rn(x, y);
    let trace = out.trace?;
    let rounding = if out.flags.inexact { Rounding::Inexact } else { Rounding::Exact };
    let frac_all_ones = |v: PackedFloat| v.class() == FloatClass::Normal && v.bits() & ((1 << fmt.man_bits()) - 1) == (1 << fmt.man_bits()) - 1;
    let (ux, uy) = (xf.decode(), yf.decode());
    let res = out.result;
    let low_binade = |v: PackedFloat| {
        let u = v.decode();
        matches!(u.class, FloatClass::Subnormal) || (u.class == FloatClass::Normal && u.exponent == fmt.emin())
    };
    let boundary = if [xf, yf].iter().any(|&v| v.class() == FloatClass::Subnormal)
        || (res.is_finite() && !res.is_zero() && low_binade(res))
        || (res.is_zero() && !exact_sum(x, y).ok()?.is_zero())
    {
        Boundary::SubnormalEdge
    } else if ux.exponent == fmt.emax() || uy.exponent == fmt.emax() || out.flags.overflow || {
        let u = res.decode();
        u.class == FloatClass::Normal && u.exponent == fmt.emax()
    } {
        Boundary::ExponentMax
    } else if frac_all_ones(xf) || frac_all_ones(yf) || frac_all_ones(res) {
        Boundary::MantissaAllOnes
    } else {
        Boundary::None
    };
    Some(TraceCoverageTag { path: trace.path, op: trace.op, normalization: trace.normalization, rounding, boundary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TaggedPair {
    pub x: PackedFloat,
    pub y: PackedFloat,
    pub tag: TraceCoverageTag,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TracePairs {
    pub format: FloatFormat,
    pub pairs: Vec<TaggedPair>,
    /// Representatives found per reachable tag (capped at the pool size).
    pub reachable: BTreeMap<String, u64>,
    pub unreachable: Vec<TraceCoverageTag>,
    /// Whether the candidate space was the whole format.
    pub exhaustive: bool,
}

impl TraceCoverageTag {
    /// `path/op/normalization/rounding/boundary` in kebab case.
    pub fn label(&self) -> String {
        let path = match self.path {
            Path::Far => "far",
            Path::Close => "close",
        };
        let op = match self.op {
            EffectiveOp::Add => "add",
            EffectiveOp::Sub => "sub",
        };
        let norm = match self.normalization {
            Normalization::CarryRightShift => "carry-right-shift",
            Normalization::None => "none",
            Normalization::LeftShift1 => "left-shift-1",
            Normalization::LeftShiftK => "left-shift-k",
        };
        let rounding = match self.rounding {
            Rounding::Exact => "exact",
            Rounding::Inexact => "inexact",
        };
        let boundary = match self.boundary {
            Boundary::None => "none",
            Boundary::MantissaAllOnes => "mantissa-all-ones",
            Boundary::ExponentMax => "exponent-max",
            Boundary::SubnormalEdge => "subnormal-edge",
        };
        format!("{path}/{op}/{norm}/{rounding}/{boundary}")
    }
}

/// Candidate pools: for each tag, the `cap` pairs with the smallest keys.
struct Pools {
    cap: usize,
    heaps: BTreeMap<TraceCoverageTag, BinaryHeap<(u64, u64, u64)>>,
    seen: BTreeMap<TraceCoverageTag, u64>,
}

impl Pools {
    fn new(cap: usize) -> Self {
        Self { cap, heaps: BTreeMap::new(), seen: BTreeMap::new() }
    }

    fn offer(&mut self, tag: TraceCoverageTag, key: u64, x: u64, y: u64) {
        *self.seen.entry(tag).or_default() += 1;
        let h = self.heaps.entry(tag).or_default();
        if h.len() < self.cap {
            h.push((key, x, y));
        } else if let Some(&top) = h.peek() {
            if (key, x, y) < top {
                h.pop();
                h.push((key, x, y));
            }
        }
    }

    fn merge(mut self, other: Pools) -> Pools {
        for (tag, n) in other.seen {
            *self.seen.entry(tag).or_default() += n;
        }
        for (tag, h) in other.heaps {
            for (k, x, y) in h {
                *self.seen.entry(tag).or_default() -= 1;
                self.offer(tag, k, x, y);
            }
        }
        self
    }

    /// Each pool sorted by key.
    fn sorted(self) -> (BTreeMap<TraceCoverageTag, Vec<(u64, u64)>>, BTreeMap<TraceCoverageTag, u64>) {
        let lists = self
            .heaps
            .into_iter()
            .map(|(t, h)| (t, h.into_sorted_vec().into_iter().map(|(_, x, y)| (x, y)).collect()))
            .collect();
        (lists, self.seen)
    }
}

/// Formats with at most this many encodings are searched exhaustively.
const EXHAUSTIVE_LIMIT: u64 = 1 << 12;
const RANDOM_CANDIDATES: u64 = 1 << 22;

fn collect_pools(fmt: FloatFormat, cap: usize, seed: u64, r: u32) -> (Pools, bool) {
    let key = |x: u64, y: u64| mix64(seed ^ mix64(x ^ mix64(y)));
    if fmt.encodings() <= EXHAUSTIVE_LIMIT {
        let pools = (0..fmt.encodings())
            .into_par_iter()
            .fold(
                || Pools::new(cap),
                |mut p, xb| {
                    let x = fmt.packed(xb).expect("in range");
                    for y in fmt.all_encodings() {
                        if let Some(tag) = classify(x, y) {
                            p.offer(tag, key(xb, y.bits()), xb, y.bits());
                        }
                    }
                    p
                },
            )
            .reduce(|| Pools::new(cap), Pools::merge);
        (pools, true)
    } else {
        const CHUNK: u64 = 1 << 14;
        let pools = (0..RANDOM_CANDIDATES / CHUNK)
            .into_par_iter()
            .fold(
                || Pools::new(cap),
                |mut p, c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(!c)));
                    for _ in 0..CHUNK {
                        let (x, y) = biased_pair(fmt, r, &mut rng);
                        if let Some(tag) = classify(x, y) {
                            p.offer(tag, key(x.bits(), y.bits()), x.bits(), y.bits());
                        }
                    }
                    p
                },
            )
            .reduce(|| Pools::new(cap), Pools::merge);
        (pools, false)
    }
}

fn assemble(fmt: FloatFormat, pools: Pools, exhaustive: bool, take: impl Fn(&BTreeMap<TraceCoverageTag, Vec<(u64, u64)>>) -> Vec<(TraceCoverageTag, u64, u64)>) -> TracePairs {
    let (lists, seen) = pools.sorted();
    let pairs = take(&lists)
        .into_iter()
        .map(|(tag, x, y)| TaggedPair {
            x: fmt.packed(x).expect("in range"),
            y: fmt.packed(y).expect("in range"),
            tag,
        })
        .collect();
    let reachable = seen.iter().map(|(t, n)| (t.label(), *n)).collect();
    let unreachable = TraceCoverageTag::all().into_iter().filter(|t| !seen.contains_key(t)).collect();
    TracePairs { format: fmt, pairs, reachable, unreachable, exhaustive }
}

/// Pairs such that every reachable tag has `per_tag` representatives (or all
/// of them, if fewer exist). Exhaustive over the format when it has at most
/// 4096 encodings, otherwise a biased random search of about four million
/// candidates. Deterministic in `seed` for any thread count.
pub fn generate_trace_pairs(fmt: FloatFormat, per_tag: usize, seed: u64, r: u32) -> TracePairs {
    assert!(per_tag >= 1);
    let (pools, exhaustive) = collect_pools(fmt, per_tag, seed, r);
    assemble(fmt, pools, exhaustive, |lists| {
        lists.iter().flat_map(|(t, v)| v.iter().map(move |&(x, y)| (*t, x, y))).collect()
    })
}

/// Exactly `total` pairs (when that many exist) spread round-robin over the
/// reachable tags, so every tag gets about `total / #tags` representatives.
pub fn generate_pairs(fmt: FloatFormat, total: usize, seed: u64, r: u32) -> TracePairs {
    let (pools, exhaustive) = collect_pools(fmt, total.max(1), seed, r);
    assemble(fmt, pools, exhaustive, |lists| {
        let mut out = Vec::with_capacity(total);
        let mut round = 0;
        while out.len() < total {
            let before = out.len();
            for (t, v) in lists {
                if out.len() == total {
                    break;
                }
                if let Some(&(x, y)) = v.get(round) {
                    out.push((*t, x, y));
                }
            }
            if out.len() == before {
                break;
            }
            round += 1;
        }
        out
    })
}
