//! Galois LFSR random source.
//!
//! The rounding units consume `r`-bit draws. A draw is built from `r`
//! successive output bits of a right-shifting Galois LFSR, first bit in the
//! MSB. The LFSR width is independent of `r` (default 16).

use crate::Error;

pub const DEFAULT_WIDTH: u32 = 16;

/// Galois feedback masks for maximal-length LFSRs, indexed by `width - 4`.
/// Bit `k` of a mask stands for the `x^(k+1)` term of the feedback
/// polynomial; the constant term is implicit.
pub const DEFAULT_TAPS: [u32; 29] = [
    0xC,        // 4: x^4 + x^3 + 1
    0x14,       // 5
    0x30,       // 6
    0x60,       // 7
    0xB8,       // 8
    0x110,      // 9
    0x240,      // 10
    0x500,      // 11
    0x829,      // 12
    0x100D,     // 13
    0x2015,     // 14
    0x6000,     // 15
    0xB400,     // 16: x^16 + x^14 + x^13 + x^11 + 1
    0x12000,    // 17
    0x20400,    // 18
    0x40023,    // 19
    0x90000,    // 20
    0x140000,   // 21
    0x300000,   // 22
    0x420000,   // 23
    0xE10000,   // 24
    0x1200000,  // 25
    0x2000023,  // 26
    0x4000013,  // 27
    0x9000000,  // 28
    0x14000000, // 29
    0x20000029, // 30
    0x48000000, // 31
    0x80200003, // 32
];

pub fn default_taps(width: u32) -> Result<u32, Error> {
    if !(4..=32).contains(&width) {
        return Err(Error::BadWidth(width));
    }
    Ok(DEFAULT_TAPS[(width - 4) as usize])
}

/// An `r`-bit uniform value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomDraw {
    value: u32,
    bits: u32,
}

impl RandomDraw {
    /// Requires `1 <= bits <= 32` and `value < 2^bits`.
    pub fn new(value: u32, bits: u32) -> Result<Self, Error> {
        if !(1..=32).contains(&bits) {
            return Err(Error::BadR { r: bits, max: 32 });
        }
        if bits < 32 && value >> bits != 0 {
            return Err(Error::Parse(format!("draw {value} does not fit in {bits} bits")));
        }
        Ok(Self { value, bits })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    /// Number of random bits `r`.
    pub fn bits(self) -> u32 {
        self.bits
    }

    /// All `2^r` draws in increasing order.
    pub fn all(bits: u32) -> impl Iterator<Item = RandomDraw> {
        assert!((1..=31).contains(&bits), "exhaustive draw enumeration needs 1 <= r <= 31");
        (0..1u32 << bits).map(move |value| RandomDraw { value, bits })
    }
}

/// A source of uniform draws. The LFSR is the production source; tests swap
/// in exhaustive enumeration or fixed values.
pub trait UniformSource {
    fn next_draw(&mut self, r: u32) -> RandomDraw;
}

/// Right-shifting Galois LFSR. The state is never zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lfsr {
    width: u32,
    taps: u32,
    state: u32,
}

impl Lfsr {
    /// Seeds a `width`-bit LFSR with `seed mod 2^width`, using `taps` or the
    /// default mask for that width.
    pub fn new(width: u32, seed: u64, taps: Option<u32>) -> Result<Self, Error> {
        let default = default_taps(width)?;
        let mask = width_mask(width);
        let state = (seed & mask as u64) as u32;
        if state == 0 {
            return Err(Error::ZeroSeed);
        }
        let taps = taps.map(|t| t & mask).unwrap_or(default);
        Ok(Self { width, taps, state })
    }

    /// Seeds a default-width LFSR from an arbitrary 64-bit value, folding the
    /// seed so that every input gives a valid nonzero state.
    pub fn from_seed(seed: u64) -> Self {
        Self::from_seed_with_width(seed, DEFAULT_WIDTH)
    }

    pub fn from_seed_with_width(seed: u64, width: u32) -> Self {
        let width = width.clamp(4, 32);
        let mask = width_mask(width) as u64;
        let mut folded = 0u64;
        let mut s = seed;
        while s != 0 {
            folded ^= s & mask;
            s >>= width;
        }
        if folded == 0 {
            folded = 1;
        }
        Self::new(width, folded, None).expect("folded seed is nonzero")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn taps(&self) -> u32 {
        self.taps
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// One Galois step: emit the LSB, shift right, and XOR the taps in if the
    /// emitted bit was 1.
    pub fn step(&mut self) -> bool {
        let out = self.state & 1 == 1;
        self.state >>= 1;
        if out {
            self.state ^= self.taps;
        }
        out
    }

    /// Concatenates `r` output bits, first bit in the MSB.
    pub fn draw(&mut self, r: u32) -> Result<RandomDraw, Error> {
        if r == 0 || r > self.width {
            return Err(Error::BadR { r, max: self.width });
        }
        let mut value = 0u32;
        for _ in 0..r {
            value = (value << 1) | self.step() as u32;
        }
        Ok(RandomDraw { value, bits: r })
    }
}

impl UniformSource for Lfsr {
    /// Panics if `r` exceeds the LFSR width.
    fn next_draw(&mut self, r: u32) -> RandomDraw {
        self.draw(r).expect("r must not exceed the LFSR width")
    }
}

/// Replays a fixed list of draw values, cycling.
#[derive(Clone, Debug)]
pub struct FixedDraws {
    values: Vec<u32>,
    next: usize,
}

impl FixedDraws {
    pub fn new(values: Vec<u32>) -> Self {
        assert!(!values.is_empty());
        Self { values, next: 0 }
    }
}

impl UniformSource for FixedDraws {
    fn next_draw(&mut self, r: u32) -> RandomDraw {
        let v = self.values[self.next % self.values.len()];
        self.next += 1;
        RandomDraw::new(v & width_mask(r), r).expect("masked draw fits")
    }
}

fn width_mask(w: u32) -> u32 {
    if w >= 32 {
        u32::MAX
    } else {
        (1u32 << w) - 1
    }
}

/// SplitMix64 finalizer. Used to derive independent LFSR seeds from
/// `(seed, index...)` tuples.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for output element `(i, j)` of a computation seeded by `seed`:
/// `mix64(seed ^ mix64(i ^ mix64(j)))`.
pub fn stream_seed(seed: u64, i: u64, j: u64) -> u64 {
    mix64(seed ^ mix64(i ^ mix64(j)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_examples() {
        let l = Lfsr::new(16, 0xACE1, None).unwrap();
        assert_eq!((l.state(), l.taps()), (0xACE1, 0xB400));
        assert_eq!(Lfsr::new(16, 0, None), Err(Error::ZeroSeed));
        assert_eq!(Lfsr::new(16, 0x10000, None), Err(Error::ZeroSeed));
        assert_eq!(Lfsr::new(8, 0x1FF, None).unwrap().state(), 0xFF);
        assert_eq!(Lfsr::new(3, 1, None), Err(Error::BadWidth(3)));
        assert_eq!(Lfsr::new(33, 1, None), Err(Error::BadWidth(33)));
    }

    #[test]
    fn hand_traced_steps() {
        let mut l = Lfsr::new(4, 0b0001, Some(0b1100)).unwrap();
        assert!(l.step());
        assert_eq!(l.state(), 0b1100);
        let mut l = Lfsr::new(4, 0b1000, Some(0b1100)).unwrap();
        assert!(!l.step());
        assert_eq!(l.state(), 0b0100);
    }

    #[test]
    fn hand_traced_draw() {
        let mut l = Lfsr::new(4, 0b0001, Some(0b1100)).unwrap();
        assert_eq!(l.draw(2).unwrap().value(), 0b10);
        let mut l = Lfsr::new(4, 1, None).unwrap();
        assert_eq!(l.draw(5), Err(Error::BadR { r: 5, max: 4 }));
        assert_eq!(l.draw(0), Err(Error::BadR { r: 0, max: 4 }));
        for _ in 0..100 {
            assert!(l.draw(1).unwrap().value() <= 1);
        }
    }

    #[test]
    fn full_period_by_iteration() {
        for width in [4, 8, 16] {
            let mut l = Lfsr::new(width, 1, None).unwrap();
            let mut seen = vec![false; 1 << width];
            for _ in 0..(1u64 << width) - 1 {
                assert!(!seen[l.state() as usize], "width {width} repeats early");
                seen[l.state() as usize] = true;
                l.step();
                assert_ne!(l.state(), 0);
            }
            assert_eq!(l.state(), 1, "width {width} does not return to the seed");
            assert!(!seen[0] && seen[1..].iter().all(|&s| s));
        }
    }

    #[test]
    fn draws_over_a_period_are_uniform() {
        // With gcd(r, 2^w - 1) = 1, the r-bit windows starting at every
        // offset of the m-sequence are visited once per 2^w - 1 draws.
        let (w, r) = (8u32, 4u32);
        let mut l = Lfsr::new(w, 0x5A, None).unwrap();
        let mut counts = [0u32; 16];
        for _ in 0..(1u32 << w) - 1 {
            counts[l.draw(r).unwrap().value() as usize] += 1;
        }
        let expected = ((1u32 << w) - 1) as f64 / 16.0;
        for c in counts {
            assert!((c as f64 - expected).abs() <= 1.0, "{counts:?}");
        }
    }

    #[test]
    fn mean_of_many_draws() {
        let mut l = Lfsr::new(16, 0xACE1, None).unwrap();
        let n = 1_000_000u64;
        let sum: u64 = (0..n).map(|_| l.draw(9).unwrap().value() as u64).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 255.5).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn seed_folding_never_zero() {
        for s in [0u64, 1 << 16, 0xFFFF_FFFF_FFFF_FFFF, 0x0001_0001] {
            assert_ne!(Lfsr::from_seed(s).state(), 0);
        }
    }

    #[test]
    fn fixed_source_cycles() {
        let mut s = FixedDraws::new(vec![1, 2, 0x1FF]);
        assert_eq!(s.next_draw(4).value(), 1);
        assert_eq!(s.next_draw(4).value(), 2);
        assert_eq!(s.next_draw(4).value(), 0xF);
        assert_eq!(s.next_draw(4).value(), 1);
    }
}
