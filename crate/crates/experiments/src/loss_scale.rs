//! Dynamic loss scaling.

use serde::Serialize;

/// Power-of-two loss scale: halved (and the step skipped) on a non-finite
/// gradient, doubled after `growth_interval` consecutive clean steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossScaleState {
    scale: f64,
    growth_interval: u32,
    clean_steps: u32,
    /// Set when a non-finite gradient arrives while the scale is already 1.
    exhausted: bool,
}

/// Keeps doubling from reaching infinity.
const MAX_SCALE: f64 = 1.329_227_995_784_916e36; // 2^120

impl LossScaleState {
    /// `initial` is rounded down to a power of two and clamped to `[1, 2^120]`.
    pub fn new(initial: f64, growth_interval: u32) -> Self {
        let scale = if initial >= 1.0 { 2f64.powi(initial.log2().floor().min(120.0) as i32) } else { 1.0 };
        Self { scale, growth_interval: growth_interval.max(1), clean_steps: 0, exhausted: false }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// Records one step; returns whether its update should be applied.
    pub fn update(&mut self, finite: bool) -> bool {
        if !finite {
            self.exhausted = self.scale <= 1.0;
            self.scale = (self.scale / 2.0).max(1.0);
            self.clean_steps = 0;
            return false;
        }
        self.exhausted = false;
        self.clean_steps += 1;
        if self.clean_steps >= self.growth_interval {
            self.scale = (self.scale * 2.0).min(MAX_SCALE);
            self.clean_steps = 0;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy() {
        let mut s = LossScaleState::new(1024.0, 200);
        assert_eq!(s.scale(), 1024.0);
        assert!(!s.update(false));
        assert_eq!(s.scale(), 512.0);
        for _ in 0..199 {
            assert!(s.update(true));
        }
        assert_eq!(s.scale(), 512.0);
        assert!(s.update(true));
        assert_eq!(s.scale(), 1024.0);
        assert!(!s.update(false));
        assert!(s.update(true));
        assert_eq!(s.scale(), 512.0);
    }

    #[test]
    fn floor_and_exhaustion() {
        let mut s = LossScaleState::new(3.0, 10);
        assert_eq!(s.scale(), 2.0);
        s.update(false);
        assert!(!s.exhausted());
        s.update(false);
        assert_eq!(s.scale(), 1.0);
        assert!(s.exhausted());
        assert_eq!(LossScaleState::new(0.1, 0).scale(), 1.0);
    }
}
