//! Long sums of one small term through the MAC.
//!
//! `N` products `1 · term` are accumulated from `+0`. Once the running sum is
//! large enough that `term` is below half an ulp, round-to-nearest and
//! truncation stop moving; stochastic rounding still moves up with the right
//! probability and stays unbiased.

use rayon::prelude::*;
use serde::Serialize;
use srmac_core::mac::accumulate;
use srmac_core::{FloatFormat, MacConfig, RoundMode};

use crate::output::{mean, median};
use crate::ExperimentError;

#[derive(Clone, Debug, PartialEq)]
pub struct StagnationSpec {
    pub n: u64,
    pub term: f64,
    pub mult_format: FloatFormat,
    pub acc_format: FloatFormat,
    pub modes: Vec<RoundMode>,
    /// Random bit counts; every stochastic mode runs at each.
    pub rs: Vec<u32>,
    pub seeds: Vec<u64>,
    pub lfsr_width: Option<u32>,
}

impl StagnationSpec {
    /// `10^5` terms of `2^-10`, E5M2 products into E6M5.
    pub fn canonical(modes: Vec<RoundMode>, rs: Vec<u32>, seeds: Vec<u64>) -> Self {
        Self {
            n: 100_000,
            term: 2f64.powi(-10),
            mult_format: FloatFormat::E5M2,
            acc_format: FloatFormat::E6M5,
            modes,
            rs,
            seeds,
            lfsr_width: None,
        }
    }

    pub fn config(&self, mode: RoundMode, r: u32, seed: u64) -> MacConfig {
        let mut c = MacConfig::new(self.mult_format, mode).with_acc_format(self.acc_format).with_r(r).with_seed(seed);
        c.lfsr_width = self.lfsr_width;
        c
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n == 0 || self.modes.is_empty() {
            return Err(ExperimentError::Usage("stagnation needs n > 0 and at least one mode".into()));
        }
        if self.modes.iter().any(|m| m.is_stochastic()) && (self.rs.is_empty() || self.seeds.is_empty()) {
            return Err(ExperimentError::Usage("stochastic modes need at least one r and one seed".into()));
        }
        let t = self.mult_format.from_f64(self.term);
        if t.to_f64() != self.term || self.term <= 0.0 {
            return Err(ExperimentError::Usage(format!("term {} is not a positive value of {}", self.term, self.mult_format)));
        }
        for m in &self.modes {
            for &r in &self.rs {
                self.config(*m, r, 1).validate()?;
            }
        }
        Ok(())
    }

    /// Runs in CSV order: modes as given; stochastic modes expand over `rs`
    /// then seeds; deterministic modes run once.
    fn runs(&self) -> Vec<(RoundMode, Option<u32>, Option<u64>)> {
        let mut out = Vec::new();
        for &m in &self.modes {
            if m.is_stochastic() {
                for &r in &self.rs {
                    out.extend(self.seeds.iter().map(|&s| (m, Some(r), Some(s))));
                }
            } else {
                out.push((m, None, None));
            }
        }
        out
    }
}

/// One CSV row. `r` and `seed` are empty for deterministic modes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StagnationRow {
    pub mode: String,
    pub r: Option<u32>,
    pub seed: Option<u64>,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub exact: f64,
    /// `(final - exact) / exact`.
    pub relative_error: f64,
}

pub fn stagnation_experiment(spec: &StagnationSpec) -> Result<Vec<StagnationRow>, ExperimentError> {
    spec.validate()?;
    let one = spec.mult_format.from_f64(1.0);
    let term = spec.mult_format.from_f64(spec.term);
    let exact = spec.n as f64 * spec.term;
    let rows = spec
        .runs()
        .into_par_iter()
        .map(|(mode, r, seed)| {
            let cfg = spec.config(mode, r.unwrap_or(spec.acc_format.precision() + 3), seed.unwrap_or(1));
            let (v, _) = accumulate((0..spec.n).map(|_| (one, term)), &cfg);
            let final_value = v.to_f64();
            StagnationRow { mode: mode.to_string(), r, seed, final_value, exact, relative_error: (final_value - exact) / exact }
        })
        .collect();
    Ok(rows)
}

/// Per-(mode, r) statistics over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StagnationSummary {
    pub mode: String,
    pub r: Option<u32>,
    pub runs: usize,
    pub mean_relative_error: f64,
    pub median_abs_relative_error: f64,
}

pub fn summarize(rows: &[StagnationRow]) -> Vec<StagnationSummary> {
    let mut keys: Vec<(String, Option<u32>)> = Vec::new();
    for row in rows {
        let k = (row.mode.clone(), row.r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(mode, r)| {
            let errs: Vec<f64> = rows.iter().filter(|x| x.mode == mode && x.r == r).map(|x| x.relative_error).collect();
            let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
            StagnationSummary { mode, r, runs: errs.len(), mean_relative_error: mean(&errs), median_abs_relative_error: median(&abs) }
        })
        .collect()
}
