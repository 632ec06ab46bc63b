//! Sweeps over the number of random bits and the subnormal policy.

use serde::Serialize;
use srmac_core::RoundMode;

use crate::output::{kendall_tau, mean, median};
use crate::stagnation::{stagnation_experiment, StagnationSpec};
use crate::train::TrainSpec;
use crate::ExperimentError;

/// One statistic over seeds. `trend_tau` is Kendall's tau between `r` and
/// the per-`r` medians of the same experiment, repeated on each of its rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub r: u32,
    pub seeds: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub trend_tau: f64,
}

fn stats_row(experiment: &str, r: u32, values: &[f64]) -> SweepRow {
    SweepRow {
        experiment: experiment.into(),
        r,
        seeds: values.len(),
        median: median(values),
        mean: mean(values),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        trend_tau: f64::NAN,
    }
}

fn fill_trend(rows: &mut [SweepRow]) {
    let xs: Vec<f64> = rows.iter().map(|r| r.r as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let tau = kendall_tau(&xs, &ys);
    rows.iter_mut().for_each(|r| r.trend_tau = tau);
}

/// Stagnation error (`|relative error|`, SR lazy) and, when `train` is
/// given, final toy accuracy (percent, SR lazy) for each `r`. Stagnation rows
/// come first.
pub fn r_sweep(rs: &[u32], stag: &StagnationSpec, train: Option<&TrainSpec>, seeds: &[u64]) -> Result<Vec<SweepRow>, ExperimentError> {
    if rs.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Usage("sweep-r needs at least one r and one seed".into()));
    }
    let max_r = stag.acc_format.precision() + 8;
    if let Some(&bad) = rs.iter().find(|&&r| r == 0 || r > max_r) {
        return Err(ExperimentError::Usage(format!("r = {bad} outside 1..={max_r}")));
    }
    let spec = StagnationSpec { modes: vec![RoundMode::SrLazy], rs: rs.to_vec(), seeds: seeds.to_vec(), ..stag.clone() };
    let rows = stagnation_experiment(&spec)?;
    let mut stag_rows: Vec<SweepRow> = rs
        .iter()
        .map(|&r| {
            let v: Vec<f64> = rows.iter().filter(|x| x.r == Some(r)).map(|x| x.relative_error.abs()).collect();
            stats_row("stagnation-abs-relative-error", r, &v)
        })
        .collect();
    fill_trend(&mut stag_rows);
    let mut out = stag_rows;
    if let Some(t) = train {
        let mut train_rows = Vec::with_capacity(rs.len());
        for &r in rs {
            let runs = t.run(&t.arithmetic(Some(RoundMode::SrLazy), r, t.acc_format.subnormals()), seeds)?;
            let acc: Vec<f64> = runs.iter().map(|x| x.final_accuracy()).collect();
            train_rows.push(stats_row("train-accuracy", r, &acc));
        }
        fill_trend(&mut train_rows);
        out.extend(train_rows);
    }
    Ok(out)
}

/// `delta_median` is the `off` median minus the `on` median at the same `r`
/// (zero on `on` rows).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub experiment: String,
    pub r: u32,
    pub subnormals: String,
    pub seeds: usize,
    pub median: f64,
    pub mean: f64,
    pub delta_median: f64,
}

/// Stagnation and toy training with and without subnormal support at each
/// `r` (SR lazy).
pub fn subnormal_ablation(rs: &[u32], stag: &StagnationSpec, train: Option<&TrainSpec>, seeds: &[u64]) -> Result<Vec<AblationRow>, ExperimentError> {
    if rs.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Usage("ablate needs at least one r and one seed".into()));
    }
    let mut out = Vec::new();
    let mut push_pair = |experiment: &str, r: u32, on: Vec<f64>, off: Vec<f64>| {
        let (m_on, m_off) = (median(&on), median(&off));
        for (label, v, m, d) in [("on", &on, m_on, 0.0), ("off", &off, m_off, m_off - m_on)] {
            out.push(AblationRow { experiment: experiment.into(), r, subnormals: label.into(), seeds: v.len(), median: m, mean: mean(v), delta_median: d });
        }
    };
    for &r in rs {
        let errs = |sub: bool| -> Result<Vec<f64>, ExperimentError> {
            let spec = StagnationSpec {
                modes: vec![RoundMode::SrLazy],
                rs: vec![r],
                seeds: seeds.to_vec(),
                mult_format: stag.mult_format.with_subnormals(sub),
                acc_format: stag.acc_format.with_subnormals(sub),
                ..stag.clone()
            };
            Ok(stagnation_experiment(&spec)?.iter().map(|x| x.relative_error.abs()).collect())
        };
        push_pair("stagnation-abs-relative-error", r, errs(true)?, errs(false)?);
    }
    if let Some(t) = train {
        for &r in rs {
            let acc = |sub: bool| -> Result<Vec<f64>, ExperimentError> {
                let runs = t.run(&t.arithmetic(Some(RoundMode::SrLazy), r, sub), seeds)?;
                Ok(runs.iter().map(|x| x.final_accuracy()).collect())
            };
            push_pair("train-accuracy", r, acc(true)?, acc(false)?);
        }
    }
    Ok(out)
}
