//! Desk-scale experiments on the emulated MAC: stagnation of long sums,
//! sweeps over the number of random bits, subnormal ablation and toy
//! training with dynamic loss scaling. The `srmac` binary wraps them.
//!
//! Only orderings carry over from large-scale training (SR beats RN at equal
//! width, accuracy grows with `r`, subnormal support is immaterial at large
//! `r`); absolute accuracies are not comparable.

pub mod cli;
pub mod config;
pub mod loss_scale;
pub mod output;
pub mod stagnation;
pub mod sweep;
pub mod train;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Core(#[from] srmac_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("training diverged (seed {seed}, step {step}): non-finite gradients at loss scale 1")]
    Diverged { seed: u64, step: u64 },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
