//! Toy classifiers whose GEMMs run through the emulated MAC.
//!
//! Master weights, momentum, biases, activations, softmax and the loss stay in
//! `f64`. Every matrix product of the forward and backward pass quantizes its
//! two inputs to the multiplier format (round to nearest) and accumulates with
//! [`srmac_core::linalg::gemm`].
//!
//! The blob defaults train full-batch: each weight-gradient product sums over
//! all 8192 training samples. Early in training those per-sample terms mostly
//! share a sign, so under round-to-nearest the running sum reaches the point
//! where each new term is below half an ulp and stops growing; the gradient
//! shrinks to a fraction of its true norm. Stochastic rounding keeps every
//! sum unbiased. The effect shows as slower progress per step, measured at a
//! fixed step budget.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use srmac_core::linalg::{gemm, quantize_rn};
use srmac_core::rng::{mix64, stream_seed};
use srmac_core::{FloatFormat, MacConfig, RoundMode};

use crate::loss_scale::LossScaleState;
use crate::ExperimentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataset {
    SyntheticBlobs,
    TwoSpirals,
}

impl FromStr for Dataset {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic-blobs" | "blobs" => Ok(Dataset::SyntheticBlobs),
            "two-spirals" | "spirals" => Ok(Dataset::TwoSpirals),
            _ => Err(ExperimentError::Usage(format!("unknown dataset {s:?}"))),
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::SyntheticBlobs => "synthetic-blobs",
            Dataset::TwoSpirals => "two-spirals",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Logistic,
    Mlp1Hidden,
}

impl FromStr for Model {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Model::Logistic),
            "mlp-1-hidden" | "mlp" => Ok(Model::Mlp1Hidden),
            _ => Err(ExperimentError::Usage(format!("unknown model {s:?}"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Logistic => "logistic",
            Model::Mlp1Hidden => "mlp-1-hidden",
        })
    }
}

/// How matrix products are computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arithmetic {
    /// Plain `f64`, no quantization.
    Baseline,
    Emulated(MacConfig),
}

impl Arithmetic {
    pub fn label(&self) -> String {
        match self {
            Arithmetic::Baseline => "baseline".into(),
            Arithmetic::Emulated(c) if c.mode.is_stochastic() => format!("{}-r{}", c.mode, c.r),
            Arithmetic::Emulated(c) => c.mode.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hyper {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    /// The learning rate is multiplied by `lr_decay` from this epoch on.
    pub lr_step_epoch: usize,
    pub lr_decay: f64,
    pub hidden: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub data_seed: u64,
    /// Number of weak blob features.
    pub weak_dims: usize,
    /// Half-distance between class pairs along the strong feature.
    pub strong_sep: f64,
    /// Half-distance between classes of a pair along each weak feature.
    pub weak_sep: f64,
    pub loss_scaling: bool,
    pub initial_scale: f64,
    pub growth_interval: u32,
}

impl Hyper {
    /// Frozen defaults per dataset. Blobs: full-batch descent for 10 steps.
    pub fn for_dataset(d: Dataset) -> Self {
        match d {
            Dataset::SyntheticBlobs => Hyper {
                epochs: 10,
                batch: 8192,
                lr: 0.5,
                momentum: 0.9,
                lr_step_epoch: 7,
                lr_decay: 0.1,
                hidden: 16,
                n_train: 8192,
                n_test: 512,
                data_seed: 7,
                weak_dims: 8,
                strong_sep: 3.0,
                weak_sep: 0.8,
                loss_scaling: true,
                initial_scale: 1024.0,
                growth_interval: 200,
            },
            Dataset::TwoSpirals => Hyper {
                epochs: 40,
                batch: 32,
                lr: 0.05,
                lr_step_epoch: 30,
                hidden: 32,
                n_train: 1024,
                ..Hyper::for_dataset(Dataset::SyntheticBlobs)
            },
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = [self.epochs, self.batch, self.hidden, self.n_train, self.n_test];
        if positive.contains(&0) {
            return Err(ExperimentError::Usage("epochs, batch, hidden, n-train and n-test must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(ExperimentError::Usage("lr must be positive and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Row-major samples with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Data {
    pub features: usize,
    pub classes: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Data {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Train and test splits drawn from one generator seeded by `hyper.data_seed`.
///
/// Blobs: four classes `c = 2a + b`. Feature 0 is `±strong_sep` by `a`, each
/// weak feature `i` is `±weak_sep · s_i` by `b` with a fixed random sign
/// `s_i`, plus unit Gaussian noise everywhere. Spirals: two interleaved arms
/// in the plane with small noise.
pub fn generate(dataset: Dataset, hyper: &Hyper) -> (Data, Data) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(hyper.data_seed));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = hyper.n_train + hyper.n_test;
    let (features, classes) = match dataset {
        Dataset::SyntheticBlobs => (hyper.weak_dims + 1, 4),
        Dataset::TwoSpirals => (2, 2),
    };
    let mut x = Vec::with_capacity(n * features);
    let mut y = Vec::with_capacity(n);
    match dataset {
        Dataset::SyntheticBlobs => {
            let signs: Vec<f64> = (0..hyper.weak_dims).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            for _ in 0..n {
                let c = rng.random_range(0..4usize);
                let (a, b) = ((c / 2) as f64 * 2.0 - 1.0, (c % 2) as f64 * 2.0 - 1.0);
                x.push(a * hyper.strong_sep + normal.sample(&mut rng));
                x.extend(signs.iter().map(|s| b * s * hyper.weak_sep + normal.sample(&mut rng)));
                y.push(c);
            }
        }
        Dataset::TwoSpirals => {
            for _ in 0..n {
                let c = rng.random_range(0..2usize);
                let t: f64 = rng.random_range(0.25..1.0);
                let angle = 3.0 * std::f64::consts::PI * t + c as f64 * std::f64::consts::PI;
                let radius = 2.0 * t;
                x.push(radius * angle.cos() + 0.08 * normal.sample(&mut rng));
                x.push(radius * angle.sin() + 0.08 * normal.sample(&mut rng));
                y.push(c);
            }
        }
    }
    let split = hyper.n_train * features;
    (
        Data { features, classes, x: x[..split].to_vec(), y: y[..hyper.n_train].to_vec() },
        Data { features, classes, x: x[split..].to_vec(), y: y[hyper.n_train..].to_vec() },
    )
}

/// Dense row-major matrix used inside the trainer.
#[derive(Clone, Debug, PartialEq)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn add_row_vector(&mut self, v: &[f64]) {
        for row in self.data.chunks_mut(self.cols) {
            row.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
    }

    fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols) {
            s.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        s
    }
}

/// One matrix product under `arith`; `seed` feeds the per-element streams.
fn matmul(a: &Mat, b: &Mat, arith: &Arithmetic, seed: u64) -> Result<Mat, ExperimentError> {
    debug_assert_eq!(a.cols, b.rows);
    match arith {
        Arithmetic::Baseline => {
            let mut out = Mat::zeros(a.rows, b.cols);
            for i in 0..a.rows {
                for p in 0..a.cols {
                    let av = a.data[i * a.cols + p];
                    let brow = &b.data[p * b.cols..(p + 1) * b.cols];
                    out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
                }
            }
            Ok(out)
        }
        Arithmetic::Emulated(cfg) => {
            let qa = quantize_rn(&a.data, vec![a.rows, a.cols], cfg.mult_format)?;
            let qb = quantize_rn(&b.data, vec![b.rows, b.cols], cfg.mult_format)?;
            let out = gemm(&qa, &qb, cfg, seed)?;
            Ok(Mat { rows: out.rows, cols: out.cols, data: out.values })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Params {
    w1: Mat,
    b1: Vec<f64>,
    /// Present for the hidden-layer model only.
    w2: Option<Mat>,
    b2: Vec<f64>,
}

impl Params {
    fn init(model: Model, features: usize, classes: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dense = |rows: usize, cols: usize, fan_in: usize, gain: f64| {
            let n = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive variance");
            Mat { rows, cols, data: (0..rows * cols).map(|_| n.sample(rng)).collect() }
        };
        match model {
            Model::Logistic => Params { w1: dense(features, classes, features, 1.0), b1: vec![], w2: None, b2: vec![0.0; classes] },
            Model::Mlp1Hidden => Params {
                w1: dense(features, hidden, features, 2.0),
                b1: vec![0.0; hidden],
                w2: Some(dense(hidden, classes, hidden, 1.0)),
                b2: vec![0.0; classes],
            },
        }
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.w1.data.clone();
        v.extend(&self.b1);
        if let Some(w2) = &self.w2 {
            v.extend(&w2.data);
        }
        v.extend(&self.b2);
        v
    }

    fn zeros_like(&self) -> Self {
        Params {
            w1: Mat::zeros(self.w1.rows, self.w1.cols),
            b1: vec![0.0; self.b1.len()],
            w2: self.w2.as_ref().map(|w| Mat::zeros(w.rows, w.cols)),
            b2: vec![0.0; self.b2.len()],
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.w1.data, &mut self.b1];
        if let Some(w2) = &mut self.w2 {
            v.push(&mut w2.data);
        }
        v.push(&mut self.b2);
        v
    }
}

struct Forward {
    hidden_pre: Option<Mat>,
    hidden: Option<Mat>,
    probs: Mat,
}

/// Gemm ids distinguish the products of one step so their streams differ.
const G_FWD1: u64 = 1;
const G_FWD2: u64 = 2;
const G_DW2: u64 = 3;
const G_DH: u64 = 4;
const G_DW1: u64 = 5;

fn forward(p: &Params, x: &Mat, arith: &Arithmetic, seed: u64) -> Result<Forward, ExperimentError> {
    let (hidden_pre, hidden, mut logits) = match &p.w2 {
        None => {
            let mut z = matmul(x, &p.w1, arith, stream_seed(seed, G_FWD1, 0))?;
            z.add_row_vector(&p.b2);
            (None, None, z)
        }
        Some(w2) => {
            let mut z1 = matmul(x, &p.w1, arith, stream_seed(seed, G_FWD1, 0))?;
            z1.add_row_vector(&p.b1);
            let h = Mat { rows: z1.rows, cols: z1.cols, data: z1.data.iter().map(|v| v.max(0.0)).collect() };
            let mut z2 = matmul(&h, w2, arith, stream_seed(seed, G_FWD2, 0))?;
            z2.add_row_vector(&p.b2);
            (Some(z1), Some(h), z2)
        }
    };
    for row in logits.data.chunks_mut(logits.cols) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(Forward { hidden_pre, hidden, probs: logits })
}

fn loss_and_correct(probs: &Mat, y: &[usize]) -> (f64, usize) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &label) in probs.data.chunks(probs.cols).zip(y) {
        loss -= row[label].max(1e-300).ln();
        let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
        correct += (best == label) as usize;
    }
    (loss, correct)
}

fn rows_of(data: &Data, idx: &[usize]) -> (Mat, Vec<usize>) {
    let f = data.features;
    let mut x = Vec::with_capacity(idx.len() * f);
    for &i in idx {
        x.extend_from_slice(&data.x[i * f..(i + 1) * f]);
    }
    (Mat { rows: idx.len(), cols: f, data: x }, idx.iter().map(|&i| data.y[i]).collect())
}

/// Gradients of the mean cross-entropy times `scale`.
fn backward(p: &Params, x: &Mat, y: &[usize], fwd: &Forward, scale: f64, arith: &Arithmetic, seed: u64) -> Result<Params, ExperimentError> {
    let b = y.len() as f64;
    let mut g = fwd.probs.clone();
    for (row, &label) in g.data.chunks_mut(g.cols).zip(y) {
        row[label] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale / b);
    }
    match (&p.w2, &fwd.hidden, &fwd.hidden_pre) {
        (Some(w2), Some(h), Some(z1)) => {
            let dw2 = matmul(&h.transpose(), &g, arith, stream_seed(seed, G_DW2, 0))?;
            let db2 = g.column_sums();
            let mut dh = matmul(&g, &w2.transpose(), arith, stream_seed(seed, G_DH, 0))?;
            dh.data.iter_mut().zip(&z1.data).for_each(|(d, z)| {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            });
            let dw1 = matmul(&x.transpose(), &dh, arith, stream_seed(seed, G_DW1, 0))?;
            let db1 = dh.column_sums();
            Ok(Params { w1: dw1, b1: db1, w2: Some(dw2), b2: db2 })
        }
        _ => {
            let dw = matmul(&x.transpose(), &g, arith, stream_seed(seed, G_DW1, 0))?;
            Ok(Params { w1: dw, b1: vec![], w2: None, b2: g.column_sums() })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub loss_scale: f64,
    pub skipped_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Final parameters, flattened.
    pub weights: Vec<f64>,
}

impl TrainRun {
    /// Test accuracy after the last epoch, in percent.
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test_accuracy)
    }
}

fn evaluate(p: &Params, data: &Data, arith: &Arithmetic, seed: u64, batch: usize) -> Result<(f64, f64), ExperimentError> {
    let mut loss = 0.0;
    let mut correct = 0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for (bi, chunk) in idx.chunks(batch.max(256)).enumerate() {
        let (x, y) = rows_of(data, chunk);
        let f = forward(p, &x, arith, stream_seed(seed, bi as u64, 0))?;
        let (l, c) = loss_and_correct(&f.probs, &y);
        loss += l;
        correct += c;
    }
    Ok((loss / data.len() as f64, 100.0 * correct as f64 / data.len() as f64))
}

/// Trains one model. `seed` drives initialization, batch order and every MAC
/// stream; the data come from `hyper.data_seed`.
pub fn train_toy(dataset: Dataset, model: Model, arith: &Arithmetic, hyper: &Hyper, seed: u64) -> Result<TrainRun, ExperimentError> {
    hyper.validate()?;
    if let Arithmetic::Emulated(cfg) = arith {
        cfg.validate()?;
    }
    let (train, test) = generate(dataset, hyper);
    train_on(&train, &test, model, arith, hyper, seed)
}

pub fn train_on(train: &Data, test: &Data, model: Model, arith: &Arithmetic, hyper: &Hyper, seed: u64) -> Result<TrainRun, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x7472_6169_6e00));
    let mut params = Params::init(model, train.features, train.classes, hyper.hidden, &mut rng);
    let mut velocity = params.zeros_like();
    let mut scaler = LossScaleState::new(hyper.initial_scale, hyper.growth_interval);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(hyper.epochs);
    let mut step: u64 = 0;
    let mut skipped = 0;
    let mac_seed = mix64(seed);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let lr = if epoch >= hyper.lr_step_epoch { hyper.lr * hyper.lr_decay } else { hyper.lr };
        let mut train_loss = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(hyper.batch) {
            let step_seed = stream_seed(mac_seed, step, 1);
            step += 1;
            let (x, y) = rows_of(train, chunk);
            let fwd = forward(&params, &x, arith, step_seed)?;
            let (l, c) = loss_and_correct(&fwd.probs, &y);
            train_loss += l;
            correct += c;
            let scale = if hyper.loss_scaling { scaler.scale() } else { 1.0 };
            let mut grad = backward(&params, &x, &y, &fwd, scale, arith, step_seed)?;
            let mut finite = true;
            for s in grad.slices_mut() {
                for g in s.iter_mut() {
                    *g /= scale;
                    finite &= g.is_finite();
                }
            }
            if hyper.loss_scaling {
                if !scaler.update(finite) {
                    skipped += 1;
                    if scaler.exhausted() {
                        return Err(ExperimentError::Diverged { seed, step });
                    }
                    continue;
                }
            } else if !finite {
                return Err(ExperimentError::Diverged { seed, step });
            }
            for ((w, v), g) in params.slices_mut().into_iter().zip(velocity.slices_mut()).zip(grad.slices_mut()) {
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                    *vi = hyper.momentum * *vi + gi;
                    *wi -= lr * *vi;
                }
            }
        }
        let eval_seed = stream_seed(mac_seed, epoch as u64, 2);
        let (test_loss, test_accuracy) = evaluate(&params, test, arith, eval_seed, hyper.batch)?;
        epochs.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss: train_loss / train.len() as f64,
            train_accuracy: 100.0 * correct as f64 / train.len() as f64,
            test_loss,
            test_accuracy,
            loss_scale: scaler.scale(),
            skipped_steps: skipped,
        });
    }
    Ok(TrainRun { seed, epochs, weights: params.flat() })
}

/// What to train and in which formats; the arithmetic varies per run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSpec {
    pub dataset: Dataset,
    pub model: Model,
    pub hyper: Hyper,
    pub mult_format: FloatFormat,
    pub acc_format: FloatFormat,
    pub lfsr_width: Option<u32>,
}

impl TrainSpec {
    /// E5M2 inputs, E6M5 accumulator, frozen hyperparameters.
    pub fn new(dataset: Dataset, model: Model) -> Self {
        Self {
            dataset,
            model,
            hyper: Hyper::for_dataset(dataset),
            mult_format: FloatFormat::E5M2,
            acc_format: FloatFormat::E6M5,
            lfsr_width: None,
        }
    }

    /// `None` mode means the `f64` baseline.
    pub fn arithmetic(&self, mode: Option<RoundMode>, r: u32, subnormals: bool) -> Arithmetic {
        match mode {
            None => Arithmetic::Baseline,
            Some(m) => {
                let mut c = MacConfig::new(self.mult_format, m).with_acc_format(self.acc_format).with_r(r).with_subnormals(subnormals);
                c.lfsr_width = self.lfsr_width;
                Arithmetic::Emulated(c)
            }
        }
    }

    /// One run per seed, in seed order, in parallel.
    pub fn run(&self, arith: &Arithmetic, seeds: &[u64]) -> Result<Vec<TrainRun>, ExperimentError> {
        self.hyper.validate()?;
        let (train, test) = generate(self.dataset, &self.hyper);
        seeds.par_iter().map(|&s| train_on(&train, &test, self.model, arith, &self.hyper, s)).collect()
    }
}

/// Per-epoch CSV row with the baseline run of the same seed alongside.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainRow {
    pub dataset: String,
    pub model: String,
    pub arithmetic: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub loss_scale: f64,
    pub skipped_steps: u64,
    pub baseline_test_accuracy: f64,
    pub delta_vs_baseline: f64,
}

pub fn train_report(spec: &TrainSpec, arith: &Arithmetic, seeds: &[u64]) -> Result<Vec<TrainRow>, ExperimentError> {
    let runs = spec.run(arith, seeds)?;
    let base = spec.run(&Arithmetic::Baseline, seeds)?;
    let mut rows = Vec::new();
    for (run, b) in runs.iter().zip(&base) {
        for (e, be) in run.epochs.iter().zip(&b.epochs) {
            rows.push(TrainRow {
                dataset: spec.dataset.to_string(),
                model: spec.model.to_string(),
                arithmetic: arith.label(),
                seed: run.seed,
                epoch: e.epoch,
                train_loss: e.train_loss,
                train_accuracy: e.train_accuracy,
                test_loss: e.test_loss,
                test_accuracy: e.test_accuracy,
                loss_scale: e.loss_scale,
                skipped_steps: e.skipped_steps,
                baseline_test_accuracy: be.test_accuracy,
                delta_vs_baseline: e.test_accuracy - be.test_accuracy,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datasets_are_deterministic_and_shaped() {
        for d in [Dataset::SyntheticBlobs, Dataset::TwoSpirals] {
            let h = Hyper::for_dataset(d);
            let (a, b) = generate(d, &h);
            assert_eq!(generate(d, &h), (a.clone(), b.clone()));
            assert_eq!(a.len(), h.n_train);
            assert_eq!(b.len(), h.n_test);
            assert!(a.y.iter().all(|&c| c < a.classes));
        }
    }

    #[test]
    fn matmul_baseline_and_emulated_agree_on_exact_inputs() {
        let a = Mat { rows: 2, cols: 2, data: vec![1.0, 2.0, 0.5, -1.0] };
        let b = Mat { rows: 2, cols: 1, data: vec![3.0, 0.25] };
        let want = vec![3.5, 1.25];
        assert_eq!(matmul(&a, &b, &Arithmetic::Baseline, 0).unwrap().data, want);
        let cfg = MacConfig::fp8(RoundMode::SrLazy);
        assert_eq!(matmul(&a, &b, &Arithmetic::Emulated(cfg), 0).unwrap().data, want);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = Hyper { n_train: 8, n_test: 4, ..Hyper::for_dataset(Dataset::SyntheticBlobs) };
        let (train, _) = generate(Dataset::SyntheticBlobs, &h);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [Model::Logistic, Model::Mlp1Hidden] {
            let p = Params::init(model, train.features, train.classes, 5, &mut rng);
            let idx: Vec<usize> = (0..8).collect();
            let (x, y) = rows_of(&train, &idx);
            let loss = |p: &Params| {
                let f = forward(p, &x, &Arithmetic::Baseline, 0).unwrap();
                loss_and_correct(&f.probs, &y).0 / 8.0
            };
            let fwd = forward(&p, &x, &Arithmetic::Baseline, 0).unwrap();
            let g = backward(&p, &x, &y, &fwd, 1.0, &Arithmetic::Baseline, 0).unwrap().flat();
            for (k, &gk) in g.iter().enumerate().step_by(3) {
                let mut hi = p.clone();
                hi.slices_mut().into_iter().flat_map(|s| s.iter_mut()).nth(k).map(|v| *v += 1e-6);
                let mut lo = p.clone();
                lo.slices_mut().into_iter().flat_map(|s| s.iter_mut()).nth(k).map(|v| *v -= 1e-6);
                let fd = (loss(&hi) - loss(&lo)) / 2e-6;
                assert!((fd - gk).abs() < 1e-5 * (1.0 + gk.abs()), "{model} param {k}: {fd} vs {gk}");
            }
        }
    }
}

