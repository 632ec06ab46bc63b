//! The `srmac` command line.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 usage or runtime error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use srmac_core::adder::add_with;
use srmac_core::linalg::{gemm, gemm_exact, quantize_rn, read_tensor, write_tensor, Matrix, QuantMode, QuantOrigin, QuantTensor};
use srmac_core::mac::accumulate;
use srmac_core::rng::stream_seed;
use srmac_core::rounding::{expected_up_count, round_rn_even, round_sr_reference, round_truncate, sr_neighbours};
use srmac_core::verify::{equivalence_sweep, exact_sum, generate_pairs, probability_check, DrawMode, SweepScope};
use srmac_core::{add_rn, ExactReal, FloatFormat, MacConfig, PackedFloat, RandomDraw, RoundMode};

use crate::config::{parse_bool, read_config};
use crate::output::{emit, to_csv};
use crate::stagnation::{stagnation_experiment, StagnationSpec};
use crate::sweep::{r_sweep, subnormal_ablation};
use crate::train::{train_report, Dataset, Model, TrainSpec};
use crate::ExperimentError;

#[derive(Parser, Debug)]
#[command(name = "srmac", version, about = "Bit-accurate stochastic-rounding MAC emulation and experiments")]
pub struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// `key = value` defaults; command-line flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "SRMAC_JOBS", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Round one real value into a format.
    Round(RoundArgs),
    /// Add two values with one of the hardware adders.
    Add(AddArgs),
    /// Accumulate a stream of products.
    Mac(MacArgs),
    /// Multiply two tensor files.
    Gemm(GemmArgs),
    /// Lazy/eager equivalence, probability law, RN closure and coverage.
    Verify(VerifyArgs),
    /// Long sums of a small term.
    Stagnation(StagnationArgs),
    /// Stagnation and toy training across random bit counts.
    #[command(name = "sweep-r")]
    SweepR(SweepArgs),
    /// Toy training with emulated GEMMs.
    Train(TrainArgs),
    /// Subnormal support on and off.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct RoundArgs {
    #[arg(long, default_value = "E6M5")]
    pub fmt: FloatFormat,
    /// Decimal, `2^k`, or `0x` binary64 bits.
    #[arg(long, allow_hyphen_values = true)]
    pub value: String,
    #[arg(long, default_value = "sr")]
    pub mode: RoundMode,
    /// Random bits; defaults to precision + 3.
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, conflicts_with = "exhaustive")]
    pub draw: Option<u32>,
    /// Print the outcome of every draw.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub lfsr_width: Option<u32>,
}

#[derive(Args, Debug)]
pub struct AddArgs {
    #[arg(long, default_value = "E6M5")]
    pub fmt: FloatFormat,
    #[arg(long, default_value = "sr-lazy")]
    pub mode: RoundMode,
    #[arg(long)]
    pub r: Option<u32>,
    /// `0x` bit pattern or a representable decimal.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,
    #[arg(long, conflicts_with = "all_draws")]
    pub draw: Option<u32>,
    /// Outcome histogram over every draw.
    #[arg(long)]
    pub all_draws: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub lfsr_width: Option<u32>,
}

#[derive(Args, Debug, Clone)]
pub struct MacFormat {
    #[arg(long, default_value = "E5M2")]
    pub mult_fmt: FloatFormat,
    /// Accumulator; defaults to one more exponent bit and `2p - 1` mantissa bits.
    #[arg(long)]
    pub acc_fmt: Option<FloatFormat>,
    #[arg(long, default_value = "sr-lazy")]
    pub mode: RoundMode,
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub lfsr_width: Option<u32>,
}

impl MacFormat {
    fn config(&self) -> Result<MacConfig, ExperimentError> {
        mac_config(self.mult_fmt, self.acc_fmt, self.mode, self.r, self.seed, self.lfsr_width)
    }
}

#[derive(Args, Debug)]
pub struct MacArgs {
    /// Text file of `a, b` pairs, one per line.
    #[arg(long, conflicts_with_all = ["x", "y"])]
    pub pairs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Vec<String>,
    #[command(flatten)]
    pub mac: MacFormat,
}

#[derive(Args, Debug)]
pub struct GemmArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Write raw accumulator bit patterns instead of decimal values.
    #[arg(long)]
    pub bits: bool,
    #[command(flatten)]
    pub mac: MacFormat,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value = "E6M5")]
    pub fmt: FloatFormat,
    #[arg(long)]
    pub r: Option<u32>,
    /// Generated input pairs for the probability check.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// `exhaustive` or a number of sampled draws per pair.
    #[arg(long, default_value = "exhaustive")]
    pub draws: String,
    /// Cases for sampled sweeps on formats too large to enumerate.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct StagnationOpts {
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    /// Decimal or `2^k`.
    #[arg(long, default_value = "2^-10", allow_hyphen_values = true)]
    pub term: String,
    #[arg(long, default_value = "E5M2")]
    pub mult_fmt: FloatFormat,
    /// Accumulator format.
    #[arg(long, visible_alias = "acc-fmt", default_value = "E6M5")]
    pub fmt: FloatFormat,
    #[arg(long)]
    pub lfsr_width: Option<u32>,
}

impl StagnationOpts {
    fn spec(&self, modes: Vec<RoundMode>, rs: Vec<u32>, seeds: Vec<u64>) -> Result<StagnationSpec, ExperimentError> {
        let term = parse_real(&self.term)?.to_f64();
        Ok(StagnationSpec {
            n: self.n,
            term,
            mult_format: self.mult_fmt,
            acc_format: self.fmt,
            modes,
            rs,
            seeds,
            lfsr_width: self.lfsr_width,
        })
    }
}

#[derive(Args, Debug)]
pub struct StagnationArgs {
    #[command(flatten)]
    pub opts: StagnationOpts,
    #[arg(long, value_delimiter = ',', default_value = "rn,truncate,sr")]
    pub modes: Vec<RoundMode>,
    /// Random bit counts for the stochastic modes; defaults to precision + 3.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<u32>,
    #[command(flatten)]
    pub seeds: SeedOpts,
}

#[derive(Args, Debug, Clone)]
pub struct SeedOpts {
    /// Number of seeds.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
}

impl SeedOpts {
    fn list(&self) -> Result<Vec<u64>, ExperimentError> {
        if self.seeds == 0 {
            return Err(ExperimentError::Usage("--seeds must be at least 1".into()));
        }
        Ok((0..self.seeds).map(|i| self.first_seed.wrapping_add(i)).collect())
    }
}

/// Toy-training setup shared by `train`, `sweep-r` and `ablate`. Unset
/// hyperparameters keep the frozen per-dataset defaults.
#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    #[arg(long, default_value = "synthetic-blobs")]
    pub dataset: Dataset,
    #[arg(long, default_value = "mlp-1-hidden")]
    pub model: Model,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub no_loss_scaling: bool,
    #[arg(long)]
    pub initial_scale: Option<f64>,
    #[arg(long)]
    pub growth_interval: Option<u32>,
}

impl TrainOpts {
    fn spec(&self, mult: FloatFormat, acc: FloatFormat, lfsr_width: Option<u32>) -> TrainSpec {
        let mut s = TrainSpec::new(self.dataset, self.model);
        s.mult_format = mult;
        s.acc_format = acc;
        s.lfsr_width = lfsr_width;
        let h = &mut s.hyper;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { h.$f = v; })* };
        }
        set!(epochs, batch, lr, momentum, hidden, n_train, n_test, data_seed, initial_scale, growth_interval);
        if self.no_loss_scaling {
            h.loss_scaling = false;
        }
        s
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,4,9,11,13")]
    pub rs: Vec<u32>,
    #[command(flatten)]
    pub stagnation: StagnationOpts,
    /// Number of seeds.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
    /// Stagnation rows only.
    #[arg(long)]
    pub no_train: bool,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, value_delimiter = ',', default_value = "11,13")]
    pub rs: Vec<u32>,
    #[command(flatten)]
    pub stagnation: StagnationOpts,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
    #[arg(long)]
    pub no_train: bool,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `baseline` (plain f64) or a rounding mode.
    #[arg(long, default_value = "sr")]
    pub mode: String,
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, default_value = "E5M2")]
    pub mult_fmt: FloatFormat,
    #[arg(long, default_value = "E6M5")]
    pub acc_fmt: FloatFormat,
    /// `on` or `off`; defaults to the accumulator format's policy.
    #[arg(long, value_parser = parse_switch)]
    pub subnormals: Option<bool>,
    #[arg(long)]
    pub lfsr_width: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub first_seed: u64,
    #[command(flatten)]
    pub train: TrainOpts,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    parse_bool(s).ok_or_else(|| format!("expected on or off, got {s:?}"))
}

/// Result of a successful run: either clean or a verification mismatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Mismatch,
}

/// Parses `argv` (program name first), runs and returns the exit code.
pub fn main_with(args: Vec<OsString>) -> i32 {
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("srmac: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Mismatch) => 1,
        Err(e) => {
            eprintln!("srmac: {e}");
            2
        }
    }
}

/// Splices `--config` entries in right after the subcommand, skipping keys
/// that already appear on the command line. Switches take a boolean value.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, ExperimentError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let cfg = read_config(Path::new(&path))?;
    let root = Cli::command();
    let mut i = 1;
    let mut sub = None;
    while i < strs.len() {
        match strs[i].as_str() {
            "--out" | "--config" | "--jobs" => i += 2,
            a if root.find_subcommand(a).is_some() => {
                sub = Some(i);
                break;
            }
            _ => i += 1,
        }
    }
    let Some(si) = sub else { return Ok(args) };
    let cmd = root.find_subcommand(&strs[si]).expect("found above");
    let given = |name: &str| strs.iter().any(|a| a == &format!("--{name}") || a.starts_with(&format!("--{name}=")));
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in &cfg {
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key) || a.get_all_aliases().is_some_and(|al| al.contains(&key.as_str())))
            .ok_or_else(|| ExperimentError::Usage(format!("unknown config key {key:?} for `{}`", strs[si])))?;
        let long = arg.get_long().expect("every flag has a long name");
        let aliases = arg.get_all_aliases().unwrap_or_default();
        if long == "config" || given(long) || aliases.iter().any(|a| given(a)) {
            continue;
        }
        if arg.get_action().takes_values() {
            extra.push(format!("--{long}").into());
            extra.push(value.into());
        } else {
            match parse_bool(value) {
                Some(true) => extra.push(format!("--{long}").into()),
                Some(false) => {}
                None => return Err(ExperimentError::Usage(format!("config key {key:?} expects a boolean, got {value:?}"))),
            }
        }
    }
    let mut out = args;
    out.splice(si + 1..si + 1, extra);
    Ok(out)
}

pub fn run(cli: &Cli) -> Result<Outcome, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        builder = builder.num_threads(n as usize);
    }
    let pool = builder.build().map_err(|e| ExperimentError::Usage(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<Outcome, ExperimentError> {
    let out = cli.out.as_deref();
    let (text, outcome) = match &cli.command {
        Command::Round(a) => (to_json(&round_cmd(a)?)?, Outcome::Ok),
        Command::Add(a) => (to_json(&add_cmd(a)?)?, Outcome::Ok),
        Command::Mac(a) => (to_json(&mac_cmd(a)?)?, Outcome::Ok),
        Command::Gemm(a) => (gemm_cmd(a)?, Outcome::Ok),
        Command::Verify(a) => {
            let report = verify_cmd(a)?;
            let ok = report["passed"] == Value::Bool(true);
            (to_json(&report)?, if ok { Outcome::Ok } else { Outcome::Mismatch })
        }
        Command::Stagnation(a) => {
            let rs = if a.r.is_empty() { vec![a.opts.fmt.precision() + 3] } else { a.r.clone() };
            let spec = a.opts.spec(a.modes.clone(), rs, a.seeds.list()?)?;
            (to_csv(&stagnation_experiment(&spec)?)?, Outcome::Ok)
        }
        Command::SweepR(a) => {
            let seeds = SeedOpts { seeds: a.seeds, first_seed: a.first_seed }.list()?;
            let stag = a.stagnation.spec(vec![RoundMode::SrLazy], a.rs.clone(), seeds.clone())?;
            let train = (!a.no_train).then(|| a.train.spec(a.stagnation.mult_fmt, a.stagnation.fmt, a.stagnation.lfsr_width));
            (to_csv(&r_sweep(&a.rs, &stag, train.as_ref(), &seeds)?)?, Outcome::Ok)
        }
        Command::Ablate(a) => {
            let seeds = SeedOpts { seeds: a.seeds, first_seed: a.first_seed }.list()?;
            let stag = a.stagnation.spec(vec![RoundMode::SrLazy], a.rs.clone(), seeds.clone())?;
            let train = (!a.no_train).then(|| a.train.spec(a.stagnation.mult_fmt, a.stagnation.fmt, a.stagnation.lfsr_width));
            (to_csv(&subnormal_ablation(&a.rs, &stag, train.as_ref(), &seeds)?)?, Outcome::Ok)
        }
        Command::Train(a) => {
            let seeds = SeedOpts { seeds: a.seeds, first_seed: a.first_seed }.list()?;
            let spec = a.train.spec(a.mult_fmt, a.acc_fmt, a.lfsr_width);
            let mode = match a.mode.trim().to_ascii_lowercase().as_str() {
                "baseline" | "f64" => None,
                m => Some(m.parse::<RoundMode>()?),
            };
            let r = a.r.unwrap_or(a.acc_fmt.precision() + 3);
            let arith = spec.arithmetic(mode, r, a.subnormals.unwrap_or(a.acc_fmt.subnormals()));
            if let crate::train::Arithmetic::Emulated(c) = &arith {
                c.validate()?;
            }
            (to_csv(&train_report(&spec, &arith, &seeds)?)?, Outcome::Ok)
        }
    };
    emit(&text, out)?;
    Ok(outcome)
}

fn to_json(v: &Value) -> Result<String, ExperimentError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Parses a decimal, `[-]2^k` / `2^(k)`, or `0x` binary64 bit pattern into
/// an exact value.
pub fn parse_real(s: &str) -> Result<ExactReal, ExperimentError> {
    let t = s.trim();
    let bad = || ExperimentError::Usage(format!("cannot parse {s:?} as a finite value"));
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        let bits = u64::from_str_radix(hex, 16).map_err(|_| bad())?;
        return ExactReal::from_f64(f64::from_bits(bits)).ok_or_else(bad);
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    if let Some(k) = body.strip_prefix("2^") {
        let k = k.trim_start_matches('(').trim_end_matches(')');
        let k: i64 = k.parse().map_err(|_| bad())?;
        let v = ExactReal::pow2(k);
        return Ok(if neg { -v } else { v });
    }
    let v: f64 = t.parse().map_err(|_| bad())?;
    ExactReal::from_f64(v).ok_or_else(bad)
}

/// `0x` bit pattern in `fmt`, or a value that must be representable there
/// (including `inf` and `nan`).
pub fn parse_operand(s: &str, fmt: FloatFormat) -> Result<PackedFloat, ExperimentError> {
    let t = s.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        let bits = u64::from_str_radix(hex, 16).map_err(|_| ExperimentError::Usage(format!("bad bit pattern {s:?}")))?;
        return Ok(fmt.packed(bits)?);
    }
    let v = match t.parse::<f64>() {
        Ok(v) => v,
        Err(_) => parse_real(t)?.to_f64(),
    };
    let p = fmt.from_f64(v);
    if p.to_f64() == v || (v.is_nan() && p.is_nan()) {
        Ok(p)
    } else {
        Err(ExperimentError::Usage(format!("{s} is not representable in {fmt}; pass a bit pattern or an exact value")))
    }
}

fn packed_json(p: PackedFloat) -> Value {
    json!({
        "bits": p.bits(),
        "hex": format!("{:#x}", p.bits()),
        "groups": p.bit_groups(),
        "value": p.to_f64(),
    })
}

fn mac_config(mult: FloatFormat, acc: Option<FloatFormat>, mode: RoundMode, r: Option<u32>, seed: u64, lfsr_width: Option<u32>) -> Result<MacConfig, ExperimentError> {
    let mut c = match acc {
        Some(a) => MacConfig { mult_format: mult, acc_format: a, mode, r: a.precision() + 3, seed, lfsr_width: None },
        None => {
            FloatFormat::new(mult.exp_bits() + 1, 2 * mult.precision() - 1, mult.subnormals())
                .map_err(|e| ExperimentError::Usage(format!("no derived accumulator for {mult}: {e}; pass --acc-fmt")))?;
            MacConfig::new(mult, mode).with_seed(seed)
        }
    };
    if let Some(r) = r {
        c.r = r;
    }
    c.lfsr_width = lfsr_width;
    c.validate()?;
    Ok(c)
}

fn draw_source(fmt: FloatFormat, mode: RoundMode, r: Option<u32>, seed: u64, lfsr_width: Option<u32>) -> Result<MacConfig, ExperimentError> {
    let mut c = MacConfig { mult_format: fmt, acc_format: fmt, mode, r: r.unwrap_or(fmt.precision() + 3), seed, lfsr_width };
    c.lfsr_width = lfsr_width;
    c.validate()?;
    Ok(c)
}

fn check_enumerable(r: u32) -> Result<(), ExperimentError> {
    if r > 20 {
        return Err(ExperimentError::Usage(format!("enumerating 2^{r} draws is too large; use r <= 20")));
    }
    Ok(())
}

fn round_cmd(a: &RoundArgs) -> Result<Value, ExperimentError> {
    let x = parse_real(&a.value)?;
    let cfg = draw_source(a.fmt, a.mode, a.r, a.seed, a.lfsr_width)?;
    let r = cfg.r;
    let mut report = json!({
        "format": a.fmt,
        "value": x.to_f64(),
        "mode": a.mode,
    });
    let m = report.as_object_mut().expect("object");
    if !a.mode.is_stochastic() {
        let p = if a.mode == RoundMode::Rn { round_rn_even(&x, a.fmt) } else { round_truncate(&x, a.fmt) };
        m.insert("result".into(), packed_json(p));
        return Ok(report);
    }
    let (down, up) = sr_neighbours(&x, a.fmt, r);
    let expected = expected_up_count(&x, a.fmt, r);
    m.insert("r".into(), json!(r));
    m.insert("down".into(), packed_json(down));
    m.insert("up".into(), packed_json(up));
    m.insert("expected_up_count".into(), json!(expected));
    m.insert("draws".into(), json!(1u64 << r));
    if a.exhaustive {
        check_enumerable(r)?;
        let mut outcomes = Vec::new();
        let mut ups = 0u64;
        for d in RandomDraw::all(r) {
            let p = round_sr_reference(&x, a.fmt, d);
            let is_up = p == up && up != down;
            ups += is_up as u64;
            outcomes.push(json!({ "draw": d.value(), "up": is_up, "result": packed_json(p) }));
        }
        m.insert("up_count".into(), json!(ups));
        m.insert("outcomes".into(), Value::Array(outcomes));
    } else {
        let d = match a.draw {
            Some(v) => RandomDraw::new(v, r)?,
            None => cfg.lfsr(a.seed).draw(r)?,
        };
        m.insert("draw".into(), json!(d.value()));
        m.insert("result".into(), packed_json(round_sr_reference(&x, a.fmt, d)));
    }
    Ok(report)
}

fn add_cmd(a: &AddArgs) -> Result<Value, ExperimentError> {
    let x = parse_operand(&a.x, a.fmt)?;
    let y = parse_operand(&a.y, a.fmt)?;
    let cfg = draw_source(a.fmt, a.mode, a.r, a.seed, a.lfsr_width)?;
    let r = cfg.r;
    let exact = exact_sum(x, y).ok();
    let mut report = json!({
        "format": a.fmt,
        "mode": a.mode,
        "x": packed_json(x),
        "y": packed_json(y),
        "exact_sum": exact.as_ref().map(|e| e.to_f64()),
    });
    let m = report.as_object_mut().expect("object");
    let one = |m: &mut serde_json::Map<String, Value>, d: Option<RandomDraw>| {
        let o = add_with(a.mode, x, y, d);
        m.insert("result".into(), packed_json(o.result));
        m.insert("flags".into(), json!(o.flags));
        m.insert("trace".into(), json!(o.trace));
    };
    if !a.mode.is_stochastic() {
        one(m, None);
        return Ok(report);
    }
    m.insert("r".into(), json!(r));
    if let Some(e) = &exact {
        m.insert("expected_up_count".into(), json!(expected_up_count(e, a.fmt, r)));
    }
    if a.all_draws {
        check_enumerable(r)?;
        let mut hist: BTreeMap<u64, (PackedFloat, u64)> = BTreeMap::new();
        let mut ups = 0u64;
        for d in RandomDraw::all(r) {
            let o = add_with(a.mode, x, y, Some(d));
            ups += o.flags.rounded_up as u64;
            hist.entry(o.result.bits()).or_insert((o.result, 0)).1 += 1;
        }
        let hist: Vec<Value> = hist.values().map(|(p, n)| json!({ "result": packed_json(*p), "count": n })).collect();
        m.insert("draws".into(), json!(1u64 << r));
        m.insert("up_count".into(), json!(ups));
        m.insert("histogram".into(), Value::Array(hist));
    } else {
        let d = match a.draw {
            Some(v) => RandomDraw::new(v, r)?,
            None => cfg.lfsr(a.seed).draw(r)?,
        };
        m.insert("draw".into(), json!(d.value()));
        one(m, Some(d));
    }
    Ok(report)
}

fn read_text(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })
}

fn mac_cmd(a: &MacArgs) -> Result<Value, ExperimentError> {
    let cfg = a.mac.config()?;
    let fmt = cfg.mult_format;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    if let Some(p) = &a.pairs {
        for (n, line) in read_text(p)?.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|c| !c.is_empty()).collect();
            let [u, v] = cells[..] else {
                return Err(ExperimentError::Usage(format!("{} line {}: expected two values", p.display(), n + 1)));
            };
            xs.push(parse_operand(u, fmt)?);
            ys.push(parse_operand(v, fmt)?);
        }
    } else {
        if a.x.len() != a.y.len() || a.x.is_empty() {
            return Err(ExperimentError::Usage("mac needs --pairs or equally long --x and --y lists".into()));
        }
        xs = a.x.iter().map(|s| parse_operand(s, fmt)).collect::<Result<_, _>>()?;
        ys = a.y.iter().map(|s| parse_operand(s, fmt)).collect::<Result<_, _>>()?;
    }
    let (acc, stats) = accumulate(xs.iter().copied().zip(ys.iter().copied()), &cfg);
    let exact = if xs.iter().chain(&ys).all(|p| p.is_finite()) {
        let origin = QuantOrigin { source: "mac".into(), mode: QuantMode::Rn };
        let row = QuantTensor::new(vec![1, xs.len()], xs.clone(), fmt, origin.clone())?;
        let col = QuantTensor::new(vec![ys.len(), 1], ys.clone(), fmt, origin)?;
        Some(gemm_exact(&row, &col)?[0].to_f64())
    } else {
        None
    };
    Ok(json!({
        "config": cfg,
        "terms": xs.len(),
        "result": packed_json(acc),
        "exact": exact,
        "stats": stats,
    }))
}

fn gemm_cmd(a: &GemmArgs) -> Result<String, ExperimentError> {
    let cfg = a.mac.config()?;
    let load = |p: &Path| -> Result<QuantTensor, ExperimentError> {
        let m = read_tensor(std::fs::File::open(p).map_err(|source| ExperimentError::Io { path: p.display().to_string(), source })?)?;
        Ok(quantize_rn(&m.data, vec![m.rows, m.cols], cfg.mult_format)?)
    };
    let (ta, tb) = (load(&a.a)?, load(&a.b)?);
    let out = gemm(&ta, &tb, &cfg, cfg.seed)?;
    if a.bits {
        let mut s = format!("dims: {} {}\n", out.rows, out.cols);
        for row in out.bits.chunks(out.cols.max(1)) {
            let cells: Vec<String> = row.iter().map(|p| format!("{:#x}", p.bits())).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        Ok(s)
    } else {
        Ok(write_tensor(&Matrix::new(out.rows, out.cols, out.values)?))
    }
}

/// Formats with at most this many encodings are swept exhaustively.
const EXHAUSTIVE_ENCODINGS: u64 = 256;

fn expected_rn(x: PackedFloat, y: PackedFloat) -> Result<PackedFloat, ExperimentError> {
    let fmt = x.format();
    let s = exact_sum(x, y)?;
    Ok(if s.is_zero() {
        let (fx, fy) = (x.flushed(), y.flushed());
        fmt.zero(fx.sign() && fy.sign() && fx.is_zero() && fy.is_zero())
    } else {
        round_rn_even(&s, fmt)
    })
}

fn verify_cmd(a: &VerifyArgs) -> Result<Value, ExperimentError> {
    let fmt = a.fmt;
    let r = a.r.unwrap_or(fmt.precision() + 3);
    draw_source(fmt, RoundMode::SrLazy, Some(r), a.seed, None)?;
    let draws = match a.draws.trim() {
        "exhaustive" => DrawMode::Exhaustive,
        n => DrawMode::Sampled {
            n: n.parse().map_err(|_| ExperimentError::Usage(format!("--draws expects `exhaustive` or a count, got {n:?}")))?,
            seed: a.seed,
        },
    };
    if draws == DrawMode::Exhaustive {
        check_enumerable(r)?;
    }
    let small = fmt.encodings() <= EXHAUSTIVE_ENCODINGS;

    let scope = if small { SweepScope::ExhaustiveFormat } else { SweepScope::Sampled { n: a.samples, seed: a.seed } };
    let eq = equivalence_sweep(fmt, r, scope)?;

    let generated = generate_pairs(fmt, a.pairs, a.seed, r);
    let reports: Vec<_> = generated
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mode = match draws {
                DrawMode::Sampled { n, seed } => DrawMode::Sampled { n, seed: stream_seed(seed, i as u64, 3) },
                m => m,
            };
            probability_check(p.x, p.y, r, mode)
        })
        .collect::<Result<_, _>>()?;
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed).collect();

    let operands: Vec<PackedFloat> = fmt.finite_encodings().collect();
    let rn_pairs: Vec<(PackedFloat, PackedFloat)> = if small {
        operands.iter().flat_map(|&x| operands.iter().map(move |&y| (x, y))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        (0..a.samples).map(|_| (operands[rng.random_range(0..operands.len())], operands[rng.random_range(0..operands.len())])).collect()
    };
    let rn_bad: Vec<(PackedFloat, PackedFloat, PackedFloat, PackedFloat)> = rn_pairs
        .par_iter()
        .map(|&(x, y)| Ok::<_, ExperimentError>((x, y, add_rn(x, y).result, expected_rn(x, y)?)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|(_, _, got, want)| got != want)
        .collect();

    let passed = eq.passed() && failed.is_empty() && rn_bad.is_empty();
    Ok(json!({
        "format": fmt,
        "r": r,
        "passed": passed,
        "equivalence": {
            "scope": if small { "exhaustive" } else { "sampled" },
            "cases": eq.cases,
            "mismatches": eq.mismatches,
            "first": eq.first,
        },
        "probability": {
            "pairs": reports.len(),
            "draws": match draws { DrawMode::Exhaustive => json!("exhaustive"), DrawMode::Sampled { n, .. } => json!(n) },
            "failed": failed.len(),
            "first_failure": failed.first(),
        },
        "rn_closure": {
            "scope": if small { "exhaustive" } else { "sampled" },
            "cases": rn_pairs.len(),
            "mismatches": rn_bad.len(),
            "first": rn_bad.first().map(|(x, y, got, want)| json!({ "x": x.bits(), "y": y.bits(), "got": got.bits(), "expected": want.bits() })),
        },
        "coverage": {
            "exhaustive": generated.exhaustive,
            "reachable": generated.reachable,
            "unreachable": generated.unreachable.iter().map(|t| t.label()).collect::<Vec<_>>(),
        },
    }))
}
