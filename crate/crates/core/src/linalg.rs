//! Quantization, dot products and GEMM through the emulated MAC.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rayon::prelude::*;
use serde::Serialize;

use crate::exact::ExactReal;
use crate::format::{FloatFormat, PackedFloat};
use crate::mac::{accumulate_from, MacConfig, MacStats};
use crate::rng::{stream_seed, UniformSource};
use crate::rounding::{round_f64, RefMode};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum QuantMode {
    Rn,
    Sr { r: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QuantOrigin {
    pub source: String,
    pub mode: QuantMode,
}

/// A row-major tensor of packed values in one format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantTensor {
    shape: Vec<usize>,
    data: Vec<PackedFloat>,
    format: FloatFormat,
    origin: QuantOrigin,
}

impl QuantTensor {
    pub fn new(shape: Vec<usize>, data: Vec<PackedFloat>, format: FloatFormat, origin: QuantOrigin) -> Result<Self, Error> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::DimMismatch(format!("shape {shape:?} needs {} values, got {}", shape.iter().product::<usize>(), data.len())));
        }
        if let Some(v) = data.iter().find(|v| v.format() != format) {
            return Err(Error::FormatMismatch(format, v.format()));
        }
        Ok(Self { shape, data, format, origin })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[PackedFloat] {
        &self.data
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn origin(&self) -> &QuantOrigin {
        &self.origin
    }

    fn dims2(&self) -> Result<(usize, usize), Error> {
        match self.shape[..] {
            [m, k] => Ok((m, k)),
            [k] => Ok((1, k)),
            _ => Err(Error::DimMismatch(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }
}

/// Elementwise rounding into `fmt`. Magnitudes beyond the format saturate to
/// infinity; subnormals follow the format's policy. SR consumes one draw of
/// `r` bits per element in order.
pub fn quantize(values: &[f64], shape: Vec<usize>, fmt: FloatFormat, mode: QuantMode, rng: &mut impl UniformSource) -> Result<QuantTensor, Error> {
    let data = values
        .iter()
        .map(|&v| match mode {
            QuantMode::Rn => round_f64(v, fmt, RefMode::NearestEven).value,
            QuantMode::Sr { r } => round_f64(v, fmt, RefMode::Stochastic(rng.next_draw(r))).value,
        })
        .collect();
    QuantTensor::new(shape, data, fmt, QuantOrigin { source: "f64".into(), mode })
}

/// Round-to-nearest quantization, no random source needed.
pub fn quantize_rn(values: &[f64], shape: Vec<usize>, fmt: FloatFormat) -> Result<QuantTensor, Error> {
    let data = values.iter().map(|&v| round_f64(v, fmt, RefMode::NearestEven).value).collect();
    QuantTensor::new(shape, data, fmt, QuantOrigin { source: "f64".into(), mode: QuantMode::Rn })
}

/// `Σ x_i·y_i` accumulated in index order from `+0`.
pub fn dot(x: &[PackedFloat], y: &[PackedFloat], cfg: &MacConfig, rng: &mut impl UniformSource) -> Result<(PackedFloat, MacStats), Error> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch(format!("dot of lengths {} and {}", x.len(), y.len())));
    }
    for v in x.iter().chain(y) {
        if v.format() != cfg.mult_format {
            return Err(Error::FormatMismatch(cfg.mult_format, v.format()));
        }
    }
    Ok(accumulate_from(cfg.acc_format.zero(false), x.iter().copied().zip(y.iter().copied()), cfg, rng))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GemmOutput {
    pub rows: usize,
    pub cols: usize,
    /// Decoded accumulator values, row-major.
    pub values: Vec<f64>,
    /// Raw accumulator bits, row-major.
    pub bits: Vec<PackedFloat>,
    pub stats: MacStats,
}

/// `A (m×k) · B (k×n)`. Element `(i, j)` is an independent [`dot`] with its
/// own LFSR seeded from `stream_seed(seed, i, j)`, so the output does not
/// depend on evaluation order or thread count.
pub fn gemm(a: &QuantTensor, b: &QuantTensor, cfg: &MacConfig, seed: u64) -> Result<GemmOutput, Error> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::DimMismatch(format!("({m}x{k}) · ({k2}x{n})")));
    }
    for t in [a, b] {
        if t.format != cfg.mult_format {
            return Err(Error::FormatMismatch(cfg.mult_format, t.format));
        }
    }
    // Columns of B, contiguous.
    let bt: Vec<PackedFloat> = (0..n).flat_map(|j| (0..k).map(move |p| b.data[p * n + j])).collect();
    let cells: Vec<(PackedFloat, MacStats)> = (0..m * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let mut rng = cfg.lfsr(stream_seed(seed, i as u64, j as u64));
            let row = &a.data[i * k..(i + 1) * k];
            let col = &bt[j * k..(j + 1) * k];
            accumulate_from(cfg.acc_format.zero(false), row.iter().copied().zip(col.iter().copied()), cfg, &mut rng)
        })
        .collect();
    let mut stats = MacStats::default();
    for (_, s) in &cells {
        stats.steps += s.steps;
        stats.round_ups += s.round_ups;
        stats.overflows += s.overflows;
        stats.inexact_steps += s.inexact_steps;
    }
    Ok(GemmOutput {
        rows: m,
        cols: n,
        values: cells.iter().map(|(v, _)| v.to_f64()).collect(),
        bits: cells.into_iter().map(|(v, _)| v).collect(),
        stats,
    })
}

/// Exact product of two quantized matrices, for checking [`gemm`].
pub fn gemm_exact(a: &QuantTensor, b: &QuantTensor) -> Result<Vec<ExactReal>, Error> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::DimMismatch(format!("({m}x{k}) · ({k2}x{n})")));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut s = ExactReal::zero();
            for p in 0..k {
                s = &s + &(&a.data[i * k + p].to_real()? * &b.data[p * n + j].to_real()?);
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// A dense row-major matrix of `f64`, as read from or written to a tensor
/// file.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, Error> {
        if rows * cols != data.len() {
            return Err(Error::DimMismatch(format!("{rows}x{cols} matrix with {} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }
}

/// Parses a tensor file: a `dims: m k` header line, then `m` lines of `k`
/// comma-separated decimal values. Blank lines and `#` comments are skipped.
pub fn read_tensor(input: impl Read) -> Result<Matrix, Error> {
    let mut lines = BufReader::new(input)
        .lines()
        .map(|l| l.map_err(|e| Error::Parse(e.to_string())))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));
    let header = lines.next().ok_or_else(|| Error::Parse("empty tensor file".into()))??;
    let dims = header
        .trim()
        .strip_prefix("dims:")
        .ok_or_else(|| Error::Parse(format!("expected `dims: m k`, got {header:?}")))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dimension {t:?}"))))
        .collect::<Result<_, _>>()?;
    let (rows, cols) = match dims[..] {
        [m, k] => (m, k),
        [k] => (1, k),
        _ => return Err(Error::Parse(format!("expected two dimensions, got {dims:?}"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad value {t:?} on row {i}"))))
            .collect::<Result<_, _>>()?;
        if row.len() != cols {
            return Err(Error::DimMismatch(format!("row {i} has {} values, expected {cols}", row.len())));
        }
        data.extend(row);
    }
    Matrix::new(rows, cols, data)
}

/// Inverse of [`read_tensor`]. Values are printed with the shortest
/// representation that reads back exactly.
pub fn write_tensor(m: &Matrix) -> String {
    let mut s = format!("dims: {} {}\n", m.rows, m.cols);
    for row in m.data.chunks(m.cols.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::RoundMode;
    use crate::rng::FixedDraws;

    const E5M2: FloatFormat = FloatFormat::E5M2;

    #[test]
    fn quantize_examples() {
        let mut src = FixedDraws::new(vec![0]);
        let t = quantize(&[1.0, -2.0], vec![2], E5M2, QuantMode::Rn, &mut src).unwrap();
        assert_eq!(t.to_f64(), vec![1.0, -2.0]);
        let t = quantize_rn(&[1.0 + 0.125 + 2f64.powi(-6), 70000.0], vec![2], E5M2).unwrap();
        assert_eq!(t.to_f64(), vec![1.25, f64::INFINITY]);
        assert!(quantize_rn(&[1.0], vec![2], E5M2).is_err());
    }

    #[test]
    fn dot_examples() {
        let cfg = MacConfig::fp8(RoundMode::SrLazy);
        let mut rng = cfg.lfsr(3);
        assert_eq!(dot(&[], &[], &cfg, &mut rng).unwrap().0, FloatFormat::E6M5.zero(false));
        let x = [E5M2.from_f64(1.5)];
        assert_eq!(dot(&x, &x, &cfg, &mut rng).unwrap().0.to_f64(), 2.25);
        assert!(dot(&x, &[], &cfg, &mut rng).is_err());
    }

    #[test]
    fn tensor_file_round_trip() {
        let m = Matrix::new(2, 3, vec![1.0, -0.5, 3.25, 0.0, 1e-3, 7.0]).unwrap();
        let text = write_tensor(&m);
        assert!(text.starts_with("dims: 2 3\n"));
        assert_eq!(read_tensor(text.as_bytes()).unwrap(), m);
        assert!(read_tensor("dims: 2 2\n1,2\n3\n".as_bytes()).is_err());
        assert!(read_tensor("1,2\n".as_bytes()).is_err());
    }
}
