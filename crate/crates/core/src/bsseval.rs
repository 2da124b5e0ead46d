//! BSS Eval with a time-invariant gain: orthogonal decomposition of an
//! estimate into target, interference and artifact parts, the SDR/SIR/SAR
//! energy ratios, and the Table-style metric report.

use std::io::Write;
use std::path::Path;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// Components whose norm falls below this fraction of the estimate norm are
/// rounding residue and are set to exactly zero.
const RESIDUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
    /// Always zero: there is no separate noise reference.
    pub e_noise: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

fn scaled(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

fn snap_residue(v: &mut [f64], scale: f64) {
    if energy(v).sqrt() <= RESIDUE * scale {
        v.fill(0.0);
    }
}

/// Splits `estimate` against `references[target_index]`.
pub fn decompose(
    estimate: &AudioSignal,
    target_index: usize,
    references: &[AudioSignal],
) -> Result<Decomposition> {
    if let Some(r) = references
        .iter()
        .find(|r| r.sample_rate_hz() != estimate.sample_rate_hz())
    {
        return Err(Error::Rate(estimate.sample_rate_hz(), r.sample_rate_hz()));
    }
    let refs: Vec<&[f64]> = references.iter().map(|r| r.samples()).collect();
    decompose_samples(estimate.samples(), target_index, &refs)
}

pub fn decompose_samples(
    estimate: &[f64],
    target_index: usize,
    references: &[&[f64]],
) -> Result<Decomposition> {
    let k = references.len();
    if target_index >= k {
        return Err(Error::Shape(format!(
            "target index {target_index} with {k} references"
        )));
    }
    let n = estimate.len();
    if n == 0 || references.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!(
            "estimate has {n} samples; references must match and be non-empty"
        )));
    }

    let gram = DMatrix::from_fn(k, k, |i, j| dot(references[i], references[j]));
    let diag: Vec<f64> = (0..k).map(|i| gram[(i, i)]).collect();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Degenerate("a reference has zero energy".into()));
    }
    let normalized = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] / (diag[i] * diag[j]).sqrt());
    let min_eig = normalized
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 1e-10 {
        return Err(Error::Degenerate(
            "references are linearly dependent".into(),
        ));
    }
    let rhs = DVector::from_fn(k, |i, _| dot(references[i], estimate));
    let coeffs = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("reference Gram matrix not positive definite".into()))?
        .solve(&rhs);

    let mut projection = vec![0.0; n];
    for (r, &c) in references.iter().zip(coeffs.iter()) {
        for (p, x) in projection.iter_mut().zip(r.iter()) {
            *p += c * x;
        }
    }
    let target = references[target_index];
    let gain = rhs[target_index] / diag[target_index];
    let s_target = scaled(target, gain);
    let mut e_interf: Vec<f64> = projection
        .iter()
        .zip(&s_target)
        .map(|(p, s)| p - s)
        .collect();
    let mut e_artif: Vec<f64> = estimate
        .iter()
        .zip(&projection)
        .map(|(e, p)| e - p)
        .collect();

    let scale = energy(estimate).sqrt();
    snap_residue(&mut e_interf, scale);
    snap_residue(&mut e_artif, scale);
    Ok(Decomposition {
        s_target,
        e_interf,
        e_artif,
        e_noise: vec![0.0; n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

/// `10·log10(num/den)`; +∞ for a zero denominator, −∞ for a zero numerator.
fn ratio_db(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        f64::NEG_INFINITY
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

pub fn ratios(d: &Decomposition) -> Result<Ratios> {
    let total_error: Vec<f64> = d
        .e_interf
        .iter()
        .zip(&d.e_noise)
        .zip(&d.e_artif)
        .map(|((i, n), a)| i + n + a)
        .collect();
    let target_energy = energy(&d.s_target);
    let error_energy = energy(&total_error);
    if target_energy == 0.0 && error_energy == 0.0 {
        return Err(Error::UndefinedMetric(
            "estimate has no energy in any component".into(),
        ));
    }
    let wanted: Vec<f64> = d
        .s_target
        .iter()
        .zip(&d.e_interf)
        .zip(&d.e_noise)
        .map(|((s, i), n)| s + i + n)
        .collect();
    Ok(Ratios {
        sdr_db: ratio_db(target_energy, error_energy),
        sir_db: ratio_db(target_energy, energy(&d.e_interf)),
        sar_db: ratio_db(energy(&wanted), energy(&d.e_artif)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceMetrics {
    pub reference: usize,
    pub estimate: usize,
    pub ratios: Ratios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BssEvalResult {
    /// One entry per reference, in reference order.
    pub sources: Vec<SourceMetrics>,
    /// `permutation[i]` is the reference matched to estimate `i`.
    pub permutation: Vec<usize>,
}

fn mean_sir(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    if sum.is_nan() {
        f64::NEG_INFINITY
    } else {
        sum
    }
}

/// Scores every estimate against every reference and keeps the assignment
/// with the highest mean SIR (first one wins a tie, identity first).
pub fn evaluate(estimates: &[AudioSignal], references: &[AudioSignal]) -> Result<BssEvalResult> {
    let k = references.len();
    if estimates.len() != k || k == 0 {
        return Err(Error::Shape(format!(
            "{} estimates for {k} references",
            estimates.len()
        )));
    }
    let n = references[0].len();
    if estimates.iter().chain(references).any(|s| s.len() != n) {
        return Err(Error::Shape(
            "estimates and references differ in length".into(),
        ));
    }

    let mut table = Vec::with_capacity(k);
    for est in estimates {
        let row: Vec<Ratios> = (0..k)
            .map(|j| ratios(&decompose(est, j, references)?))
            .collect::<Result<_>>()?;
        table.push(row);
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let score = mean_sir(perm.iter().enumerate().map(|(i, &j)| table[i][j].sir_db));
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, perm));
        }
    }
    let (_, permutation) = best.expect("at least one permutation");
    let mut sources: Vec<SourceMetrics> = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| SourceMetrics {
            reference: j,
            estimate: i,
            ratios: table[i][j],
        })
        .collect();
    sources.sort_by_key(|s| s.reference);
    Ok(BssEvalResult {
        sources,
        permutation,
    })
}

/// A dB value that serializes infinities as `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Db(pub f64);

impl Db {
    pub fn to_field(self) -> String {
        if self.0 == f64::INFINITY {
            "inf".into()
        } else if self.0 == f64::NEG_INFINITY {
            "-inf".into()
        } else {
            format!("{}", self.0)
        }
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str(&self.to_field())
        }
    }
}

/// One row of the metric report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub source: String,
    pub sdr_db: Db,
    pub sir_db: Db,
    pub sar_db: Db,
    /// Index of the estimate assigned to this source.
    pub permutation: usize,
}

pub const REPORT_COLUMNS: [&str; 6] = [
    "method",
    "source",
    "sdr_db",
    "sir_db",
    "sar_db",
    "permutation",
];

pub fn report_rows(
    method: &str,
    source_names: &[String],
    result: &BssEvalResult,
) -> Vec<MetricRow> {
    result
        .sources
        .iter()
        .map(|s| MetricRow {
            method: method.to_string(),
            source: source_names
                .get(s.reference)
                .cloned()
                .unwrap_or_else(|| format!("source_{}", s.reference)),
            sdr_db: Db(s.ratios.sdr_db),
            sir_db: Db(s.ratios.sir_db),
            sar_db: Db(s.ratios.sar_db),
            permutation: s.estimate,
        })
        .collect()
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = REPORT_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            r.source,
            r.sdr_db.to_field(),
            r.sir_db.to_field(),
            r.sar_db.to_field(),
            r.permutation
        ));
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(rows_to_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}
