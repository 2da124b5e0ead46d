//! Hann-windowed STFT, weighted overlap-add inverse, and log-magnitude
//! feature normalization.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// Floor added to magnitudes before taking the log.
pub const LOG_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl Default for StftParams {
    /// Window 128, overlap 127, FFT 128.
    fn default() -> Self {
        Self {
            window_len: 128,
            hop: 1,
            fft_len: 128,
        }
    }
}

impl StftParams {
    pub fn new(window_len: usize, hop: usize, fft_len: usize) -> Result<Self> {
        let params = Self {
            window_len,
            hop,
            fft_len,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::Parameter(format!(
                "window length {} must be at least 2",
                self.window_len
            )));
        }
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_len {
            return Err(Error::Parameter(format!(
                "need 0 < hop ({}) <= window ({}) <= fft ({})",
                self.hop, self.window_len, self.fft_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of complete frames for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Complex STFT, `[bins × frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<Complex64>,
    params: StftParams,
    origin_len: usize,
    sample_rate_hz: u32,
}

impl Spectrogram {
    pub fn from_parts(
        data: Array2<Complex64>,
        params: StftParams,
        origin_len: usize,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        params.validate()?;
        let expected = (params.bins(), params.frames(origin_len));
        if data.dim() != expected {
            return Err(Error::Shape(format!(
                "spectrogram is {:?}, params and length {origin_len} imply {expected:?}",
                data.dim()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numeric("spectrogram has non-finite cells".into()));
        }
        Ok(Self {
            data,
            params,
            origin_len,
            sample_rate_hz,
        })
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn origin_len(&self) -> usize {
        self.origin_len
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn bins(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// One past the last sample touched by any frame.
    pub fn covered_len(&self) -> usize {
        (self.frames() - 1) * self.params.hop + self.params.window_len
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    /// Same params and origin, new cell values.
    pub(crate) fn with_data(&self, data: Array2<Complex64>) -> Self {
        debug_assert_eq!(data.dim(), self.data.dim());
        Self {
            data,
            params: self.params,
            origin_len: self.origin_len,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Symmetric Hann window, `0.5·(1 − cos(2πn/(len−1)))`, zero at both ends.
pub fn hann_window(len: usize) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::Parameter(format!(
            "Hann window needs at least 2 points, got {len}"
        )));
    }
    let denom = (len - 1) as f64;
    Ok((0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / denom).cos()))
        .collect())
}

pub fn stft(signal: &AudioSignal, params: StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let x = signal.samples();
    if x.len() < params.window_len {
        return Err(Error::Length(format!(
            "signal of {} samples is shorter than the {}-sample window",
            x.len(),
            params.window_len
        )));
    }
    let window = hann_window(params.window_len)?;
    let frames = params.frames(x.len());
    let bins = params.bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.fft_len);

    let mut data = Array2::<Complex64>::zeros((bins, frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); params.fft_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for f in 0..frames {
        let start = f * params.hop;
        buf.fill(Complex64::new(0.0, 0.0));
        for (slot, (&s, &w)) in buf.iter_mut().zip(x[start..].iter().zip(&window)) {
            slot.re = s * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, &c) in buf.iter().take(bins).enumerate() {
            data[[k, f]] = c;
        }
    }
    Spectrogram::from_parts(data, params, x.len(), signal.sample_rate_hz())
}

/// Weighted overlap-add inverse.
///
/// Each frame is inverse-transformed, windowed again and accumulated, then
/// divided by the accumulated squared window. The first and last covered
/// samples only ever meet the zero endpoints of the window; they carry no
/// information and come back as 0, as do trailing samples no frame reaches.
/// A zero envelope anywhere strictly between them means the hop leaves a gap
/// and is rejected.
pub fn istft(spec: &Spectrogram) -> Result<AudioSignal> {
    let params = spec.params;
    let window = hann_window(params.window_len)?;
    let n = params.fft_len;
    let bins = params.bins();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let covered = spec.covered_len();

    let mut out = vec![0.0; spec.origin_len];
    let mut envelope = vec![0.0; covered];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;

    for f in 0..spec.frames() {
        for k in 0..bins {
            buf[k] = spec.data[[k, f]];
        }
        // Hermitian completion of the negative frequencies
        for k in bins..n {
            buf[k] = spec.data[[n - k, f]].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = f * params.hop;
        for (i, &w) in window.iter().enumerate() {
            out[start + i] += buf[i].re * scale * w;
            envelope[start + i] += w * w;
        }
    }

    for (i, (sample, &weight)) in out.iter_mut().zip(&envelope).enumerate() {
        if weight > 1e-12 {
            *sample /= weight;
        } else if i == 0 || i + 1 == covered {
            *sample = 0.0;
        } else {
            return Err(Error::Degenerate(format!(
                "zero window weight at sample {i}: hop {} leaves a gap in the overlap-add",
                params.hop
            )));
        }
    }
    AudioSignal::new(out, spec.sample_rate_hz)
}

/// Global statistics of the training log-magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub epsilon: f64,
}

/// `ln(mag + ε)`, standardized with `stats` if given, otherwise with the
/// global mean and standard deviation of this matrix (returned for reuse).
pub fn log_features(
    mag: &Array2<f64>,
    stats: Option<&FeatureStats>,
) -> Result<(Array2<f64>, FeatureStats)> {
    if mag.is_empty() {
        return Err(Error::Data("empty magnitude matrix".into()));
    }
    if mag.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::Parameter(
            "magnitudes must be finite and non-negative".into(),
        ));
    }
    let epsilon = stats.map_or(LOG_EPSILON, |s| s.epsilon);
    let logs = mag.mapv(|m| (m + epsilon).ln());
    let stats = match stats {
        Some(s) => {
            if !(s.std > 0.0) {
                return Err(Error::Degenerate(format!(
                    "feature std {} is not positive",
                    s.std
                )));
            }
            *s
        }
        None => {
            let count = logs.len() as f64;
            let mean = logs.sum() / count;
            let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
            let std = var.sqrt();
            if std <= 1e-12 * mean.abs().max(1.0) {
                return Err(Error::Degenerate(
                    "log features are constant; cannot standardize".into(),
                ));
            }
            FeatureStats { mean, std, epsilon }
        }
    };
    let features = logs.mapv(|v| (v - stats.mean) / stats.std);
    Ok((features, stats))
}

/// Writes a real `[bins × frames]` matrix as CSV, one row per bin.
pub fn write_matrix_csv(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for row in matrix.rows() {
        let line = row
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
