//! Mono audio signals: WAV I/O, power normalization, mixing, splitting and
//! the seeded synthetic machine-sound generators.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 44_100;

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Samples `[start, end)` as a new signal.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::Length(format!(
                "slice {start}..{end} out of range for {} samples",
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

pub(crate) fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads a PCM16 or float32 WAV file.
///
/// Multichannel files are rejected unless `channel` selects one of them.
pub fn read_wav(path: impl AsRef<Path>, channel: Option<usize>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let selected = match channel {
        Some(c) if c < channels => c,
        Some(c) => {
            return Err(Error::Parameter(format!(
                "channel {c} requested but file has {channels}"
            )))
        }
        None if channels == 1 => 0,
        None => {
            return Err(Error::Channel {
                channels: spec.channels,
            })
        }
    };

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (format, bits) => {
            return Err(Error::Format(format!(
                "unsupported WAV encoding {format:?} {bits}-bit in {}",
                path.display()
            )))
        }
    };

    let samples = interleaved
        .into_iter()
        .skip(selected)
        .step_by(channels)
        .collect();
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes a mono WAV file. PCM16 saturates out-of-range samples and logs a warning.
pub fn write_wav(
    path: impl AsRef<Path>,
    signal: &AudioSignal,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz,
        bits_per_sample,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    match encoding {
        WavEncoding::Pcm16 => {
            let mut clipped = 0usize;
            for &s in &signal.samples {
                let code = (s * 32768.0).round();
                if !(-32768.0..=32767.0).contains(&code) {
                    clipped += 1;
                }
                writer
                    .write_sample(code.clamp(-32768.0, 32767.0) as i16)
                    .map_err(|e| hound_error(path, e))?;
            }
            if clipped > 0 {
                log::warn!(
                    "{clipped} samples clipped while writing PCM16 {}",
                    path.display()
                );
            }
        }
        WavEncoding::Float32 => {
            for &s in &signal.samples {
                writer
                    .write_sample(s as f32)
                    .map_err(|e| hound_error(path, e))?;
            }
        }
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

fn hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Scales the signal to unit RMS.
pub fn normalize_power(signal: &AudioSignal) -> Result<AudioSignal> {
    let level = signal.rms();
    if level == 0.0 || !level.is_finite() {
        return Err(Error::Degenerate(
            "cannot normalize a signal with zero energy".into(),
        ));
    }
    let scale = 1.0 / level;
    Ok(AudioSignal {
        samples: signal.samples.iter().map(|s| s * scale).collect(),
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// `w_a·a + w_b·b`. Lengths must agree unless `truncate` is set, in which
/// case the longer input is cut to the shorter one.
pub fn mix(
    a: &AudioSignal,
    b: &AudioSignal,
    w_a: f64,
    w_b: f64,
    truncate: bool,
) -> Result<AudioSignal> {
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::Rate(a.sample_rate_hz, b.sample_rate_hz));
    }
    if a.len() != b.len() && !truncate {
        return Err(Error::Length(format!(
            "cannot mix {} and {} samples without truncation",
            a.len(),
            b.len()
        )));
    }
    let samples = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| w_a * x + w_b * y)
        .collect();
    AudioSignal::new(samples, a.sample_rate_hz)
}

/// Leading `floor(N·train_fraction)` samples and the remainder.
pub fn split_train_validation(
    signal: &AudioSignal,
    train_fraction: f64,
) -> Result<(AudioSignal, AudioSignal)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = signal.len();
    // guard against 0.9 * 10 landing a hair under 9
    let cut = ((n as f64 * train_fraction) + 1e-9).floor() as usize;
    if cut == 0 || cut >= n {
        return Err(Error::Data(format!(
            "splitting {n} samples at fraction {train_fraction} leaves an empty part"
        )));
    }
    Ok((signal.slice(0, cut)?, signal.slice(cut, n)?))
}

fn sample_count(duration_s: f64, sample_rate_hz: u32) -> Result<usize> {
    if sample_rate_hz == 0 {
        return Err(Error::Parameter("sample rate must be positive".into()));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Parameter(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let n = (duration_s * sample_rate_hz as f64).round() as usize;
    if n == 0 {
        return Err(Error::Parameter(format!(
            "duration {duration_s} s is shorter than one sample"
        )));
    }
    Ok(n)
}

/// Repeating clicks: impulses at `pulse_rate_hz`, each followed by an
/// exponential tail that loses `decay_per_sample` of its amplitude per sample.
///
/// Onsets sit at the middle of each pulse period, shifted by up to ±5% of the
/// period from a seeded uniform draw.
pub fn synth_impulse_train(
    pulse_rate_hz: f64,
    decay_per_sample: f64,
    duration_s: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<AudioSignal> {
    let n = sample_count(duration_s, sample_rate_hz)?;
    let fs = sample_rate_hz as f64;
    if !(pulse_rate_hz > 0.0 && pulse_rate_hz < fs / 2.0) {
        return Err(Error::Parameter(format!(
            "pulse rate {pulse_rate_hz} Hz must lie in (0, {}) Hz",
            fs / 2.0
        )));
    }
    if !(decay_per_sample > 0.0 && decay_per_sample < 1.0) {
        return Err(Error::Parameter(format!(
            "decay per sample {decay_per_sample} not in (0, 1)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = fs / pulse_rate_hz;
    let mut impulses = vec![0.0; n];
    let mut k = 0usize;
    loop {
        let jitter = rng.gen_range(-0.05..=0.05) * period;
        let onset = ((k as f64 + 0.5) * period + jitter).round();
        if onset >= n as f64 {
            break;
        }
        if onset >= 0.0 {
            impulses[onset as usize] += 1.0;
        }
        k += 1;
    }

    let retain = 1.0 - decay_per_sample;
    let mut state = 0.0;
    let samples = impulses
        .into_iter()
        .map(|x| {
            state = retain * state + x;
            state
        })
        .collect();
    AudioSignal::new(samples, sample_rate_hz)
}

/// Seeded Gaussian white noise with every frequency outside
/// `[low_hz, high_hz]` zeroed (brick-wall filter over the whole signal).
pub fn synth_filtered_noise(
    low_hz: f64,
    high_hz: f64,
    duration_s: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<AudioSignal> {
    let n = sample_count(duration_s, sample_rate_hz)?;
    let nyquist = sample_rate_hz as f64 / 2.0;
    if !(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist) {
        return Err(Error::Parameter(format!(
            "band [{low_hz}, {high_hz}] Hz invalid for Nyquist {nyquist} Hz"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let bin_hz = sample_rate_hz as f64 / n as f64;
    for (k, cell) in spectrum.iter_mut().enumerate() {
        let folded = k.min(n - k);
        let f = folded as f64 * bin_hz;
        if f < low_hz || f > high_hz {
            *cell = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    AudioSignal::new(
        spectrum.into_iter().map(|c| c.re * scale).collect(),
        sample_rate_hz,
    )
}
