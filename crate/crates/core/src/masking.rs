//! Oracle time-frequency masks and mask-based reconstruction.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::spectral::{istft, Spectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Binary,
    Soft,
}

/// Real `[bins × frames]` multiplier for a mixture spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    data: Array2<f64>,
    kind: MaskKind,
}

impl Mask {
    /// Checks the range invariant: binary cells are 0 or 1, soft cells lie in [0, 1].
    pub fn new(data: Array2<f64>, kind: MaskKind) -> Result<Self> {
        let bad = match kind {
            MaskKind::Binary => data.iter().position(|&v| v != 0.0 && v != 1.0),
            MaskKind::Soft => data.iter().position(|&v| !(0.0..=1.0).contains(&v)),
        };
        if let Some(i) = bad {
            return Err(Error::Parameter(format!(
                "{kind:?} mask cell {i} out of range: {}",
                data.iter().nth(i).unwrap()
            )));
        }
        Ok(Self { data, kind })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }
}

fn check_magnitudes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "magnitude shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.iter().chain(b.iter()).any(|&v| !(v >= 0.0)) {
        return Err(Error::Parameter("magnitudes must be non-negative".into()));
    }
    Ok(())
}

/// `a / (a + b)` per cell; 0.5 where both are zero.
pub fn soft_mask(mag_a: &Array2<f64>, mag_b: &Array2<f64>) -> Result<Mask> {
    check_magnitudes(mag_a, mag_b)?;
    let data = Zip::from(mag_a).and(mag_b).map_collect(|&a, &b| {
        let total = a + b;
        if total > 0.0 {
            a / total
        } else {
            0.5
        }
    });
    Mask::new(data, MaskKind::Soft)
}

/// 1 where source `a` carries at least as much power as `b`, else 0.
///
/// Comparing magnitudes gives the same answer as comparing their squares.
pub fn binary_mask(mag_a: &Array2<f64>, mag_b: &Array2<f64>) -> Result<Mask> {
    check_magnitudes(mag_a, mag_b)?;
    let data = Zip::from(mag_a)
        .and(mag_b)
        .map_collect(|&a, &b| if a >= b { 1.0 } else { 0.0 });
    Mask::new(data, MaskKind::Binary)
}

pub fn complement(mask: &Mask) -> Mask {
    Mask {
        data: mask.data.mapv(|v| 1.0 - v),
        kind: mask.kind,
    }
}

/// Scales each mixture cell by the mask, keeping the mixture phase.
pub fn apply_mask(mask: &Mask, mixture: &Spectrogram) -> Result<Spectrogram> {
    if mask.shape() != mixture.shape() {
        return Err(Error::Shape(format!(
            "mask {:?} does not match spectrogram {:?}",
            mask.shape(),
            mixture.shape()
        )));
    }
    let data = Zip::from(&mask.data)
        .and(mixture.data())
        .map_collect(|&m, &c| c * m);
    Ok(mixture.with_data(data))
}

pub fn reconstruct(mask: &Mask, mixture: &Spectrogram) -> Result<AudioSignal> {
    istft(&apply_mask(mask, mixture)?)
}
