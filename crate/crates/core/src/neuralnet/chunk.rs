use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sliding `bins × width_frames` blocks advanced by `width − overlap` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkSpec {
    pub bins: usize,
    pub width_frames: usize,
    pub overlap_frames: usize,
}

impl Default for ChunkSpec {
    fn default() -> Self {
        Self {
            bins: 65,
            width_frames: 20,
            overlap_frames: 10,
        }
    }
}

impl ChunkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Parameter("chunk bins must be positive".into()));
        }
        if !(self.overlap_frames < self.width_frames) {
            return Err(Error::Parameter(format!(
                "chunk overlap {} must be below width {}",
                self.overlap_frames, self.width_frames
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.width_frames - self.overlap_frames
    }

    pub fn flat_len(&self) -> usize {
        self.bins * self.width_frames
    }

    /// Chunks that fit in `frames` columns.
    pub fn count(&self, frames: usize) -> usize {
        if frames < self.width_frames {
            0
        } else {
            (frames - self.width_frames) / self.stride() + 1
        }
    }

    /// Columns reached by at least one chunk.
    pub fn covered_frames(&self, frames: usize) -> usize {
        match self.count(frames) {
            0 => 0,
            n => (n - 1) * self.stride() + self.width_frames,
        }
    }
}

/// Flattens each block column by column (frequency index fastest) into one row.
pub fn chunk(features: ArrayView2<f64>, spec: &ChunkSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let (bins, frames) = features.dim();
    if bins != spec.bins {
        return Err(Error::Shape(format!(
            "features have {bins} bins, chunk spec expects {}",
            spec.bins
        )));
    }
    if frames < spec.width_frames {
        return Err(Error::Length(format!(
            "{frames} frames cannot hold a {}-frame chunk",
            spec.width_frames
        )));
    }
    let n = spec.count(frames);
    let mut rows = Array2::zeros((n, spec.flat_len()));
    for (k, mut row) in rows.rows_mut().into_iter().enumerate() {
        let start = k * spec.stride();
        for f in 0..spec.width_frames {
            for b in 0..bins {
                row[f * bins + b] = features[[b, start + f]];
            }
        }
    }
    Ok(rows)
}

/// Result of folding chunk rows back onto the frame axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dechunked {
    pub matrix: Array2<f64>,
    /// Columns at or beyond this index were not covered and hold zeros.
    pub covered_frames: usize,
}

impl Dechunked {
    pub fn has_uncovered_tail(&self) -> bool {
        self.covered_frames < self.matrix.ncols()
    }
}

/// Inverse of [`chunk`]: each cell is the mean of every chunk value covering it.
pub fn dechunk(rows: ArrayView2<f64>, spec: &ChunkSpec, frames: usize) -> Result<Dechunked> {
    spec.validate()?;
    let expected = spec.count(frames);
    if rows.nrows() != expected || rows.ncols() != spec.flat_len() || expected == 0 {
        return Err(Error::Shape(format!(
            "{}x{} chunk matrix inconsistent with {frames} frames (expected {expected}x{})",
            rows.nrows(),
            rows.ncols(),
            spec.flat_len()
        )));
    }
    let bins = spec.bins;
    let mut sum = Array2::<f64>::zeros((bins, frames));
    let mut hits = vec![0u32; frames];
    for (k, row) in rows.rows().into_iter().enumerate() {
        let start = k * spec.stride();
        for f in 0..spec.width_frames {
            hits[start + f] += 1;
            for b in 0..bins {
                sum[[b, start + f]] += row[f * bins + b];
            }
        }
    }
    for (mut col, &count) in sum.columns_mut().into_iter().zip(&hits) {
        if count > 1 {
            col.mapv_inplace(|v| v / count as f64);
        }
    }
    let covered_frames = spec.covered_frames(frames);
    if covered_frames < frames {
        log::debug!("frames {covered_frames}..{frames} not covered by any chunk; zero-filled");
    }
    Ok(Dechunked {
        matrix: sum,
        covered_frames,
    })
}
