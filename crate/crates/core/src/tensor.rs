//! Dense feature maps and descriptor primitives.
//!
//! Feature maps are row-major and channel-minor: the `C` features of cell
//! `(i, j)` are contiguous at `data[(i * width + j) * C..]`.

use crate::error::{Error, Result};

/// Guard used by every norm division.
pub const NORM_EPS: f64 = 1e-12;

/// Tolerance within which a nonzero slice descriptor is considered unit-norm.
pub const UNIT_NORM_TOL: f32 = 1e-4;

/// A dense `height x width x channels` grid of `f32` features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::LengthMismatch(data.len(), expected));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0 && channels > 0 && value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a map by evaluating `f(i, j, out)` for every cell.
    pub fn from_fn<F>(height: usize, width: usize, channels: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, &mut [f32]),
    {
        let mut data = vec![0.0; height * width * channels];
        for i in 0..height {
            for j in 0..width {
                let start = (i * width + j) * channels;
                f(i, j, &mut data[start..start + channels]);
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Features of cell `(i, j)`.
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.width + j) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Features of the cell with flat index `idx = i * width + j`.
    #[inline]
    pub fn cell_flat(&self, idx: usize) -> &[f32] {
        let start = idx * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Multiplies every cell by a per-cell scalar (broadcast over channels).
    pub fn scale_cells(&self, weights: &[f32]) -> Result<Self> {
        if weights.len() != self.cells() {
            return Err(Error::LengthMismatch(weights.len(), self.cells()));
        }
        let mut data = self.data.clone();
        for (cell, &w) in data.chunks_exact_mut(self.channels).zip(weights) {
            cell.iter_mut().for_each(|x| *x *= w);
        }
        Self::new(self.height, self.width, self.channels, data)
    }
}

/// One `C`-dimensional slice descriptor: zero or unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDescriptor(pub Vec<f32>);

impl SliceDescriptor {
    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.is_zero() || (norm(&self.0) as f32 - 1.0).abs() <= UNIT_NORM_TOL
    }
}

/// Concatenation of `N` slice descriptors, slice-major, length `N * C`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    n_slices: usize,
    channels: usize,
    values: Vec<f32>,
}

impl GlobalDescriptor {
    pub fn from_slices(slices: &[SliceDescriptor]) -> Result<Self> {
        let first = slices.first().ok_or(Error::Empty("slice descriptors"))?;
        let channels = first.0.len();
        let mut values = Vec::with_capacity(slices.len() * channels);
        for s in slices {
            if s.0.len() != channels {
                return Err(Error::LengthMismatch(s.0.len(), channels));
            }
            values.extend_from_slice(&s.0);
        }
        Ok(Self {
            n_slices: slices.len(),
            channels,
            values,
        })
    }

    /// Wraps a raw slice-major vector. Does not renormalize.
    pub fn from_values(n_slices: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n_slices * channels {
            return Err(Error::LengthMismatch(values.len(), n_slices * channels));
        }
        Ok(Self {
            n_slices,
            channels,
            values,
        })
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot(&self, n: usize) -> &[f32] {
        &self.values[n * self.channels..(n + 1) * self.channels]
    }

    /// Returns a copy whose slot `n` holds slot `perm[n]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.n_slices);
        let mut values = Vec::with_capacity(self.values.len());
        for &src in perm {
            values.extend_from_slice(self.slot(src));
        }
        Self {
            n_slices: self.n_slices,
            channels: self.channels,
            values,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.values
            .chunks_exact(self.channels)
            .all(|s| s.iter().all(|&x| x == 0.0) || (norm(s) as f32 - 1.0).abs() <= UNIT_NORM_TOL)
    }
}

#[inline]
pub(crate) fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Returns `v / max(|v|, eps)`; the zero vector maps to itself.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(l2_normalize_unchecked(v))
}

pub(crate) fn l2_normalize_unchecked(v: &[f32]) -> Vec<f32> {
    let n = norm(v).max(NORM_EPS);
    v.iter().map(|&x| (x as f64 / n) as f32).collect()
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(cosine_unchecked(a, b))
}

#[inline]
pub(crate) fn cosine_unchecked(a: &[f32], b: &[f32]) -> f32 {
    let mut ab = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let denom = (aa.sqrt() * bb.sqrt()).max(NORM_EPS);
    ((ab / denom) as f32).clamp(-1.0, 1.0)
}

/// Resamples a map along its width with bilinear interpolation.
///
/// Output column `j` reads source coordinate `(j + 0.5) * W / W' - 0.5`,
/// clamped to `[0, W - 1]` (align-corners-false). Height and channels are
/// untouched.
pub fn resize_width_bilinear(m: &FeatureMap, new_width: usize) -> Result<FeatureMap> {
    if new_width == 0 {
        return Err(Error::InvalidArgument("new_width must be >= 1".into()));
    }
    if new_width == m.width {
        return Ok(m.clone());
    }
    let (h, w, c) = (m.height, m.width, m.channels);
    let scale = w as f64 / new_width as f64;
    let taps: Vec<(usize, usize, f32)> = (0..new_width)
        .map(|j| {
            let x = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            (x0, x1, (x - x0 as f64) as f32)
        })
        .collect();
    let mut data = Vec::with_capacity(h * new_width * c);
    for i in 0..h {
        for &(x0, x1, t) in &taps {
            let a = m.cell(i, x0);
            let b = m.cell(i, x1);
            data.extend(a.iter().zip(b).map(|(&p, &q)| {
                // clamp keeps rounding from stepping outside [p, q]
                (p + t * (q - p)).clamp(p.min(q), p.max(q))
            }));
        }
    }
    FeatureMap::new(h, new_width, c, data)
}
