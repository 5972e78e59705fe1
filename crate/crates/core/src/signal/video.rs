//! Grayscale frame features: DCT coefficients and image-distortion measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::audio::dct_matrix;
use crate::types::Matrix;

/// Side length of the synthetic mouth-region frames.
pub const FRAME_SIZE: usize = 32;
/// Number of DCT coefficients used as reliability indicators.
pub const NUM_IDCT: usize = 5;

/// Row-major grayscale image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn mirrored(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }
}

/// Separable orthonormal 2-D DCT-II of a square frame.
pub fn dct2(frame: &GrayFrame) -> Result<Matrix> {
    let n = frame.width;
    if frame.height != n {
        return Err(Error::Shape(format!(
            "DCT needs a square frame, got {}x{}",
            frame.width, frame.height
        )));
    }
    let c = dct_matrix(n, n);
    let mut rows = Matrix::zeros(n, n);
    for y in 0..n {
        for k in 0..n {
            rows.set(y, k, (0..n).map(|x| c.get(k, x) * frame.get(x, y)).sum());
        }
    }
    Ok(Matrix::from_fn(n, n, |ky, kx| {
        (0..n).map(|y| c.get(ky, y) * rows.get(y, kx)).sum()
    }))
}

/// JPEG-style zigzag scan of an `n x n` grid as (row, col) pairs, starting
/// at DC.
pub fn zigzag(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n);
    for s in 0..2 * n - 1 {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        if s % 2 == 0 {
            for r in (lo..=hi).rev() {
                out.push((r, s - r));
            }
        } else {
            for r in lo..=hi {
                out.push((r, s - r));
            }
        }
    }
    out
}

/// First `count` DCT coefficients of a frame in zigzag order.
pub fn zigzag_coefficients(frame: &GrayFrame, count: usize) -> Result<Vec<f64>> {
    let d = dct2(frame)?;
    Ok(zigzag(frame.width)
        .into_iter()
        .take(count)
        .map(|(r, c)| d.get(r, c))
        .collect())
}

/// The five leading zigzag DCT coefficients of a 32x32 frame.
pub fn idct_features(frame: &GrayFrame) -> Result<Vec<f64>> {
    if frame.width != FRAME_SIZE || frame.height != FRAME_SIZE {
        return Err(Error::Shape(format!(
            "expected a {FRAME_SIZE}x{FRAME_SIZE} frame, got {}x{}",
            frame.width, frame.height
        )));
    }
    zigzag_coefficients(frame, NUM_IDCT)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageDistortion {
    pub brightness: f64,
    pub blur: f64,
    pub rotation: f64,
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(frame: &GrayFrame) -> f64 {
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut vals = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            vals.push(
                frame.get(x - 1, y) + frame.get(x + 1, y) + frame.get(x, y - 1) + frame.get(x, y + 1)
                    - 4.0 * frame.get(x, y),
            );
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
}

/// Normalised cross-correlation of the frame with its left-right mirror.
/// A constant frame is perfectly self-similar and scores 1.
pub fn mirror_correlation(frame: &GrayFrame) -> f64 {
    let m = frame.mirrored();
    let (ma, mb) = (frame.mean(), m.mean());
    let mut num = 0.0;
    let (mut ea, mut eb) = (0.0, 0.0);
    for (a, b) in frame.pixels.iter().zip(&m.pixels) {
        num += (a - ma) * (b - mb);
        ea += (a - ma).powi(2);
        eb += (b - mb).powi(2);
    }
    if ea <= 1e-18 || eb <= 1e-18 {
        1.0
    } else {
        (num / (ea * eb).sqrt()).clamp(-1.0, 1.0)
    }
}

pub fn image_distortion(frame: &GrayFrame) -> ImageDistortion {
    ImageDistortion {
        brightness: frame.mean(),
        blur: laplacian_variance(frame),
        rotation: mirror_correlation(frame),
    }
}
