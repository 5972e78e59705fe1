//! Mouth glyph rendering, image corruptions and visual features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::video::{zigzag_coefficients, GrayFrame, FRAME_SIZE};
use crate::synth::config::DistortionConfig;

pub const SHAPE_DIMS: usize = 8;
const SKIN: f64 = 0.55;
const LIP: f64 = 0.3;
const CAVITY: f64 = 0.08;
const TEETH: f64 = 0.85;
/// Pixels this much darker than the frame median count towards the shape
/// landmarks.
const DARK_MARGIN: f64 = 0.12;

/// Parametric mouth shape of one state, in units of the half frame size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpec {
    pub viseme: usize,
    pub width: f64,
    pub height: f64,
    /// Inner opening as a fraction of the lip height.
    pub opening: f64,
    pub teeth: bool,
    /// Vertical mouth offset in pixels.
    pub offset: f64,
}

/// Anti-aliased render of a glyph (2x2 supersampling).
pub fn render_glyph(g: &GlyphSpec) -> GrayFrame {
    let half = FRAME_SIZE as f64 / 2.0;
    let (cx, cy) = (half - 0.5, half + 1.0 + g.offset);
    let (a, b) = (g.width * (half - 2.0), g.height * (half - 2.0));
    let (ai, bi) = (0.8 * a, g.opening * b);
    let value = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let shade = SKIN + 0.1 * (y / FRAME_SIZE as f64 - 0.5);
        if (dx / a).powi(2) + (dy / b).powi(2) > 1.0 {
            return shade;
        }
        if bi > 0.3 && (dx / ai).powi(2) + (dy / bi).powi(2) <= 1.0 {
            return if g.teeth && dy < -0.35 * bi { TEETH } else { CAVITY };
        }
        LIP
    };
    GrayFrame::from_fn(FRAME_SIZE, FRAME_SIZE, |x, y| {
        let mut s = 0.0;
        for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
            s += value(x as f64 + ox - 0.5, y as f64 + oy - 0.5);
        }
        s / 4.0
    })
}

/// Corruption applied to one video frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDistortion {
    /// Additive brightness offset.
    pub brightness: f64,
    /// Odd box-blur width; 1 leaves the frame sharp.
    pub blur: usize,
    /// Counter-clockwise rotation about the frame centre, degrees.
    pub rotation_deg: f64,
}

impl Default for FrameDistortion {
    fn default() -> Self {
        Self {
            brightness: 0.0,
            blur: 1,
            rotation_deg: 0.0,
        }
    }
}

impl FrameDistortion {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    /// Normalised severity in `[0, 1]`, the worst of the three components.
    pub fn severity(&self, cfg: &DistortionConfig) -> f64 {
        let max_blur = cfg.blur_widths.iter().copied().max().unwrap_or(1).max(2) as f64 - 1.0;
        let parts = [
            self.brightness.abs() / cfg.max_brightness.max(1e-12),
            (self.blur as f64 - 1.0) / max_blur,
            self.rotation_deg.abs() / cfg.max_rotation_deg.max(1e-12),
        ];
        parts.into_iter().fold(0.0, f64::max).clamp(0.0, 1.0)
    }

    /// Draws a random corruption with at least one active component.
    pub fn sample<R: Rng>(cfg: &DistortionConfig, rng: &mut R) -> Self {
        let mut d = Self::default();
        while d.is_identity() {
            if rng.gen_bool(0.5) && cfg.max_brightness > 0.0 {
                d.brightness = rng.gen_range(-cfg.max_brightness..=cfg.max_brightness);
            }
            if rng.gen_bool(0.5) {
                d.blur = cfg.blur_widths[rng.gen_range(0..cfg.blur_widths.len())];
            }
            if rng.gen_bool(0.5) && cfg.max_rotation_deg > 0.0 {
                d.rotation_deg = rng.gen_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg);
            }
            if cfg.max_brightness <= 0.0 && cfg.max_rotation_deg <= 0.0 && cfg.blur_widths.iter().all(|&w| w == 1) {
                break;
            }
        }
        d
    }
}

/// Separable box blur with edge replication.
pub fn box_blur(frame: &GrayFrame, width: usize) -> GrayFrame {
    if width <= 1 {
        return frame.clone();
    }
    let r = (width / 2) as isize;
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let at = |f: &GrayFrame, x: isize, y: isize| f.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let horiz = GrayFrame::from_fn(w as usize, h as usize, |x, y| {
        (-r..=r).map(|d| at(frame, x as isize + d, y as isize)).sum::<f64>() / width as f64
    });
    GrayFrame::from_fn(w as usize, h as usize, |x, y| {
        (-r..=r).map(|d| at(&horiz, x as isize, y as isize + d)).sum::<f64>() / width as f64
    })
}

/// Rotation about the frame centre with bilinear sampling and edge clamping.
pub fn rotate(frame: &GrayFrame, degrees: f64) -> GrayFrame {
    if degrees == 0.0 {
        return frame.clone();
    }
    let (w, h) = (frame.width(), frame.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let at = |x: isize, y: isize| frame.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    GrayFrame::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let sx = cx + cos * dx + sin * dy;
        let sy = cy - sin * dx + cos * dy;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
            + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1))
    })
}

/// Applies blur, then rotation, then the brightness offset. No clamping.
pub fn corrupt_frame(frame: &GrayFrame, d: &FrameDistortion) -> GrayFrame {
    let mut out = rotate(&box_blur(frame, d.blur), d.rotation_deg);
    if d.brightness != 0.0 {
        out.pixels_mut().iter_mut().for_each(|p| *p += d.brightness);
    }
    out
}

pub fn corrupt_video(frames: &[GrayFrame], spec: &[FrameDistortion]) -> Result<Vec<GrayFrame>> {
    if frames.len() != spec.len() {
        return Err(Error::Shape(format!(
            "{} frames but {} distortion entries",
            frames.len(),
            spec.len()
        )));
    }
    Ok(frames.iter().zip(spec).map(|(f, d)| corrupt_frame(f, d)).collect())
}

/// Adds Gaussian pixel noise and clamps to `[0, 1]`.
pub fn add_pixel_noise<R: Rng>(frame: &mut GrayFrame, sd: f64, rng: &mut R) {
    for p in frame.pixels_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *p = (*p + sd * e).clamp(0.0, 1.0);
    }
}

/// Leading zigzag DCT coefficients.
pub fn appearance_features(frame: &GrayFrame, dims: usize) -> Result<Vec<f64>> {
    zigzag_coefficients(frame, dims)
}

/// Darkness-weighted centroid of each image quadrant, as offsets from the
/// frame centre: `[x_tl, y_tl, x_tr, y_tr, x_bl, y_bl, x_br, y_br]`.
/// Darkness is measured below the frame median, so a global brightness
/// offset leaves the landmarks unchanged. An empty quadrant reports its own
/// centre.
pub fn shape_features(frame: &GrayFrame) -> [f64; SHAPE_DIMS] {
    let (w, h) = (frame.width(), frame.height());
    let mut sorted = frame.pixels().to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[sorted.len() / 2] - DARK_MARGIN;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut acc = [[0.0f64; 3]; 4];
    for y in 0..h {
        for x in 0..w {
            let wgt = (threshold - frame.get(x, y)).max(0.0);
            let q = usize::from(x as f64 > cx) + 2 * usize::from(y as f64 > cy);
            acc[q][0] += wgt;
            acc[q][1] += wgt * (x as f64 - cx);
            acc[q][2] += wgt * (y as f64 - cy);
        }
    }
    let mut out = [0.0; SHAPE_DIMS];
    for (q, a) in acc.iter().enumerate() {
        let (sx, sy) = (if q % 2 == 1 { 1.0 } else { -1.0 }, if q >= 2 { 1.0 } else { -1.0 });
        let (fx, fy) = if a[0] > 1e-9 {
            (a[1] / a[0], a[2] / a[0])
        } else {
            (sx * w as f64 / 4.0, sy * h as f64 / 4.0)
        };
        out[2 * q] = fx;
        out[2 * q + 1] = fy;
    }
    out
}
