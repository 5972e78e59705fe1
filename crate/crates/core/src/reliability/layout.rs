//! Fixed, named layout of the per-frame reliability vector.
//!
//! The full layout has 41 entries:
//!
//! * 18 model-based: for each stream A, VA, VS the six measures entropy,
//!   dispersion, posterior difference, temporal divergence, entropy ratio and
//!   dispersion ratio (`A.entropy`, ..., `VS.dispersion_ratio`);
//! * 14 audio signal-based: `mfcc0..4`, `dmfcc0..4`, `snr`, `f0`, `delta_f0`,
//!   `voicing`;
//! * 9 video signal-based: `confidence`, `idct0..4`, `brightness`, `blur`,
//!   `rotation`.
//!
//! Groups can be switched off in the configuration; the remaining columns keep
//! their relative order.

use serde::{Deserialize, Serialize};

use super::model::{StreamMeasures, MEASURE_NAMES};
use crate::error::{Error, Result};
use crate::types::{Matrix, StreamId};

pub const AUDIO_SIGNAL_NAMES: [&str; 14] = [
    "mfcc0", "mfcc1", "mfcc2", "mfcc3", "mfcc4", "dmfcc0", "dmfcc1", "dmfcc2", "dmfcc3", "dmfcc4", "snr", "f0",
    "delta_f0", "voicing",
];

pub const VIDEO_SIGNAL_NAMES: [&str; 9] = [
    "confidence",
    "idct0",
    "idct1",
    "idct2",
    "idct3",
    "idct4",
    "brightness",
    "blur",
    "rotation",
];

/// Which indicator groups enter the vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilityGroups {
    pub model: bool,
    pub audio: bool,
    pub video: bool,
}

impl Default for ReliabilityGroups {
    fn default() -> Self {
        Self {
            model: true,
            audio: true,
            video: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReliabilityLayout {
    groups: ReliabilityGroups,
    names: Vec<String>,
}

/// Constituents of the reliability sequence, all at the audio frame rate.
pub struct ReliabilityParts<'a> {
    /// One `T x 6` block per stream, in A, VA, VS order.
    pub model: &'a [StreamMeasures],
    /// `T x 14`, columns as in [`AUDIO_SIGNAL_NAMES`].
    pub audio: &'a Matrix,
    /// `T x 9`, columns as in [`VIDEO_SIGNAL_NAMES`].
    pub video: &'a Matrix,
}

impl ReliabilityLayout {
    pub fn new(groups: ReliabilityGroups) -> Self {
        let mut names = Vec::new();
        if groups.model {
            for s in StreamId::ALL {
                names.extend(MEASURE_NAMES.iter().map(|m| format!("{s}.{m}")));
            }
        }
        if groups.audio {
            names.extend(AUDIO_SIGNAL_NAMES.iter().map(|n| n.to_string()));
        }
        if groups.video {
            names.extend(VIDEO_SIGNAL_NAMES.iter().map(|n| n.to_string()));
        }
        Self { groups, names }
    }

    pub fn full() -> Self {
        Self::new(ReliabilityGroups::default())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> ReliabilityGroups {
        self.groups
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Concatenates the enabled groups into a `T x R` matrix.
    pub fn assemble(&self, parts: &ReliabilityParts<'_>) -> Result<Matrix> {
        let t_len = parts.audio.rows();
        let mut blocks: Vec<&Matrix> = Vec::new();
        if self.groups.model {
            if parts.model.len() != StreamId::COUNT {
                return Err(Error::Shape(format!(
                    "expected 3 model blocks, got {}",
                    parts.model.len()
                )));
            }
            for (m, s) in parts.model.iter().zip(StreamId::ALL) {
                if m.stream != s {
                    return Err(Error::InvalidInput(format!("model block {} out of order", m.stream)));
                }
                blocks.push(&m.values);
            }
        }
        if self.groups.audio {
            blocks.push(parts.audio);
        }
        if self.groups.video {
            blocks.push(parts.video);
        }
        let expected = [MEASURE_NAMES.len(); 3]
            .into_iter()
            .take(if self.groups.model { 3 } else { 0 })
            .chain(self.groups.audio.then_some(AUDIO_SIGNAL_NAMES.len()))
            .chain(self.groups.video.then_some(VIDEO_SIGNAL_NAMES.len()));
        for (b, cols) in blocks.iter().zip(expected) {
            if b.rows() != t_len || b.cols() != cols {
                return Err(Error::Shape(format!(
                    "reliability block is {}x{}, expected {t_len}x{cols}",
                    b.rows(),
                    b.cols()
                )));
            }
        }
        if blocks.is_empty() {
            return Ok(Matrix::zeros(t_len, 0));
        }
        Ok(Matrix::hstack(&blocks)?)
    }

    /// Extracts the named column from an assembled matrix.
    pub fn column(&self, assembled: &Matrix, name: &str) -> Result<Vec<f64>> {
        let c = self
            .index_of(name)
            .ok_or_else(|| Error::InvalidInput(format!("no reliability entry named `{name}`")))?;
        if assembled.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, layout {}",
                assembled.cols(),
                self.dim()
            )));
        }
        Ok(assembled.iter_rows().map(|r| r[c]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(t: usize, seed: f64) -> (Vec<StreamMeasures>, Matrix, Matrix) {
        let model = StreamId::ALL
            .iter()
            .enumerate()
            .map(|(i, &stream)| StreamMeasures {
                stream,
                values: Matrix::from_fn(t, 6, |r, c| seed + (i * 100 + r * 10 + c) as f64),
                divergence_too_short: false,
            })
            .collect();
        let audio = Matrix::from_fn(t, 14, |r, c| seed + 1000.0 + (r * 20 + c) as f64);
        let video = Matrix::from_fn(t, 9, |r, c| seed + 2000.0 + (r * 20 + c) as f64);
        (model, audio, video)
    }

    #[test]
    fn full_layout_has_41_entries() {
        let l = ReliabilityLayout::full();
        assert_eq!(l.dim(), 41);
        assert_eq!(l.names()[0], "A.entropy");
        assert_eq!(l.names()[17], "VS.dispersion_ratio");
        assert_eq!(l.names()[40], "rotation");
    }

    #[test]
    fn zero_constituents_give_zero_vector() {
        let (mut model, _, _) = parts(3, 0.0);
        model.iter_mut().for_each(|m| m.values = Matrix::zeros(3, 6));
        let (a, v) = (Matrix::zeros(3, 14), Matrix::zeros(3, 9));
        let out = ReliabilityLayout::full()
            .assemble(&ReliabilityParts {
                model: &model,
                audio: &a,
                video: &v,
            })
            .unwrap();
        assert_eq!(out, Matrix::zeros(3, 41));
    }

    #[test]
    fn slicing_by_name_recovers_constituents() {
        let (model, audio, video) = parts(4, 0.5);
        let l = ReliabilityLayout::full();
        let out = l
            .assemble(&ReliabilityParts {
                model: &model,
                audio: &audio,
                video: &video,
            })
            .unwrap();
        for (m, s) in model.iter().zip(StreamId::ALL) {
            for (c, name) in MEASURE_NAMES.iter().enumerate() {
                let col = l.column(&out, &format!("{s}.{name}")).unwrap();
                assert_eq!(col, m.values.iter_rows().map(|r| r[c]).collect::<Vec<_>>());
            }
        }
        for (c, name) in AUDIO_SIGNAL_NAMES.iter().enumerate() {
            assert_eq!(
                l.column(&out, name).unwrap(),
                audio.iter_rows().map(|r| r[c]).collect::<Vec<_>>()
            );
        }
        for (c, name) in VIDEO_SIGNAL_NAMES.iter().enumerate() {
            assert_eq!(
                l.column(&out, name).unwrap(),
                video.iter_rows().map(|r| r[c]).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn subsets_and_mismatches() {
        let (model, audio, video) = parts(4, 0.0);
        let l = ReliabilityLayout::new(ReliabilityGroups {
            model: true,
            audio: false,
            video: true,
        });
        assert_eq!(l.dim(), 27);
        let out = l
            .assemble(&ReliabilityParts {
                model: &model,
                audio: &audio,
                video: &video,
            })
            .unwrap();
        assert_eq!(out.cols(), 27);
        let short = Matrix::zeros(3, 9);
        assert!(ReliabilityLayout::full()
            .assemble(&ReliabilityParts {
                model: &model,
                audio: &audio,
                video: &short
            })
            .is_err());
    }
}
