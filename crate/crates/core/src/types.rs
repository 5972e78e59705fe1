//! Domain types shared across the toolkit.
//!
//! All probability math is `f64` and every logarithm is natural.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use avfusion_nn::Matrix;

use crate::error::{Error, Result};

/// Floor applied to posteriors before any logarithm is taken.
pub const POSTERIOR_FLOOR: f64 = 1e-8;

/// Audio frame shift in seconds (10 ms).
pub const AUDIO_FRAME_SHIFT: f64 = 0.01;

/// Video frame period in seconds (25 fps).
pub const VIDEO_FRAME_SHIFT: f64 = 0.04;

/// The three information streams: audio, video appearance, video shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StreamId {
    A,
    VA,
    VS,
}

impl StreamId {
    pub const ALL: [StreamId; 3] = [StreamId::A, StreamId::VA, StreamId::VS];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            StreamId::A => 0,
            StreamId::VA => 1,
            StreamId::VS => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamId::A => "A",
            StreamId::VA => "VA",
            StreamId::VS => "VS",
        }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The tied HMM state inventory shared by every stream of a world.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a state space needs at least 2 states, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate state label `{dup}`")));
        }
        Ok(Self { labels })
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl TryFrom<Vec<String>> for StateSpace {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StateSpace> for Vec<String> {
    fn from(s: StateSpace) -> Self {
        s.labels
    }
}

/// Per-frame state posteriors of one stream: a row-stochastic `T x S` matrix
/// with strictly positive entries.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSequence {
    stream: StreamId,
    frames: Matrix,
    frame_shift: f64,
}

/// Scales each row of `raw` to sum to 1, floors every entry at `floor` and
/// rescales again.
///
/// After the second rescaling the smallest entry is `floor / (1 + k * floor)` for `k`
/// floored entries, so the floor holds to within a factor `1 + S * floor`.
pub fn normalize_posteriors(raw: &Matrix, floor: f64) -> Result<Matrix> {
    let mut out = raw.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        if row.iter().any(|v| *v < 0.0 || v.is_nan()) {
            return Err(Error::InvalidInput(format!("row {r} has a negative or NaN entry")));
        }
        if !row.iter().any(|v| *v > 0.0) {
            return Err(Error::ZeroRow { row: r });
        }
        let raw_sum: f64 = row.iter().sum();
        if !raw_sum.is_finite() {
            return Err(Error::InvalidInput(format!("row {r} does not have a finite sum")));
        }
        if raw_sum != 1.0 {
            row.iter_mut().for_each(|v| *v /= raw_sum);
        }
        row.iter_mut().for_each(|v| *v = v.max(floor));
        let sum: f64 = row.iter().sum();
        if sum != 1.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Ok(out)
}

impl PosteriorSequence {
    /// Normalises `raw` with [`POSTERIOR_FLOOR`].
    pub fn from_raw(stream: StreamId, raw: &Matrix, frame_shift: f64) -> Result<Self> {
        let frames = normalize_posteriors(raw, POSTERIOR_FLOOR)?;
        Self::new(stream, frames, frame_shift)
    }

    /// Wraps an already normalised matrix after checking it.
    pub fn new(stream: StreamId, frames: Matrix, frame_shift: f64) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::InvalidInput("posterior sequence has no frames".into()));
        }
        if frames.cols() < 2 {
            return Err(Error::InvalidInput("posterior sequence needs at least 2 states".into()));
        }
        for (t, row) in frames.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "frame {t} is not a floored distribution (sum {sum})"
                )));
            }
        }
        Ok(Self {
            stream,
            frames,
            frame_shift,
        })
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn num_states(&self) -> usize {
        self.frames.cols()
    }

    /// Element-wise natural log.
    pub fn log(&self) -> Matrix {
        self.frames.map(f64::ln)
    }
}

/// Fused per-frame log-scores handed to the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedLogPosterior {
    frames: Matrix,
}

impl FusedLogPosterior {
    pub fn new(frames: Matrix) -> Result<Self> {
        if !frames.all_finite() {
            return Err(Error::InvalidInput(
                "fused log-posterior contains non-finite values".into(),
            ));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn into_matrix(self) -> Matrix {
        self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn num_states(&self) -> usize {
        self.frames.cols()
    }
}

/// Per-frame stream weights, `T x M`.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamWeights {
    weights: Matrix,
}

impl StreamWeights {
    pub fn new(weights: Matrix) -> Result<Self> {
        if weights.cols() != StreamId::COUNT {
            return Err(Error::Shape(format!(
                "stream weights need {} columns, got {}",
                StreamId::COUNT,
                weights.cols()
            )));
        }
        if !weights.all_finite() {
            return Err(Error::InvalidInput("stream weights contain non-finite values".into()));
        }
        Ok(Self { weights })
    }

    /// Like [`StreamWeights::new`] but also requires every row to lie on the
    /// probability simplex within `1e-9`.
    pub fn on_simplex(weights: Matrix) -> Result<Self> {
        let w = Self::new(weights)?;
        if let Some(t) = (0..w.weights.rows()).find(|&t| !is_on_simplex(w.weights.row(t), 1e-9)) {
            return Err(Error::InvalidInput(format!(
                "weights at frame {t} are not on the simplex"
            )));
        }
        Ok(w)
    }

    pub fn constant(frames: usize, lambda: &[f64]) -> Result<Self> {
        if lambda.len() != StreamId::COUNT {
            return Err(Error::Shape(format!(
                "expected {} weights, got {}",
                StreamId::COUNT,
                lambda.len()
            )));
        }
        Self::new(Matrix::from_fn(frames, lambda.len(), |_, c| lambda[c]))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn num_frames(&self) -> usize {
        self.weights.rows()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.weights.row(t)
    }
}

pub fn is_on_simplex(w: &[f64], tol: f64) -> bool {
    w.iter().all(|v| *v >= -tol) && (w.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Ground-truth state index per frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentTarget {
    states: Vec<usize>,
}

impl AlignmentTarget {
    pub fn new(states: Vec<usize>, num_states: usize) -> Result<Self> {
        if let Some((t, s)) = states.iter().enumerate().find(|(_, s)| **s >= num_states) {
            return Err(Error::InvalidInput(format!(
                "alignment state {s} at frame {t} is outside 0..{num_states}"
            )));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn one_hot(&self, num_states: usize) -> Matrix {
        let mut m = Matrix::zeros(self.states.len(), num_states);
        for (t, &s) in self.states.iter().enumerate() {
            m.set(t, s, 1.0);
        }
        m
    }

    /// Stores the alignment as a `T x 1` matrix of state indices.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.states.len(), 1, |r, _| self.states[r] as f64)
    }

    pub fn from_matrix(m: &Matrix, num_states: usize) -> Result<Self> {
        if m.cols() != 1 {
            return Err(Error::Shape(format!(
                "alignment matrix must have 1 column, got {}",
                m.cols()
            )));
        }
        let states = m
            .as_slice()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v < num_states as f64 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidInput(format!(
                        "{v} is not a state index below {num_states}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { states })
    }
}
