//! Feature concatenation and weighted log-linear posterior combination.

use crate::error::{Error, Result};
use crate::types::{FusedLogPosterior, Matrix, StreamId, StreamWeights};

/// Per-stream feature dimensions of an early-integration vector, which is
/// ordered audio, shape, appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EarlyLayout {
    pub audio: usize,
    pub shape: usize,
    pub appearance: usize,
}

impl EarlyLayout {
    pub fn dim(&self) -> usize {
        self.audio + self.shape + self.appearance
    }

    /// Splits a concatenated sequence back into (audio, appearance, shape).
    pub fn split(&self, joint: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
        if joint.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "joint features have {} columns, layout {}",
                joint.cols(),
                self.dim()
            )));
        }
        let a = joint.column_block(0, self.audio)?;
        let vs = joint.column_block(self.audio, self.shape)?;
        let va = joint.column_block(self.audio + self.shape, self.appearance)?;
        Ok((a, va, vs))
    }
}

/// Frame-wise concatenation `[audio; shape; appearance]` of rate-aligned features.
pub fn early_integration(audio: &Matrix, appearance: &Matrix, shape: &Matrix) -> Result<(Matrix, EarlyLayout)> {
    if audio.rows() != appearance.rows() || audio.rows() != shape.rows() {
        return Err(Error::Shape(format!(
            "streams are not rate-aligned: {} / {} / {} frames",
            audio.rows(),
            appearance.rows(),
            shape.rows()
        )));
    }
    let layout = EarlyLayout {
        audio: audio.cols(),
        shape: shape.cols(),
        appearance: appearance.cols(),
    };
    Ok((Matrix::hstack(&[audio, shape, appearance])?, layout))
}

fn check_streams(logs: &[Matrix]) -> Result<(usize, usize)> {
    if logs.len() != StreamId::COUNT {
        return Err(Error::Shape(format!(
            "expected {} streams, got {}",
            StreamId::COUNT,
            logs.len()
        )));
    }
    let shape = logs[0].shape();
    if logs.iter().any(|l| l.shape() != shape) {
        return Err(Error::Shape("stream log-posteriors differ in shape".into()));
    }
    Ok(shape)
}

/// `sum_i lambda_i log p_i` with one weight vector for every frame.
pub fn static_fuse(logs: &[Matrix], lambda: &[f64]) -> Result<FusedLogPosterior> {
    let (t, _) = check_streams(logs)?;
    dynamic_fuse(logs, &StreamWeights::constant(t, lambda)?)
}

/// `sum_i lambda_{t,i} log p_i` with per-frame weights.
pub fn dynamic_fuse(logs: &[Matrix], weights: &StreamWeights) -> Result<FusedLogPosterior> {
    let (t_len, s) = check_streams(logs)?;
    if weights.num_frames() != t_len {
        return Err(Error::Shape(format!(
            "{} weight frames for {t_len} posterior frames",
            weights.num_frames()
        )));
    }
    let mut out = Matrix::zeros(t_len, s);
    for t in 0..t_len {
        let w = weights.frame(t);
        let row = out.row_mut(t);
        for (i, l) in logs.iter().enumerate() {
            if w[i] == 0.0 {
                continue;
            }
            for (o, v) in row.iter_mut().zip(l.row(t)) {
                *o += w[i] * v;
            }
        }
    }
    FusedLogPosterior::new(out)
}
