//! Model-based reliability measures computed from posterior rows.

use crate::error::{Error, Result};
use crate::types::{Matrix, PosteriorSequence, StreamId, POSTERIOR_FLOOR};

/// Number of top-ranked posteriors used by dispersion and posterior difference.
pub const DEFAULT_TOP_K: usize = 15;
/// Look-ahead of the temporal divergence, seconds.
pub const DIVERGENCE_LAG: f64 = 0.25;
/// Averaging segment length of the temporal divergence, seconds.
pub const DIVERGENCE_WINDOW: f64 = 0.05;
/// Value substituted for above-average entropies.
pub const ENTROPY_CLAMP: f64 = 10_000.0;
/// Value substituted for below-average dispersions.
pub const DISPERSION_CLAMP: f64 = 1.0 / 10_000.0;

/// Columns of the per-stream measure matrix returned by [`stream_measures`].
pub const MEASURE_NAMES: [&str; 6] = [
    "entropy",
    "dispersion",
    "posterior_difference",
    "temporal_divergence",
    "entropy_ratio",
    "dispersion_ratio",
];

fn floored_ln(p: f64) -> f64 {
    p.max(POSTERIOR_FLOOR).ln()
}

pub fn entropy(row: &[f64]) -> f64 {
    -row.iter()
        .map(|&p| if p > 0.0 { p * floored_ln(p) } else { 0.0 })
        .sum::<f64>()
}

/// The `k` largest entries in descending order, with `k` clamped to the row length.
fn top_k(row: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(k.min(row.len()));
    sorted
}

/// Mean pairwise log-ratio among the `k` largest posteriors.
pub fn dispersion(row: &[f64], k: usize) -> f64 {
    let top: Vec<f64> = top_k(row, k).into_iter().map(floored_ln).collect();
    let k = top.len();
    if k < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for l in 0..k {
        for m in l + 1..k {
            sum += top[l] - top[m];
        }
    }
    2.0 * sum / (k * (k - 1)) as f64
}

/// Mean log-ratio between the largest posterior and each of the next `k - 1`.
pub fn posterior_difference(row: &[f64], k: usize) -> f64 {
    let top: Vec<f64> = top_k(row, k).into_iter().map(floored_ln).collect();
    let k = top.len();
    if k < 2 {
        return 0.0;
    }
    top[1..].iter().map(|l| top[0] - l).sum::<f64>() / (k - 1) as f64
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a > 0.0 {
                a * (floored_ln(a) - floored_ln(b))
            } else {
                0.0
            }
        })
        .sum()
}

/// Output of [`temporal_divergence`].
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub values: Vec<f64>,
    /// Set when the sequence is no longer than the look-ahead, in which case
    /// every value is zero.
    pub too_short: bool,
}

/// KL divergence between each frame and the frame `lag` seconds later,
/// averaged over consecutive `window`-second segments. Frames whose partner
/// would fall past the end repeat the last computable divergence.
pub fn temporal_divergence(frames: &Matrix, frame_shift: f64, lag: f64, window: f64) -> Divergence {
    let t_len = frames.rows();
    let lag = (lag / frame_shift).round().max(1.0) as usize;
    let window = (window / frame_shift).round().max(1.0) as usize;
    if t_len <= lag {
        return Divergence {
            values: vec![0.0; t_len],
            too_short: true,
        };
    }
    let valid = t_len - lag;
    let mut raw: Vec<f64> = (0..valid)
        .map(|t| kl_divergence(frames.row(t), frames.row(t + lag)))
        .collect();
    let last = raw[valid - 1];
    raw.resize(t_len, last);
    let mut values = vec![0.0; t_len];
    for (seg, out) in raw.chunks(window).zip(values.chunks_mut(window)) {
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        out.iter_mut().for_each(|v| *v = mean);
    }
    Divergence {
        values,
        too_short: false,
    }
}

fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    v
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-stream share of entropy after clamping every above-average entropy to
/// [`ENTROPY_CLAMP`].
pub fn entropy_ratio(entropies: &[f64]) -> Vec<f64> {
    let m = mean(entropies);
    normalise(
        entropies
            .iter()
            .map(|&h| if h > m { ENTROPY_CLAMP } else { h })
            .collect(),
    )
}

/// Per-stream share of dispersion after clamping every below-average
/// dispersion to [`DISPERSION_CLAMP`].
pub fn dispersion_ratio(dispersions: &[f64]) -> Vec<f64> {
    let m = mean(dispersions);
    normalise(
        dispersions
            .iter()
            .map(|&d| if d < m { DISPERSION_CLAMP } else { d })
            .collect(),
    )
}

/// Measures of one stream, `T x 6`, columns as in [`MEASURE_NAMES`].
#[derive(Clone, Debug, PartialEq)]
pub struct StreamMeasures {
    pub stream: StreamId,
    pub values: Matrix,
    pub divergence_too_short: bool,
}

/// Computes all six measures for every stream. The streams must share `T`
/// and `S`; the ratio columns couple the streams frame by frame.
pub fn stream_measures(streams: &[PosteriorSequence], top_k: usize) -> Result<Vec<StreamMeasures>> {
    let first = streams
        .first()
        .ok_or_else(|| Error::InvalidInput("no streams given".into()))?;
    let (t_len, s) = (first.num_frames(), first.num_states());
    if let Some(bad) = streams.iter().find(|p| p.num_frames() != t_len || p.num_states() != s) {
        return Err(Error::Shape(format!(
            "stream {} is {}x{}, expected {t_len}x{s}",
            bad.stream(),
            bad.num_frames(),
            bad.num_states()
        )));
    }
    let mut out: Vec<StreamMeasures> = streams
        .iter()
        .map(|p| {
            let div = temporal_divergence(p.frames(), p.frame_shift(), DIVERGENCE_LAG, DIVERGENCE_WINDOW);
            let mut values = Matrix::zeros(t_len, MEASURE_NAMES.len());
            for (t, row) in p.frames().iter_rows().enumerate() {
                values.set(t, 0, entropy(row));
                values.set(t, 1, dispersion(row, top_k));
                values.set(t, 2, posterior_difference(row, top_k));
                values.set(t, 3, div.values[t]);
            }
            StreamMeasures {
                stream: p.stream(),
                values,
                divergence_too_short: div.too_short,
            }
        })
        .collect();
    for t in 0..t_len {
        let h: Vec<f64> = out.iter().map(|m| m.values.get(t, 0)).collect();
        let d: Vec<f64> = out.iter().map(|m| m.values.get(t, 1)).collect();
        for (i, (wh, wd)) in entropy_ratio(&h).into_iter().zip(dispersion_ratio(&d)).enumerate() {
            out[i].values.set(t, 4, wh);
            out[i].values.set(t, 5, wd);
        }
    }
    Ok(out)
}
