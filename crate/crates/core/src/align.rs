//! Frame-rate alignment of 25 fps video features to the 100 fps audio grid.

use crate::error::{Error, Result};
use crate::types::Matrix;

/// Source (video) index for every target (audio) frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMap {
    sources: usize,
    map: Vec<usize>,
}

impl FrameMap {
    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn targets(&self) -> usize {
        self.map.len()
    }

    pub fn sources(&self) -> usize {
        self.sources
    }
}

/// Spreads `sources` indices over `targets` slots with an integer
/// line-drawing walk, so that slot `t` receives `floor(t * V / T)`.
pub fn bresenham_map(targets: usize, sources: usize) -> Result<FrameMap> {
    if sources == 0 || sources > targets {
        return Err(Error::InvalidInput(format!(
            "cannot map {sources} source frames onto {targets} target frames"
        )));
    }
    let mut map = Vec::with_capacity(targets);
    let (mut v, mut err) = (0usize, 0usize);
    for _ in 0..targets {
        map.push(v);
        err += sources;
        while err >= targets {
            err -= targets;
            v += 1;
        }
    }
    Ok(FrameMap { sources, map })
}

/// Repeats rows of the video-rate `features` onto the audio grid.
pub fn align_stream(features: &Matrix, map: &FrameMap) -> Result<Matrix> {
    if features.rows() != map.sources {
        return Err(Error::Shape(format!(
            "frame map expects {} source rows, got {}",
            map.sources,
            features.rows()
        )));
    }
    Ok(features.select_rows(&map.map))
}
