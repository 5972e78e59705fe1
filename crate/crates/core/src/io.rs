//! Waveform and video-frame files: 16-bit PCM WAV at 16 kHz and raw 8-bit
//! grayscale frames (32 x 32 bytes each, row-major, concatenated).

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::video::{GrayFrame, FRAME_SIZE};

pub const WAV_SAMPLE_RATE: u32 = 16_000;
pub const RAW_FRAME_BYTES: usize = FRAME_SIZE * FRAME_SIZE;

fn wav_spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: WAV_SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

/// Quantises to 16 bits, clipping to `[-1, 1]`; returns the number of
/// clipped samples.
pub fn encode_wav(samples: &[f64]) -> Result<(Vec<u8>, usize)> {
    let mut buf = Cursor::new(Vec::new());
    let mut clipped = 0;
    {
        let mut w = hound::WavWriter::new(&mut buf, wav_spec())?;
        for &x in samples {
            if !(-1.0..=1.0).contains(&x) {
                clipped += 1;
            }
            w.write_sample((x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
        }
        w.finalize()?;
    }
    Ok((buf.into_inner(), clipped))
}

/// Parses a mono 16-bit 16 kHz WAV into samples in `[-1, 1]` (`i16::MIN`
/// saturates at -1).
pub fn decode_wav(bytes: &[u8]) -> Result<Vec<f64>> {
    let reader = hound::WavReader::new(Cursor::new(bytes))?;
    let spec = reader.spec();
    if spec != wav_spec() {
        return Err(Error::InvalidInput(format!(
            "expected mono 16-bit PCM at {WAV_SAMPLE_RATE} Hz, got {} channel(s), {} bits, {} Hz",
            spec.channels, spec.bits_per_sample, spec.sample_rate
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| Ok((s? as f64 / i16::MAX as f64).max(-1.0)))
        .collect()
}

pub fn write_wav(path: &Path, samples: &[f64]) -> Result<usize> {
    let (bytes, clipped) = encode_wav(samples)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(clipped)
}

pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    decode_wav(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// One byte per pixel, `round(255 * clamp(p, 0, 1))`.
pub fn encode_raw_frames(frames: &[GrayFrame]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(frames.len() * RAW_FRAME_BYTES);
    for (i, f) in frames.iter().enumerate() {
        if f.width() != FRAME_SIZE || f.height() != FRAME_SIZE {
            return Err(Error::Shape(format!(
                "frame {i} is {}x{}, raw export needs {FRAME_SIZE}x{FRAME_SIZE}",
                f.width(),
                f.height()
            )));
        }
        out.extend(f.pixels().iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn decode_raw_frames(bytes: &[u8]) -> Result<Vec<GrayFrame>> {
    if bytes.len() % RAW_FRAME_BYTES != 0 {
        return Err(Error::Format {
            offset: bytes.len() - bytes.len() % RAW_FRAME_BYTES,
            reason: format!(
                "{} bytes is not a whole number of {RAW_FRAME_BYTES}-byte frames",
                bytes.len()
            ),
        });
    }
    bytes
        .chunks(RAW_FRAME_BYTES)
        .map(|c| GrayFrame::new(FRAME_SIZE, FRAME_SIZE, c.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect()
}

pub fn write_raw_frames(path: &Path, frames: &[GrayFrame]) -> Result<()> {
    std::fs::write(path, encode_raw_frames(frames)?).map_err(|e| Error::io(path, e))
}

pub fn read_raw_frames(path: &Path) -> Result<Vec<GrayFrame>> {
    decode_raw_frames(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
