//! Frame-level audio analysis at 16 kHz: MFCCs, frame SNR and NCCF pitch.
//!
//! Frame `t` owns the 160 samples starting at `160 t` (10 ms shift). Spectral
//! analysis uses a 400-sample (25 ms) window centred on that block, zero
//! padded at the signal edges, so a signal of `n` samples has `n / 160`
//! frames.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::types::Matrix;

pub const SAMPLE_RATE: f64 = 16_000.0;
pub const FRAME_SHIFT: usize = 160;
pub const FRAME_LEN: usize = 400;
pub const FFT_LEN: usize = 512;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const NUM_MELS: usize = 23;
pub const NUM_CEPS: usize = 5;
/// Floor applied to filterbank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
/// Frame SNR values are clamped to `[-SNR_CAP_DB, SNR_CAP_DB]`.
pub const SNR_CAP_DB: f64 = 40.0;

pub fn num_frames(samples: usize) -> usize {
    samples / FRAME_SHIFT
}

/// First sample of the analysis window of frame `t` (may be negative).
fn window_start(t: usize) -> isize {
    (t * FRAME_SHIFT + FRAME_SHIFT / 2) as isize - (FRAME_LEN / 2) as isize
}

fn sample(x: &[f64], i: isize) -> f64 {
    if i < 0 {
        0.0
    } else {
        x.get(i as usize).copied().unwrap_or(0.0)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale over `[lo, hi]` Hz,
/// one row per filter over the `FFT_LEN / 2 + 1` bins.
pub fn mel_filterbank(n_mels: usize, lo: f64, hi: f64) -> Matrix {
    let bins = FFT_LEN / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(lo), hz_to_mel(hi));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    Matrix::from_fn(n_mels, bins, |m, k| {
        let f = k as f64 * SAMPLE_RATE / FFT_LEN as f64;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        }
    })
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Matrix {
    let n = n_in as f64;
    Matrix::from_fn(n_out, n_in, |k, i| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos()
    })
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable spectral front end.
pub struct AudioAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    mel: Matrix,
    dct: Matrix,
}

impl Default for AudioAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl AudioAnalyzer {
    pub fn new() -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(FFT_LEN),
            window: hann(FRAME_LEN),
            mel: mel_filterbank(NUM_MELS, 0.0, SAMPLE_RATE / 2.0),
            dct: dct_matrix(NUM_CEPS, NUM_MELS),
        }
    }

    /// Power spectrum `|X_k|^2`, `k = 0..=256`, of every Hann-windowed frame.
    pub fn power_spectra(&self, x: &[f64]) -> Matrix {
        let t_len = num_frames(x.len());
        let bins = FFT_LEN / 2 + 1;
        let mut out = Matrix::zeros(t_len, bins);
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        for t in 0..t_len {
            let s0 = window_start(t);
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < FRAME_LEN {
                    Complex::new(sample(x, s0 + i as isize) * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (o, b) in out.row_mut(t).iter_mut().zip(&buf) {
                *o = b.norm_sqr();
            }
        }
        out
    }

    /// Log mel filterbank energies of the pre-emphasised magnitude spectrum.
    pub fn log_mel(&self, x: &[f64]) -> Result<Matrix> {
        if num_frames(x.len()) == 0 {
            return Err(Error::InvalidInput(format!(
                "signal of {} samples is shorter than one frame",
                x.len()
            )));
        }
        let emph: Vec<f64> = (0..x.len())
            .map(|i| x[i] - if i > 0 { PRE_EMPHASIS * x[i - 1] } else { 0.0 })
            .collect();
        let mag = self.power_spectra(&emph).map(f64::sqrt);
        let mut out = Matrix::zeros(mag.rows(), NUM_MELS);
        for t in 0..mag.rows() {
            for m in 0..NUM_MELS {
                let e: f64 = self.mel.row(m).iter().zip(mag.row(t)).map(|(w, v)| w * v).sum();
                out.set(t, m, e.max(LOG_FLOOR).ln());
            }
        }
        Ok(out)
    }

    /// First five cepstral coefficients per frame.
    pub fn mfcc(&self, x: &[f64]) -> Result<Matrix> {
        let logmel = self.log_mel(x)?;
        Ok(Matrix::from_fn(logmel.rows(), NUM_CEPS, |t, k| {
            self.dct.row(k).iter().zip(logmel.row(t)).map(|(a, b)| a * b).sum()
        }))
    }

    pub fn mel(&self) -> &Matrix {
        &self.mel
    }
}

pub fn mfcc_frames(x: &[f64]) -> Result<Matrix> {
    AudioAnalyzer::new().mfcc(x)
}

/// Regression deltas over `±window` frames, replicating edge frames.
pub fn delta(features: &Matrix, window: usize) -> Matrix {
    let t_len = features.rows();
    if t_len == 0 || window == 0 {
        return Matrix::zeros(t_len, features.cols());
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize| features.row(t.clamp(0, t_len as isize - 1) as usize);
    Matrix::from_fn(t_len, features.cols(), |t, d| {
        (1..=window)
            .map(|n| {
                let n = n as isize;
                n as f64 * (at(t as isize + n)[d] - at(t as isize - n)[d])
            })
            .sum::<f64>()
            / denom
    })
}

fn to_db(signal: f64, noise: f64) -> f64 {
    if noise <= 0.0 {
        return SNR_CAP_DB;
    }
    if signal <= 0.0 {
        return -SNR_CAP_DB;
    }
    (10.0 * (signal / noise).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}

/// Energy of each frame's own 160-sample block.
pub fn block_energies(x: &[f64]) -> Vec<f64> {
    x.chunks_exact(FRAME_SHIFT)
        .map(|b| b.iter().map(|v| v * v).sum())
        .collect()
}

/// Exact frame SNR `10 log10(S_t / N_t)` from the separately stored clean
/// signal and additive noise, clamped to ±40 dB (a noise-free frame is +40).
pub fn frame_snr_oracle(clean: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if clean.len() != noise.len() {
        return Err(Error::Shape(format!(
            "clean signal has {} samples, noise {}",
            clean.len(),
            noise.len()
        )));
    }
    Ok(block_energies(clean)
        .into_iter()
        .zip(block_energies(noise))
        .map(|(s, n)| to_db(s, n))
        .collect())
}

/// Settings of the decision-directed frame SNR estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrEstimator {
    /// Smoothing factor of the a-priori SNR recursion.
    pub alpha: f64,
    /// Band, in Hz, assumed to contain noise only.
    pub noise_band: (f64, f64),
}

impl Default for SnrEstimator {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            noise_band: (5_000.0, 7_500.0),
        }
    }
}

impl SnrEstimator {
    /// Estimates the frame SNR of a noisy signal without access to its
    /// components. The noise level is the median over frames of the mean
    /// power in `noise_band`, extrapolated to the full band under a white
    /// noise assumption; the a-priori SNR then follows the decision-directed
    /// recursion `xi_t = alpha * G_{t-1}^2 gamma_{t-1} + (1 - alpha) max(gamma_t - 1, 0)`
    /// with Wiener gain `G = xi / (1 + xi)`. Only meaningful for stationary,
    /// spectrally flat noise.
    pub fn estimate(&self, analyzer: &AudioAnalyzer, noisy: &[f64]) -> Result<Vec<f64>> {
        let spec = analyzer.power_spectra(noisy);
        if spec.rows() == 0 {
            return Err(Error::InvalidInput("signal shorter than one frame".into()));
        }
        let bin_hz = SAMPLE_RATE / FFT_LEN as f64;
        let (lo, hi) = (
            (self.noise_band.0 / bin_hz).ceil() as usize,
            (self.noise_band.1 / bin_hz).floor() as usize,
        );
        let mut band: Vec<f64> = spec
            .iter_rows()
            .map(|r| r[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64)
            .collect();
        band.sort_by(f64::total_cmp);
        let noise_bin = band[band.len() / 2];
        let bins = spec.cols();
        let mut prev_clean = 0.0;
        let mut out = Vec::with_capacity(spec.rows());
        for row in spec.iter_rows() {
            let total: f64 = row.iter().sum();
            let noise = noise_bin * bins as f64;
            if noise <= 0.0 {
                out.push(if total > 0.0 { SNR_CAP_DB } else { -SNR_CAP_DB });
                continue;
            }
            let gamma = total / noise;
            let xi = self.alpha * prev_clean + (1.0 - self.alpha) * (gamma - 1.0).max(0.0);
            let gain = xi / (1.0 + xi);
            prev_clean = gain * gain * gamma;
            out.push(if xi > 0.0 {
                (10.0 * xi.log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
            } else {
                -SNR_CAP_DB
            });
        }
        Ok(out)
    }
}

pub const MIN_F0: f64 = 50.0;
pub const MAX_F0: f64 = 500.0;
/// Voicing below this level reports `f0 = 0`.
pub const VOICING_THRESHOLD: f64 = 0.5;

/// Per-frame pitch track.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchTrack {
    pub f0: Vec<f64>,
    pub voicing: Vec<f64>,
}

/// Normalised cross-correlation pitch tracker.
pub struct PitchTracker {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    n: usize,
    min_lag: usize,
    max_lag: usize,
}

impl Default for PitchTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl PitchTracker {
    pub fn new() -> Self {
        let min_lag = (SAMPLE_RATE / MAX_F0).floor() as usize;
        let max_lag = (SAMPLE_RATE / MIN_F0).ceil() as usize;
        let n = (FRAME_LEN + max_lag + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            n,
            min_lag,
            max_lag,
        }
    }

    /// NCCF of frame `t` for lags `0..=max_lag`: correlation of the 400
    /// samples of the analysis window with the same-length segment `lag`
    /// samples later, normalised by both segment energies. Samples past the
    /// signal end count as zero.
    pub fn nccf(&self, x: &[f64], t: usize) -> Vec<f64> {
        let s0 = window_start(t);
        let span = FRAME_LEN + self.max_lag;
        let seg: Vec<f64> = (0..span).map(|i| sample(x, s0 + i as isize)).collect();
        let mut a = vec![Complex::new(0.0, 0.0); self.n];
        let mut b = vec![Complex::new(0.0, 0.0); self.n];
        for i in 0..FRAME_LEN {
            a[i].re = seg[i];
        }
        for (i, v) in seg.iter().enumerate() {
            b[i].re = *v;
        }
        self.fft.process(&mut a);
        self.fft.process(&mut b);
        for (p, q) in a.iter_mut().zip(&b) {
            *p = p.conj() * q;
        }
        self.ifft.process(&mut a);
        let scale = 1.0 / self.n as f64;
        let mut cum = vec![0.0; span + 1];
        for i in 0..span {
            cum[i + 1] = cum[i] + seg[i] * seg[i];
        }
        let e0 = cum[FRAME_LEN];
        (0..=self.max_lag)
            .map(|lag| {
                let el = cum[lag + FRAME_LEN] - cum[lag];
                let denom = (e0 * el).sqrt();
                if denom > 1e-12 {
                    (a[lag].re * scale / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Picks, per frame, the first local NCCF maximum within 5% of the global
    /// maximum over lags 32..=320 (50-500 Hz), refines it by parabolic
    /// interpolation and maps it to `f0 = 16000 / lag`. Voicing is the NCCF
    /// peak clamped to `[0, 1]`; frames with voicing below 0.5 report `f0 = 0`.
    pub fn track(&self, x: &[f64]) -> PitchTrack {
        let t_len = num_frames(x.len());
        let mut f0 = Vec::with_capacity(t_len);
        let mut voicing = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let r = self.nccf(x, t);
            let range = self.min_lag..=self.max_lag;
            let peak = range.clone().map(|l| r[l]).fold(f64::NEG_INFINITY, f64::max);
            let v = peak.clamp(0.0, 1.0);
            voicing.push(v);
            if v < VOICING_THRESHOLD {
                f0.push(0.0);
                continue;
            }
            let lag = range
                .clone()
                .find(|&l| r[l] >= 0.95 * peak && r[l] >= r[l - 1] && (l == self.max_lag || r[l] >= r[l + 1]))
                .unwrap_or(self.min_lag);
            let mut refined = lag as f64;
            if lag > self.min_lag && lag < self.max_lag {
                let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
                let den = a - 2.0 * b + c;
                if den < 0.0 {
                    refined += (0.5 * (a - c) / den).clamp(-0.5, 0.5);
                }
            }
            f0.push((SAMPLE_RATE / refined).clamp(MIN_F0, MAX_F0));
        }
        PitchTrack { f0, voicing }
    }
}

pub fn pitch_nccf(x: &[f64]) -> PitchTrack {
    PitchTracker::new().track(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE).sin())
            .collect()
    }

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn silence_gives_constant_cepstra() {
        let m = mfcc_frames(&vec![0.0; 1600]).unwrap();
        assert_eq!(m.rows(), 10);
        let c0 = NUM_MELS as f64 * LOG_FLOOR.ln() / (NUM_MELS as f64).sqrt();
        for row in m.iter_rows() {
            assert!((row[0] - c0).abs() < 1e-9);
            assert!(row[1..].iter().all(|v| v.abs() < 1e-9));
        }
        assert!(mfcc_frames(&[]).is_err());
    }

    #[test]
    fn tone_energy_sits_in_covering_filter() {
        let an = AudioAnalyzer::new();
        let x = tone(1000.0, 3200);
        let logmel = an.log_mel(&x).unwrap();
        let t = 10;
        let best = (0..NUM_MELS)
            .max_by(|&a, &b| logmel.get(t, a).total_cmp(&logmel.get(t, b)))
            .unwrap();
        // Direct evaluation of the filter responses at the tone bin.
        let bin = (1000.0 / (SAMPLE_RATE / FFT_LEN as f64)).round() as usize;
        let covering = (0..NUM_MELS)
            .max_by(|&a, &b| an.mel().get(a, bin).total_cmp(&an.mel().get(b, bin)))
            .unwrap();
        assert_eq!(best, covering);
        let loud = an.mfcc(&x).unwrap();
        let quiet = an.mfcc(&vec![0.0; 3200]).unwrap();
        assert!(loud.get(t, 0) > quiet.get(t, 0));
    }

    #[test]
    fn shift_by_one_hop_shifts_frames() {
        let x = white(4000, 1);
        let mut shifted = vec![0.0; FRAME_SHIFT];
        shifted.extend_from_slice(&x);
        let a = mfcc_frames(&x).unwrap();
        let b = mfcc_frames(&shifted).unwrap();
        for t in 3..a.rows() - 3 {
            for k in 0..NUM_CEPS {
                assert!((a.get(t, k) - b.get(t + 1, k)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn delta_cases() {
        let constant = Matrix::filled(6, 2, 3.5);
        assert!(delta(&constant, 2).as_slice().iter().all(|v| *v == 0.0));
        let ramp = Matrix::from_fn(9, 1, |t, _| 0.7 * t as f64 + 1.0);
        let d = delta(&ramp, 2);
        for t in 2..7 {
            assert!((d.get(t, 0) - 0.7).abs() < 1e-12);
        }
        // Least-squares slope through the five replicated neighbours.
        let x = Matrix::from_rows(&[[0.3], [-1.2], [2.5], [0.9], [-0.4]]).unwrap();
        let d = delta(&x, 2);
        for t in 0..5i64 {
            let pts: Vec<(f64, f64)> = (-2..=2i64)
                .map(|n| (n as f64, x.get((t + n).clamp(0, 4) as usize, 0)))
                .collect();
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / 5.0;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / 5.0;
            let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
                / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
            assert!((d.get(t as usize, 0) - slope).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_snr_formula() {
        let s = vec![1.0; 320];
        let n: Vec<f64> = (0..320).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(frame_snr_oracle(&s, &n).unwrap(), vec![0.0, 0.0]);
        let s10: Vec<f64> = s.iter().map(|v| v * 10f64.sqrt()).collect();
        for v in frame_snr_oracle(&s10, &n).unwrap() {
            assert!((v - 10.0).abs() < 1e-12);
        }
        assert_eq!(frame_snr_oracle(&s, &[0.0; 320]).unwrap(), vec![40.0, 40.0]);
        assert!(frame_snr_oracle(&s, &n[..160]).is_err());
    }

    #[test]
    fn sawtooth_pitch() {
        let x: Vec<f64> = (0..8000).map(|i| (i % 160) as f64 / 160.0 - 0.5).collect();
        let p = pitch_nccf(&x);
        for t in 3..p.f0.len() - 3 {
            assert!((p.f0[t] - 100.0).abs() <= 1.0, "frame {t}: {}", p.f0[t]);
            assert!(p.voicing[t] > 0.9);
        }
    }

    #[test]
    fn noise_and_silence_are_unvoiced() {
        let p = pitch_nccf(&white(16000, 3));
        let unvoiced = p.voicing.iter().filter(|v| **v < 0.5).count();
        assert!(unvoiced as f64 >= 0.9 * p.voicing.len() as f64);
        let s = pitch_nccf(&vec![0.0; 1600]);
        assert!(s.voicing.iter().all(|v| *v == 0.0));
        assert!(s.f0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nccf_matches_direct_sum() {
        let x = white(2000, 5);
        let tracker = PitchTracker::new();
        let r = tracker.nccf(&x, 4);
        let s0 = window_start(4);
        for lag in [0usize, 40, 123, 320] {
            let mut num = 0.0;
            let (mut e0, mut el) = (0.0, 0.0);
            for i in 0..FRAME_LEN as isize {
                let a = sample(&x, s0 + i);
                let b = sample(&x, s0 + i + lag as isize);
                num += a * b;
                e0 += a * a;
                el += b * b;
            }
            assert!((r[lag] - num / (e0 * el).sqrt()).abs() < 1e-9);
        }
    }
}
