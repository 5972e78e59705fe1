//! Harmonic state sources, additive noise and log band-energy features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::audio::{mel_filterbank, AudioAnalyzer, FRAME_SHIFT, LOG_FLOOR, SAMPLE_RATE};
use crate::synth::config::AudioConfig;
use crate::types::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub center: f64,
    pub bandwidth: f64,
}

/// Source of one HMM state: a harmonic series on `f0` shaped by formants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioStateSpec {
    pub f0: f64,
    /// Target RMS of the harmonic part.
    pub rms: f64,
    pub formants: Vec<Formant>,
    /// Amplitude of harmonic `h + 1`.
    pub gains: Vec<f64>,
}

impl AudioStateSpec {
    pub fn new(f0: f64, rms: f64, formants: Vec<Formant>, max_harmonic_hz: f64) -> Self {
        let count = ((max_harmonic_hz / f0).floor() as usize).max(1);
        let env = |f: f64| {
            0.1 + formants
                .iter()
                .map(|m| (-0.5 * ((f - m.center) / m.bandwidth).powi(2)).exp())
                .sum::<f64>()
        };
        let raw: Vec<f64> = (1..=count).map(|h| env(h as f64 * f0)).collect();
        let power: f64 = raw.iter().map(|g| g * g / 2.0).sum();
        let scale = rms / power.sqrt();
        Self {
            f0,
            rms,
            formants,
            gains: raw.into_iter().map(|g| g * scale).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    /// Low-passed noise with slow random amplitude modulation.
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 2] = [NoiseKind::White, NoiseKind::Babble];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Babble => "babble",
        }
    }
}

/// Renders one audio frame (`FRAME_SHIFT` samples) per entry of `states`.
/// Harmonic phases run continuously across frames.
pub fn synthesize<R: Rng>(specs: &[AudioStateSpec], states: &[usize], cfg: &AudioConfig, rng: &mut R) -> Vec<f64> {
    let harmonics = specs.iter().map(|s| s.gains.len()).max().unwrap_or(0);
    let mut phase: Vec<f64> = (0..harmonics)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut out = Vec::with_capacity(states.len() * FRAME_SHIFT);
    for &s in states {
        let spec = &specs[s];
        let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.amplitude_jitter;
        let gain = jitter.exp();
        let noise_sd = cfg.excitation_noise * spec.rms;
        let step: Vec<f64> = (1..=harmonics)
            .map(|h| std::f64::consts::TAU * h as f64 * spec.f0 / SAMPLE_RATE)
            .collect();
        for _ in 0..FRAME_SHIFT {
            let mut v = 0.0;
            for (h, g) in spec.gains.iter().enumerate() {
                v += g * phase[h].sin();
            }
            for (p, d) in phase.iter_mut().zip(&step) {
                *p = (*p + d) % std::f64::consts::TAU;
            }
            let e: f64 = rng.sample(StandardNormal);
            out.push(gain * v + noise_sd * e);
        }
    }
    out
}

/// `n` samples of zero-mean noise with unit mean power.
pub fn generate_noise<R: Rng>(kind: NoiseKind, n: usize, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if kind == NoiseKind::Babble {
        let mut y = 0.0;
        for v in x.iter_mut() {
            y = 0.85 * y + *v;
            *v = y;
        }
        let f1 = rng.gen_range(2.0..6.0);
        let f2 = rng.gen_range(0.5..2.0);
        let (p1, p2) = (
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
        );
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / SAMPLE_RATE;
            let m = 1.0
                + 0.6 * (std::f64::consts::TAU * f1 * t + p1).sin()
                + 0.3 * (std::f64::consts::TAU * f2 * t + p2).sin();
            *v *= m.max(0.05);
        }
    }
    let power = x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    if power > 0.0 {
        let s = power.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
    }
    x
}

/// Mean power of a signal, erroring on silence.
pub fn signal_power(x: &[f64]) -> Result<f64> {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if p > 0.0 {
        Ok(p)
    } else {
        Err(Error::InvalidInput("signal has zero energy".into()))
    }
}

/// Triangular band energies of the Hann-windowed power spectrum.
pub struct BandAnalyzer {
    analyzer: AudioAnalyzer,
    filters: Matrix,
}

impl BandAnalyzer {
    pub fn new(cfg: &AudioConfig) -> Self {
        Self {
            analyzer: AudioAnalyzer::new(),
            filters: mel_filterbank(cfg.bands, cfg.band_range.0, cfg.band_range.1),
        }
    }

    /// Linear band powers, `T x bands`.
    pub fn band_powers(&self, x: &[f64]) -> Matrix {
        let spec = self.analyzer.power_spectra(x);
        Matrix::from_fn(spec.rows(), self.filters.rows(), |t, b| {
            self.filters.row(b).iter().zip(spec.row(t)).map(|(w, p)| w * p).sum()
        })
    }

    pub fn log_bands(&self, x: &[f64]) -> Matrix {
        self.band_powers(x).map(|e| e.max(LOG_FLOOR).ln())
    }
}
