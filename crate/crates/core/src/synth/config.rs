use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a synthetic audio-visual world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub vocab_size: usize,
    pub states_per_word: usize,
    /// Total state count; must equal `vocab_size * states_per_word` when set.
    pub num_states: Option<usize>,
    /// Mean of the geometric state-duration distribution, in frames.
    pub mean_duration: f64,
    /// Dirichlet concentration of the bigram LM rows.
    pub lm_concentration: f64,
    /// Labelled clean utterances rendered to fit the observation models.
    pub calibration_utterances: usize,
    pub audio: AudioConfig,
    pub video: VideoConfig,
    pub distortion: DistortionConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            vocab_size: 10,
            states_per_word: 3,
            num_states: None,
            mean_duration: 5.0,
            lm_concentration: 5.0,
            calibration_utterances: 240,
            audio: AudioConfig::default(),
            video: VideoConfig::default(),
            distortion: DistortionConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    /// Nominal RMS of a full-amplitude state.
    pub base_rms: f64,
    /// Per-state amplitude factor range.
    pub amplitude: (f64, f64),
    /// Per-state fundamental frequency range, Hz.
    pub f0: (f64, f64),
    /// Highest harmonic frequency, Hz.
    pub max_harmonic_hz: f64,
    pub formants_per_state: usize,
    /// Formant centre frequency range, Hz.
    pub formant_hz: (f64, f64),
    /// Formant bandwidth range, Hz.
    pub formant_bw: (f64, f64),
    /// Excitation noise RMS relative to the state amplitude.
    pub excitation_noise: f64,
    /// Standard deviation of the per-frame log-amplitude jitter.
    pub amplitude_jitter: f64,
    /// Number of log band-energy features.
    pub bands: usize,
    pub band_range: (f64, f64),
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            base_rms: 0.1,
            amplitude: (0.5, 1.0),
            f0: (90.0, 250.0),
            max_harmonic_hz: 4000.0,
            formants_per_state: 2,
            formant_hz: (250.0, 3800.0),
            formant_bw: (300.0, 700.0),
            excitation_noise: 0.3,
            amplitude_jitter: 0.3,
            bands: 10,
            band_range: (100.0, 4000.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    /// Number of viseme classes; states of one class share a mouth shape.
    pub visemes: usize,
    /// Relative per-state perturbation of the class shape.
    pub state_jitter: f64,
    /// Standard deviation of additive pixel noise.
    pub pixel_noise: f64,
    /// Number of appearance (DCT) features.
    pub appearance_dims: usize,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            visemes: 6,
            state_jitter: 0.08,
            pixel_noise: 0.3,
            appearance_dims: 12,
        }
    }
}

/// Random corruption of video segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionConfig {
    /// Probability that an utterance receives distorted segments.
    pub probability: f64,
    /// Maximum number of distorted segments per utterance.
    pub max_segments: usize,
    /// Segment length range as a fraction of the video length.
    pub segment_fraction: (f64, f64),
    pub max_brightness: f64,
    pub blur_widths: Vec<usize>,
    pub max_rotation_deg: f64,
    /// Standard deviation of the noise on the detector-confidence channel.
    pub confidence_noise: f64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            max_segments: 2,
            segment_fraction: (0.2, 0.5),
            max_brightness: 0.3,
            blur_widths: vec![1, 3, 5],
            max_rotation_deg: 15.0,
            confidence_noise: 0.05,
        }
    }
}

fn range_ok(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && r.0 <= r.1
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, reason: String| Err(Error::config(path, reason));
        if self.vocab_size < 1 {
            return err("world.vocab_size", "need at least 1 word".into());
        }
        if self.states_per_word < 1 {
            return err("world.states_per_word", "every word needs at least 1 state".into());
        }
        let needed = self.vocab_size * self.states_per_word;
        if needed < 2 {
            return err("world.vocab_size", "the world needs at least 2 states".into());
        }
        if let Some(s) = self.num_states {
            if s != needed {
                return err(
                    "world.num_states",
                    format!("{s} states given but the lexicon needs exactly {needed}"),
                );
            }
        }
        if !(self.mean_duration >= 1.0) {
            return err("world.mean_duration", "mean duration must be at least 1 frame".into());
        }
        if !(self.lm_concentration > 0.0) {
            return err("world.lm_concentration", "must be positive".into());
        }
        if self.calibration_utterances < 1 {
            return err(
                "world.calibration_utterances",
                "need at least one calibration utterance".into(),
            );
        }
        let a = &self.audio;
        if !(a.base_rms > 0.0) || !range_ok(a.amplitude) || a.amplitude.0 <= 0.0 {
            return err("world.audio.amplitude", "amplitudes must be positive".into());
        }
        if !range_ok(a.f0) || a.f0.0 < 50.0 || a.f0.1 > 500.0 {
            return err("world.audio.f0", "f0 range must lie within 50-500 Hz".into());
        }
        if !range_ok(a.formant_hz) || !range_ok(a.formant_bw) || a.formant_bw.0 <= 0.0 {
            return err("world.audio.formant_hz", "invalid formant ranges".into());
        }
        if a.bands < 1 || !range_ok(a.band_range) || a.band_range.1 > 8000.0 {
            return err("world.audio.bands", "need at least one band below 8 kHz".into());
        }
        let v = &self.video;
        if v.visemes < 1 {
            return err("world.video.visemes", "need at least one viseme class".into());
        }
        if v.appearance_dims < 1 || v.appearance_dims > 1024 {
            return err("world.video.appearance_dims", "must lie in 1..=1024".into());
        }
        let d = &self.distortion;
        if !(0.0..=1.0).contains(&d.probability) {
            return err("world.distortion.probability", "must lie in [0, 1]".into());
        }
        if !range_ok(d.segment_fraction) || d.segment_fraction.0 <= 0.0 || d.segment_fraction.1 > 1.0 {
            return err("world.distortion.segment_fraction", "must lie in (0, 1]".into());
        }
        if d.blur_widths.is_empty() || d.blur_widths.iter().any(|w| w % 2 == 0) {
            return err(
                "world.distortion.blur_widths",
                "widths must be odd and non-empty".into(),
            );
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.vocab_size * self.states_per_word
    }
}
